//! Broadband reference radiation scheme.
//!
//! Longwave is a gray two-stream emission/absorption model; shortwave is a
//! single direct beam with absorption and a once-scattered upward source.
//! The up-going shortwave beam is attenuated but not re-scattered, which
//! keeps the scheme single-pass and its energy budget exactly closed.
//! This module produces the ground-truth targets the emulators learn.

use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_column, AtmosphericColumn, LevelGrid, Mode, RadiationResult, N_INTERFACES, N_LAYERS,
};
use crate::error::{Error, Result};

pub const STEFAN_BOLTZMANN: f64 = 5.670374419e-8;
pub const SOLAR_CONSTANT: f64 = 1361.0;
const SECONDS_PER_DAY: f64 = 86400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefRadConfig {
    /// LW optical depth per (kg/kg · hPa) of water vapour.
    pub b_v: f64,
    /// LW optical depth per (kg/kg · hPa) of ozone.
    pub b_o: f64,
    /// LW optical depth per unit cloud fraction in a layer.
    pub b_c: f64,
    /// SW absorption per (kg/kg · hPa) of water vapour.
    pub a_v: f64,
    /// SW absorption per (kg/kg · hPa) of ozone.
    pub a_o: f64,
    /// SW scattering optical depth per unit cloud fraction in a layer.
    pub a_c: f64,
    pub diffusivity: f64,
    pub sigma_sb: f64,
    /// g / c_p in K per (J/kg).
    pub g_over_cp: f64,
}

impl Default for RefRadConfig {
    fn default() -> Self {
        Self {
            b_v: 0.8,
            b_o: 30.0,
            b_c: 0.25,
            a_v: 0.08,
            a_o: 8.0,
            a_c: 0.9,
            diffusivity: 1.66,
            sigma_sb: STEFAN_BOLTZMANN,
            g_over_cp: 9.81 / 1004.0,
        }
    }
}

impl RefRadConfig {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            self.b_v,
            self.b_o,
            self.b_c,
            self.a_v,
            self.a_o,
            self.a_c,
            self.diffusivity,
            self.g_over_cp,
        ];
        if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidArgument(
                "radiation coefficients must be finite and non-negative".into(),
            ));
        }
        if self.sigma_sb != STEFAN_BOLTZMANN {
            return Err(Error::InvalidArgument(
                "sigma_sb is fixed at 5.670374419e-8".into(),
            ));
        }
        Ok(())
    }
}

/// Upward and downward broadband flux at the 45 interfaces, top first.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxProfile {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

impl FluxProfile {
    pub fn zeros() -> Self {
        Self {
            up: vec![0.0; N_INTERFACES],
            down: vec![0.0; N_INTERFACES],
        }
    }

    pub fn net_down(&self) -> Vec<f64> {
        self.down.iter().zip(&self.up).map(|(d, u)| d - u).collect()
    }
}

/// Shortwave fluxes plus where the beam energy went.
#[derive(Debug, Clone, PartialEq)]
pub struct SwBudget {
    pub fluxes: FluxProfile,
    /// Absorbed from the down-going beam, per layer.
    pub absorbed_down: Vec<f64>,
    /// Extinguished from the up-going beam, per layer.
    pub absorbed_up: Vec<f64>,
    pub absorbed_surface: f64,
}

pub fn lw_fluxes(col: &AtmosphericColumn, cfg: &RefRadConfig) -> Result<FluxProfile> {
    validate_column(col).into_result()?;
    Ok(lw_fluxes_unchecked(col, cfg))
}

pub(crate) fn lw_fluxes_unchecked(col: &AtmosphericColumn, cfg: &RefRadConfig) -> FluxProfile {
    let mut emissivity = [0.0; N_LAYERS];
    let mut planck = [0.0; N_LAYERS];
    for i in 0..N_LAYERS {
        let tau = (cfg.b_v * col.qv_layer[i] + cfg.b_o * col.o3_layer[i]) * col.grid.dp(i)
            + cfg.b_c * col.cf_layer[i];
        emissivity[i] = 1.0 - (-cfg.diffusivity * tau).exp();
        planck[i] = cfg.sigma_sb * col.t_layer[i].powi(4);
    }

    let mut fp = FluxProfile::zeros();
    for i in 0..N_LAYERS {
        fp.down[i + 1] = fp.down[i] * (1.0 - emissivity[i]) + emissivity[i] * planck[i];
    }
    fp.up[N_LAYERS] = col.emissivity * cfg.sigma_sb * col.t_skin.powi(4)
        + (1.0 - col.emissivity) * fp.down[N_LAYERS];
    for i in (0..N_LAYERS).rev() {
        fp.up[i] = fp.up[i + 1] * (1.0 - emissivity[i]) + emissivity[i] * planck[i];
    }
    fp
}

pub fn sw_fluxes(col: &AtmosphericColumn, cfg: &RefRadConfig) -> Result<FluxProfile> {
    validate_column(col).into_result()?;
    Ok(sw_budget_unchecked(col, cfg).fluxes)
}

/// Shortwave fluxes with the per-layer absorption bookkeeping.
pub fn sw_budget(col: &AtmosphericColumn, cfg: &RefRadConfig) -> Result<SwBudget> {
    validate_column(col).into_result()?;
    Ok(sw_budget_unchecked(col, cfg))
}

pub(crate) fn sw_budget_unchecked(col: &AtmosphericColumn, cfg: &RefRadConfig) -> SwBudget {
    let mut b = SwBudget {
        fluxes: FluxProfile::zeros(),
        absorbed_down: vec![0.0; N_LAYERS],
        absorbed_up: vec![0.0; N_LAYERS],
        absorbed_surface: 0.0,
    };
    if col.mu0_s0 <= 0.0 {
        return b;
    }
    let mu = (col.mu0_s0 / SOLAR_CONSTANT).clamp(0.05, 1.0);

    let mut trans = [0.0; N_LAYERS];
    let mut source = [0.0; N_LAYERS];
    let fp = &mut b.fluxes;
    fp.down[0] = col.mu0_s0;
    for i in 0..N_LAYERS {
        let tau_abs = (cfg.a_v * col.qv_layer[i] + cfg.a_o * col.o3_layer[i]) * col.grid.dp(i);
        let tau_sct = cfg.a_c * col.cf_layer[i];
        let tau = tau_abs + tau_sct;
        let omega = if tau > 0.0 { tau_sct / tau } else { 0.0 };
        trans[i] = (-tau / mu).exp();
        let removed = fp.down[i] * (1.0 - trans[i]);
        source[i] = removed * omega;
        b.absorbed_down[i] = removed * (1.0 - omega);
        fp.down[i + 1] = fp.down[i] * trans[i];
    }
    let d_sfc = fp.down[N_LAYERS];
    fp.up[N_LAYERS] = col.albedo * d_sfc;
    b.absorbed_surface = (1.0 - col.albedo) * d_sfc;
    for i in (0..N_LAYERS).rev() {
        b.absorbed_up[i] = fp.up[i + 1] * (1.0 - trans[i]);
        fp.up[i] = fp.up[i + 1] * trans[i] + source[i];
    }
    b
}

/// Layer heating in K/day from the divergence of the net downward flux.
///
/// A layer warms when more net flux enters through its top interface than
/// leaves through its bottom one.
pub fn heating_rates(fp: &FluxProfile, grid: &LevelGrid, cfg: &RefRadConfig) -> Result<Vec<f64>> {
    if fp.up.len() != N_INTERFACES || fp.down.len() != N_INTERFACES {
        return Err(Error::Shape(format!(
            "flux profile needs {N_INTERFACES} interfaces, got up={} down={}",
            fp.up.len(),
            fp.down.len()
        )));
    }
    let mut out = Vec::with_capacity(N_LAYERS);
    for i in 0..N_LAYERS {
        let dp = grid.dp(i);
        if dp <= 0.0 {
            return Err(Error::InvalidArgument(format!("zero-thickness layer {i}")));
        }
        let f_top = fp.down[i] - fp.up[i];
        let f_bot = fp.down[i + 1] - fp.up[i + 1];
        out.push(cfg.g_over_cp * (f_top - f_bot) / (dp * 100.0) * SECONDS_PER_DAY);
    }
    Ok(out)
}

pub fn reference_radiation(
    col: &AtmosphericColumn,
    mode: Mode,
    cfg: &RefRadConfig,
) -> Result<RadiationResult> {
    validate_column(col).into_result()?;
    Ok(reference_radiation_unchecked(col, mode, cfg))
}

/// [`reference_radiation`] for columns the caller has already validated.
pub fn reference_radiation_unchecked(
    col: &AtmosphericColumn,
    mode: Mode,
    cfg: &RefRadConfig,
) -> RadiationResult {
    if mode == Mode::Sw && col.mu0_s0 <= 0.0 {
        return RadiationResult::zeros(Mode::Sw);
    }
    let fp = match mode {
        Mode::Lw => lw_fluxes_unchecked(col, cfg),
        Mode::Sw => sw_budget_unchecked(col, cfg).fluxes,
    };
    let heating = heating_rates(&fp, &col.grid, cfg).expect("grid invariants hold");
    RadiationResult {
        mode,
        heating,
        flux_top_up: fp.up[0],
        flux_bot_up: fp.up[N_LAYERS],
        flux_bot_down: fp.down[N_LAYERS],
    }
}
