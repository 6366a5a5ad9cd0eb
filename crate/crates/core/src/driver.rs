//! Coupled single-column time stepping: temperatures evolve under the
//! heating rates and surface fluxes of a radiation source, so emulator
//! errors feed back into the emulator's own inputs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{validate_column, AtmosphericColumn, Mode, RadiationResult, Surface, T_MAX, T_MIN};
use crate::emulator::{emulate_column, EmulatorBank};
use crate::error::{Error, Result};
use crate::refrad::{reference_radiation_unchecked, RefRadConfig, STEFAN_BOLTZMANN};
use crate::scenegen::{solar_geometry, Scene, SceneSeries, Timestamp};

/// Longest stable forward-Euler step, seconds.
pub const MAX_DT: f64 = 1800.0;

/// Anything that can supply both radiation modes for a column.
pub trait RadiationSource {
    fn radiation(&self, col: &AtmosphericColumn, mode: Mode) -> Result<RadiationResult>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference(pub RefRadConfig);

impl RadiationSource for Reference {
    fn radiation(&self, col: &AtmosphericColumn, mode: Mode) -> Result<RadiationResult> {
        Ok(reference_radiation_unchecked(col, mode, &self.0))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Emulator<'a>(pub &'a EmulatorBank);

impl RadiationSource for Emulator<'_> {
    fn radiation(&self, col: &AtmosphericColumn, mode: Mode) -> Result<RadiationResult> {
        emulate_column(self.0, col, mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceParams {
    /// Surface heat capacity, J/m²/K.
    pub c_land: f64,
    pub c_ocean: f64,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        Self {
            c_land: 2e5,
            c_ocean: 2e7,
        }
    }
}

impl SurfaceParams {
    pub fn capacity(&self, surface: Surface) -> f64 {
        match surface {
            Surface::Land => self.c_land,
            Surface::Ocean => self.c_ocean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnState {
    pub column: AtmosphericColumn,
    pub t: Timestamp,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: ColumnState,
    /// Radiation evaluated on the state at the start of the step.
    pub lw: RadiationResult,
    pub sw: RadiationResult,
    pub clamps: usize,
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::InvalidArgument(format!("dt must be in (0, {MAX_DT}] s, got {dt}")));
    }
    Ok(())
}

fn clamp_count(v: &mut f64) -> usize {
    let c = v.clamp(T_MIN, T_MAX);
    let hit = (c != *v) as usize;
    *v = c;
    hit
}

/// Advances layer temperatures and skin temperature by one forward-Euler
/// step of `dt` seconds, then updates the insolation for the new time.
pub fn step(state: &ColumnState, source: &dyn RadiationSource, dt: f64, surface: &SurfaceParams) -> Result<StepOutput> {
    check_dt(dt)?;
    let col = &state.column;
    validate_column(col).into_result()?;
    let lw = source.radiation(col, Mode::Lw)?;
    let sw = source.radiation(col, Mode::Sw)?;
    let mut next = col.clone();
    let mut clamps = 0;
    for (l, t) in next.t_layer.iter_mut().enumerate() {
        *t += (lw.heating[l] + sw.heating[l]) * dt / 86400.0;
        clamps += clamp_count(t);
    }
    let net = sw.flux_bot_down * (1.0 - col.albedo)
        + col.emissivity * (lw.flux_bot_down - STEFAN_BOLTZMANN * col.t_skin.powi(4));
    next.t_skin += dt * net / surface.capacity(col.surface);
    clamps += clamp_count(&mut next.t_skin);
    let t = state.t + dt.round() as Timestamp;
    next.mu0_s0 = solar_geometry(state.lat, state.lon, t);
    Ok(StepOutput {
        state: ColumnState {
            column: next,
            t,
            lat: state.lat,
            lon: state.lon,
        },
        lw,
        sw,
        clamps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    /// `n_steps + 1` states, the initial one first.
    pub states: Vec<ColumnState>,
    /// Radiation at the start of each step.
    pub lw: Vec<RadiationResult>,
    pub sw: Vec<RadiationResult>,
    pub clamp_count: usize,
}

impl Trajectory {
    pub fn t_skin(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.column.t_skin).collect()
    }

    /// Columns: t, Tskin, temperatures of `layers`, and the six boundary
    /// fluxes of the step starting at that state (empty on the last row).
    pub fn to_csv(&self, layers: &[usize]) -> String {
        let mut s = String::from("t,t_skin");
        for l in layers {
            let _ = write!(s, ",t_layer_{l}");
        }
        s.push_str(",LWUPT,LWUPB,LWDNB,SWUPT,SWDNB,SWUPB\n");
        for (k, st) in self.states.iter().enumerate() {
            let _ = write!(s, "{},{}", st.t, st.column.t_skin);
            for &l in layers {
                let _ = write!(s, ",{}", st.column.t_layer[l]);
            }
            match (self.lw.get(k), self.sw.get(k)) {
                (Some(lw), Some(sw)) => {
                    let _ = writeln!(
                        s,
                        ",{},{},{},{},{},{}",
                        lw.flux_top_up,
                        lw.flux_bot_up,
                        lw.flux_bot_down,
                        sw.flux_top_up,
                        sw.flux_bot_down,
                        sw.flux_bot_up
                    );
                }
                _ => s.push_str(",,,,,,\n"),
            }
        }
        s
    }
}

pub fn run_coupled(
    initial: &ColumnState,
    source: &dyn RadiationSource,
    n_steps: usize,
    dt: f64,
    surface: &SurfaceParams,
) -> Result<Trajectory> {
    check_dt(dt)?;
    validate_column(&initial.column).into_result()?;
    let mut traj = Trajectory {
        dt,
        states: vec![initial.clone()],
        lw: Vec::with_capacity(n_steps),
        sw: Vec::with_capacity(n_steps),
        clamp_count: 0,
    };
    for _ in 0..n_steps {
        let out = step(traj.states.last().expect("non-empty"), source, dt, surface)?;
        traj.states.push(out.state);
        traj.lw.push(out.lw);
        traj.sw.push(out.sw);
        traj.clamp_count += out.clamps;
    }
    Ok(traj)
}

/// State of cell `(i, j)` of a scene.
pub fn column_state(scene: &Scene, i: usize, j: usize) -> ColumnState {
    ColumnState {
        column: scene.column(i, j).clone(),
        t: scene.timestamp,
        lat: scene.lat(j),
        lon: scene.lon(i),
    }
}

/// Forcing that holds `scene` fixed and only advances time and insolation:
/// `n` scenes at spacing `dt`, the first being `scene` itself. Running
/// [`run_coupled_series`] on it is [`run_coupled`] for every cell.
pub fn frozen_forcing(scene: &Scene, dt: i64, n: usize) -> impl Iterator<Item = Result<Scene>> + '_ {
    (0..n).map(move |k| {
        let mut s = scene.clone();
        s.timestamp = scene.timestamp + k as i64 * dt;
        if k > 0 {
            for i in 0..s.nx {
                for j in 0..s.ny {
                    let (lat, lon) = (s.lat(j), s.lon(i));
                    let c = s.idx(i, j);
                    s.columns[c].mu0_s0 = solar_geometry(lat, lon, s.timestamp);
                }
            }
        }
        Ok(s)
    })
}

/// Runs every cell of a sequence of forcing scenes: clouds, moisture,
/// ozone, pressure and wind come from each forcing scene, while layer and
/// skin temperatures evolve under `source`. The spacing of the forcing
/// timestamps is the time step. Returns the evolved series (the first
/// scene unchanged) and the number of clamp events.
pub fn run_coupled_series<I>(
    forcing: I,
    source: &dyn RadiationSource,
    surface: &SurfaceParams,
) -> Result<(SceneSeries, usize)>
where
    I: IntoIterator<Item = Result<Scene>>,
{
    let mut forcing = forcing.into_iter();
    let first = forcing
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty forcing series".into()))??;
    let mut out = vec![first];
    let mut clamps = 0;
    for next in forcing {
        let mut scene = next?;
        let prev = out.last().expect("non-empty");
        if (scene.nx, scene.ny) != (prev.nx, prev.ny) {
            return Err(Error::Shape("forcing scenes differ in shape".into()));
        }
        let dt = (scene.timestamp - prev.timestamp) as f64;
        for i in 0..prev.nx {
            for j in 0..prev.ny {
                let c = prev.idx(i, j);
                let out = step(&column_state(prev, i, j), source, dt, surface)?;
                clamps += out.clamps;
                let col = &mut scene.columns[c];
                col.t_layer = out.state.column.t_layer;
                col.t_skin = out.state.column.t_skin;
            }
        }
        out.push(scene);
    }
    Ok((SceneSeries { scenes: out }, clamps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDivergence {
    pub t: Timestamp,
    pub t_skin_abs_err: f64,
    pub t_layer_rmse: f64,
    pub t_layer_max_abs_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub steps: Vec<StepDivergence>,
    pub max_t_skin_abs_err: f64,
    pub time_of_max_t_skin: Timestamp,
    pub max_t_layer_abs_err: f64,
}

impl DivergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,t_skin_abs_err,t_layer_rmse,t_layer_max_abs_err\n");
        for d in &self.steps {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                d.t, d.t_skin_abs_err, d.t_layer_rmse, d.t_layer_max_abs_err
            );
        }
        s
    }
}

pub fn compare_trajectories(a: &Trajectory, b: &Trajectory) -> Result<DivergenceReport> {
    if a.states.len() != b.states.len() {
        return Err(Error::Shape(format!(
            "trajectories have {} and {} states",
            a.states.len(),
            b.states.len()
        )));
    }
    let mut steps = Vec::with_capacity(a.states.len());
    for (x, y) in a.states.iter().zip(&b.states) {
        if x.t != y.t {
            return Err(Error::InvalidArgument(format!(
                "misaligned timestamps {} and {}",
                x.t, y.t
            )));
        }
        let (mut sq, mut mx) = (0.0, 0.0f64);
        for (u, v) in x.column.t_layer.iter().zip(&y.column.t_layer) {
            let d = u - v;
            sq += d * d;
            mx = mx.max(d.abs());
        }
        steps.push(StepDivergence {
            t: x.t,
            t_skin_abs_err: (x.column.t_skin - y.column.t_skin).abs(),
            t_layer_rmse: (sq / x.column.t_layer.len() as f64).sqrt(),
            t_layer_max_abs_err: mx,
        });
    }
    let worst = steps
        .iter()
        .fold(None::<&StepDivergence>, |best, d| match best {
            Some(b) if b.t_skin_abs_err >= d.t_skin_abs_err => Some(b),
            _ => Some(d),
        })
        .expect("at least the initial state");
    Ok(DivergenceReport {
        max_t_skin_abs_err: worst.t_skin_abs_err,
        time_of_max_t_skin: worst.t,
        max_t_layer_abs_err: steps.iter().map(|d| d.t_layer_max_abs_err).fold(0.0, f64::max),
        steps,
    })
}
