//! Physical data types shared by every stage of the pipeline.
//!
//! Conventions used throughout the crate:
//! - vertical index 0 is the top of the atmosphere, the last index is the surface;
//! - units are hPa, K, kg/kg, W/m² and K/day.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_LAYERS: usize = 44;
pub const N_INTERFACES: usize = N_LAYERS + 1;
pub const N_OUTPUTS: usize = N_LAYERS + 3;
pub const N_FEATURES_CLEAR: usize = 4 * N_LAYERS + 2;
pub const N_FEATURES_CLOUDY: usize = 5 * N_LAYERS + 2;

pub const T_MIN: f64 = 150.0;
pub const T_MAX: f64 = 400.0;
pub const MU0_S0_MAX: f64 = 1450.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    Lw,
    Sw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sky {
    Clear,
    Cloudy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Surface {
    Land,
    Ocean,
}

impl Sky {
    pub fn n_features(self) -> usize {
        match self {
            Sky::Clear => N_FEATURES_CLEAR,
            Sky::Cloudy => N_FEATURES_CLOUDY,
        }
    }
}

/// Selects one of the eight sub-models.
///
/// The three-letter code follows the land-use / weather / radiation order:
/// `L1S` is clear-sky shortwave over land, `O2L` cloudy longwave over ocean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelKey {
    pub surface: Surface,
    pub sky: Sky,
    pub radiation: Mode,
}

impl ModelKey {
    pub const fn new(radiation: Mode, sky: Sky, surface: Surface) -> Self {
        Self {
            surface,
            sky,
            radiation,
        }
    }

    pub fn all() -> [ModelKey; 8] {
        let mut out = [ModelKey::new(Mode::Lw, Sky::Clear, Surface::Land); 8];
        let mut n = 0;
        for surface in [Surface::Land, Surface::Ocean] {
            for sky in [Sky::Clear, Sky::Cloudy] {
                for radiation in [Mode::Lw, Mode::Sw] {
                    out[n] = ModelKey::new(radiation, sky, surface);
                    n += 1;
                }
            }
        }
        out
    }

    pub fn n_features(&self) -> usize {
        self.sky.n_features()
    }

    pub fn code(&self) -> String {
        let bytes = self.to_bytes();
        bytes.iter().map(|&b| b as char).collect()
    }

    /// The three ASCII code bytes; this is also the on-disk key encoding.
    pub fn to_bytes(&self) -> [u8; 3] {
        [
            match self.surface {
                Surface::Land => b'L',
                Surface::Ocean => b'O',
            },
            match self.sky {
                Sky::Clear => b'1',
                Sky::Cloudy => b'2',
            },
            match self.radiation {
                Mode::Lw => b'L',
                Mode::Sw => b'S',
            },
        ]
    }

    pub fn from_bytes(b: [u8; 3]) -> Option<Self> {
        let surface = match b[0] {
            b'L' => Surface::Land,
            b'O' => Surface::Ocean,
            _ => return None,
        };
        let sky = match b[1] {
            b'1' => Sky::Clear,
            b'2' => Sky::Cloudy,
            _ => return None,
        };
        let radiation = match b[2] {
            b'L' => Mode::Lw,
            b'S' => Mode::Sw,
            _ => return None,
        };
        Some(Self {
            surface,
            sky,
            radiation,
        })
    }
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for ModelKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let b = s.as_bytes();
        if b.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "model key {s:?} must be three characters like L1S or O2L"
            )));
        }
        ModelKey::from_bytes([b[0], b[1], b[2]]).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "model key {s:?}: expected [L|O][1|2][L|S], e.g. L1S"
            ))
        })
    }
}

/// Interface pressures of a fixed 44-layer column.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGrid {
    p_interface: Vec<f64>,
}

impl LevelGrid {
    pub fn new(p_interface: Vec<f64>) -> Result<Self> {
        if p_interface.len() != N_INTERFACES {
            return Err(Error::InvalidArgument(format!(
                "level grid needs {N_INTERFACES} interfaces, got {}",
                p_interface.len()
            )));
        }
        if p_interface.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidArgument(
                "interface pressures must be finite and positive".into(),
            ));
        }
        if p_interface.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "interface pressures must increase strictly from top to surface".into(),
            ));
        }
        Ok(Self { p_interface })
    }

    /// Stretched sigma grid from `p_top` to `p_surface`, finer near the surface.
    pub fn sigma(p_top: f64, p_surface: f64) -> Result<Self> {
        let p = (0..N_INTERFACES)
            .map(|k| {
                let s = k as f64 / N_LAYERS as f64;
                // half linear, half compressed toward the surface
                let sigma = 0.5 * s + 0.5 * (1.0 - (1.0 - s).powf(1.5));
                p_top + (p_surface - p_top) * sigma
            })
            .collect();
        Self::new(p)
    }

    /// 5 hPa top, 1013.25 hPa surface.
    pub fn standard() -> Self {
        Self::sigma(5.0, 1013.25).expect("standard grid is valid")
    }

    pub fn p_interface(&self) -> &[f64] {
        &self.p_interface
    }

    pub fn n_layers(&self) -> usize {
        N_LAYERS
    }

    pub fn dp(&self, layer: usize) -> f64 {
        self.p_interface[layer + 1] - self.p_interface[layer]
    }

    pub fn p_layer(&self, layer: usize) -> f64 {
        0.5 * (self.p_interface[layer] + self.p_interface[layer + 1])
    }

    pub fn p_layers(&self) -> Vec<f64> {
        (0..N_LAYERS).map(|i| self.p_layer(i)).collect()
    }

    pub fn p_surface(&self) -> f64 {
        self.p_interface[N_LAYERS]
    }
}

/// One grid cell's vertical state plus the surface scalars the radiation
/// schemes need.
#[derive(Debug, Clone, PartialEq)]
pub struct AtmosphericColumn {
    pub grid: Arc<LevelGrid>,
    pub t_layer: Vec<f64>,
    pub qv_layer: Vec<f64>,
    pub o3_layer: Vec<f64>,
    pub cf_layer: Vec<f64>,
    pub t_skin: f64,
    pub emissivity: f64,
    pub albedo: f64,
    pub mu0_s0: f64,
    pub surface: Surface,
}

impl AtmosphericColumn {
    /// Mid-latitude standard-atmosphere column over land, no cloud, sun at
    /// 60° zenith.
    pub fn standard() -> Self {
        let grid = Arc::new(LevelGrid::standard());
        let p = grid.p_layers();
        let t_surface = 288.15;
        let p_s = grid.p_surface();
        let t_layer = p
            .iter()
            .map(|&pl| {
                let z_km = 7.29 * (p_s / pl).ln();
                (t_surface - 6.5 * z_km).max(216.65)
            })
            .collect();
        let qv_layer = p.iter().map(|&pl| 0.01 * (pl / p_s).powi(3)).collect();
        let o3_layer = p
            .iter()
            .map(|&pl| {
                let x = (pl.ln() - 20f64.ln()) / 0.9;
                8e-6 * (-0.5 * x * x).exp()
            })
            .collect();
        Self {
            grid,
            t_layer,
            qv_layer,
            o3_layer,
            cf_layer: vec![0.0; N_LAYERS],
            t_skin: 290.0,
            emissivity: 0.95,
            albedo: 0.2,
            mu0_s0: 0.5 * 1361.0,
            surface: Surface::Land,
        }
    }

    pub fn max_cloud_fraction(&self) -> f64 {
        self.cf_layer.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_daylight(&self) -> bool {
        self.mu0_s0 > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub layer: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(l) => write!(f, "{} at layer {l}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidColumn(self.to_string()))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Lists every violated column invariant. An empty report means the column
/// is valid.
pub fn validate_column(col: &AtmosphericColumn) -> ValidationReport {
    let mut v = Vec::new();
    let mut push = |field: &'static str, layer: Option<usize>, message: String| {
        v.push(Violation {
            field,
            layer,
            message,
        })
    };

    let layers: [(&'static str, &[f64]); 4] = [
        ("t_layer", &col.t_layer),
        ("qv_layer", &col.qv_layer),
        ("o3_layer", &col.o3_layer),
        ("cf_layer", &col.cf_layer),
    ];
    for (name, arr) in layers {
        if arr.len() != N_LAYERS {
            push(
                name,
                None,
                format!("{name} length mismatch: expected {N_LAYERS}, got {}", arr.len()),
            );
        }
    }
    for (i, &t) in col.t_layer.iter().enumerate() {
        if !(t > T_MIN && t < T_MAX) {
            push("t_layer", Some(i), format!("temperature {t} K out of ({T_MIN}, {T_MAX})"));
        }
    }
    for (i, &q) in col.qv_layer.iter().enumerate() {
        if !(q >= 0.0 && q.is_finite()) {
            push("qv_layer", Some(i), format!("qv {q} negative or non-finite"));
        }
    }
    for (i, &q) in col.o3_layer.iter().enumerate() {
        if !(q >= 0.0 && q.is_finite()) {
            push("o3_layer", Some(i), format!("o3 {q} negative or non-finite"));
        }
    }
    for (i, &c) in col.cf_layer.iter().enumerate() {
        if !(0.0..=1.0).contains(&c) {
            push("cf_layer", Some(i), format!("cf out of [0,1] ({c})"));
        }
    }
    if !(col.t_skin > T_MIN && col.t_skin < T_MAX) {
        push("t_skin", None, format!("t_skin {} K out of ({T_MIN}, {T_MAX})", col.t_skin));
    }
    if !(0.0..=1.0).contains(&col.emissivity) {
        push("emissivity", None, format!("emissivity out of [0,1] ({})", col.emissivity));
    }
    if !(0.0..=1.0).contains(&col.albedo) {
        push("albedo", None, format!("albedo out of [0,1] ({})", col.albedo));
    }
    if !(0.0..=MU0_S0_MAX).contains(&col.mu0_s0) {
        push("mu0_s0", None, format!("mu0_s0 out of [0, {MU0_S0_MAX}] ({})", col.mu0_s0));
    }
    ValidationReport { violations: v }
}

/// Cloudy iff the column-maximum cloud fraction exceeds `cf_threshold`.
pub fn classify_sky(col: &AtmosphericColumn, cf_threshold: f64) -> Result<Sky> {
    if !(0.0..1.0).contains(&cf_threshold) {
        return Err(Error::InvalidArgument(format!(
            "cf_threshold {cf_threshold} outside [0, 1)"
        )));
    }
    validate_column(col).into_result()?;
    Ok(sky_of(col, cf_threshold))
}

/// `classify_sky` for columns already known to be valid.
pub(crate) fn sky_of(col: &AtmosphericColumn, cf_threshold: f64) -> Sky {
    if col.max_cloud_fraction() > cf_threshold {
        Sky::Cloudy
    } else {
        Sky::Clear
    }
}

/// Network input for one column: `[p, t, qv, o3, (cf), s1, s2]`, with
/// `(s1, s2) = (t_skin, emissivity)` for longwave and `(mu0_s0, albedo)` for
/// shortwave.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub key: ModelKey,
    pub values: Vec<f64>,
}

pub fn assemble_features(col: &AtmosphericColumn, key: ModelKey) -> Result<FeatureVector> {
    validate_column(col).into_result()?;
    let sky = sky_of(col, 0.0);
    if sky != key.sky {
        return Err(Error::SkyMismatch {
            expected: key.sky,
            found: sky,
        });
    }
    let mut values = Vec::with_capacity(key.n_features());
    write_features(col, key, &mut values);
    Ok(FeatureVector { key, values })
}

/// Appends the feature layout for `key` to `out` without validation.
pub(crate) fn write_features(col: &AtmosphericColumn, key: ModelKey, out: &mut Vec<f64>) {
    out.extend((0..N_LAYERS).map(|i| col.grid.p_layer(i)));
    out.extend_from_slice(&col.t_layer);
    out.extend_from_slice(&col.qv_layer);
    out.extend_from_slice(&col.o3_layer);
    if key.sky == Sky::Cloudy {
        out.extend_from_slice(&col.cf_layer);
    }
    match key.radiation {
        Mode::Lw => out.extend([col.t_skin, col.emissivity]),
        Mode::Sw => out.extend([col.mu0_s0, col.albedo]),
    }
}

/// Fields recoverable from a feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFields {
    pub p_layer: Vec<f64>,
    pub t_layer: Vec<f64>,
    pub qv_layer: Vec<f64>,
    pub o3_layer: Vec<f64>,
    /// All zeros for clear-sky vectors.
    pub cf_layer: Vec<f64>,
    pub scalars: [f64; 2],
}

/// Inverse of [`assemble_features`].
pub fn disassemble_features(fv: &FeatureVector) -> Result<FeatureFields> {
    let n = fv.key.n_features();
    if fv.values.len() != n {
        return Err(Error::Shape(format!(
            "feature vector for {} has length {}, expected {n}",
            fv.key,
            fv.values.len()
        )));
    }
    let block = |b: usize| fv.values[b * N_LAYERS..(b + 1) * N_LAYERS].to_vec();
    let cf_layer = match fv.key.sky {
        Sky::Cloudy => block(4),
        Sky::Clear => vec![0.0; N_LAYERS],
    };
    Ok(FeatureFields {
        p_layer: block(0),
        t_layer: block(1),
        qv_layer: block(2),
        o3_layer: block(3),
        cf_layer,
        scalars: [fv.values[n - 2], fv.values[n - 1]],
    })
}

/// 44 heating rates plus the three boundary fluxes for one radiation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationResult {
    pub mode: Mode,
    /// K/day, top to surface.
    pub heating: Vec<f64>,
    pub flux_top_up: f64,
    pub flux_bot_up: f64,
    pub flux_bot_down: f64,
}

impl RadiationResult {
    pub fn zeros(mode: Mode) -> Self {
        Self {
            mode,
            heating: vec![0.0; N_LAYERS],
            flux_top_up: 0.0,
            flux_bot_up: 0.0,
            flux_bot_down: 0.0,
        }
    }

    /// Output-table order: heating, then UPT, UPB, DNB for longwave and
    /// UPT, DNB, UPB for shortwave.
    pub fn to_targets(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(N_OUTPUTS);
        out.extend_from_slice(&self.heating);
        match self.mode {
            Mode::Lw => out.extend([self.flux_top_up, self.flux_bot_up, self.flux_bot_down]),
            Mode::Sw => out.extend([self.flux_top_up, self.flux_bot_down, self.flux_bot_up]),
        }
        out
    }

    pub fn from_targets(mode: Mode, t: &[f64]) -> Result<Self> {
        if t.len() != N_OUTPUTS {
            return Err(Error::Shape(format!(
                "expected {N_OUTPUTS} radiation outputs, got {}",
                t.len()
            )));
        }
        let heating = t[..N_LAYERS].to_vec();
        let (a, b, c) = (t[N_LAYERS], t[N_LAYERS + 1], t[N_LAYERS + 2]);
        let (flux_top_up, flux_bot_up, flux_bot_down) = match mode {
            Mode::Lw => (a, b, c),
            Mode::Sw => (a, c, b),
        };
        Ok(Self {
            mode,
            heating,
            flux_top_up,
            flux_bot_up,
            flux_bot_down,
        })
    }

    /// Names of the three flux outputs in target order.
    pub fn flux_names(mode: Mode) -> [&'static str; 3] {
        match mode {
            Mode::Lw => ["LWUPT", "LWUPB", "LWDNB"],
            Mode::Sw => ["SWUPT", "SWDNB", "SWUPB"],
        }
    }
}
