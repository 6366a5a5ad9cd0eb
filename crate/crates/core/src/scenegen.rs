//! Deterministic synthetic weather scenes.
//!
//! Every field is an analytic function of position and time built from
//! seeded sinusoids and moving 3-D cloud blobs, so a scene is reproducible
//! from `(spec, timestamp)` alone and columns can be generated in any order.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{read_file, write_file, Reader, Writer};
use crate::datapipe::DATASET_MAGIC;
use crate::domain::{AtmosphericColumn, LevelGrid, Surface, N_LAYERS, T_MAX, T_MIN};
use crate::error::{Error, FormatError, Result};
use crate::refrad::SOLAR_CONSTANT;

/// Seconds since the Unix epoch.
pub type Timestamp = i64;

/// 2022-09-01T00:00:00Z.
pub const SEPTEMBER_2022: Timestamp = 1_661_990_400;
/// 2022-07-01T00:00:00Z.
pub const JULY_2022: Timestamp = 1_656_633_600;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeasonParams {
    /// Mean near-surface air temperature, K.
    pub t_surface_mean: f64,
    /// Amplitude of horizontal temperature perturbations, K.
    pub t_surface_amplitude: f64,
    /// Multiplier on the surface water-vapour mixing ratio.
    pub humidity_scale: f64,
}

impl Default for SeasonParams {
    fn default() -> Self {
        Self {
            t_surface_mean: 298.0,
            t_surface_amplitude: 4.0,
            humidity_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudParams {
    pub blob_count: usize,
    /// Horizontal e-folding scale in grid cells.
    pub horizontal_extent: f64,
    /// Vertical e-folding scale in layers.
    pub vertical_extent: f64,
    pub max_cf: f64,
}

impl Default for CloudParams {
    fn default() -> Self {
        Self {
            blob_count: 12,
            horizontal_extent: 4.0,
            vertical_extent: 3.0,
            max_cf: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub nx: usize,
    pub ny: usize,
    /// Latitude of row `j = 0`, degrees north.
    pub lat0: f64,
    /// Longitude of column `i = 0`, degrees east.
    pub lon0: f64,
    pub dx_deg: f64,
    pub land_fraction: f64,
    pub season: SeasonParams,
    pub clouds: CloudParams,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            lat0: 27.0,
            lon0: 118.0,
            dx_deg: 0.1,
            land_fraction: 0.5,
            season: SeasonParams::default(),
            clouds: CloudParams::default(),
            seed: 7,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 || self.ny < 8 {
            return Err(Error::InvalidArgument(format!(
                "scene must be at least 8x8, got {}x{}",
                self.nx, self.ny
            )));
        }
        let finite = [
            self.lat0,
            self.lon0,
            self.dx_deg,
            self.land_fraction,
            self.season.t_surface_mean,
            self.season.t_surface_amplitude,
            self.season.humidity_scale,
            self.clouds.horizontal_extent,
            self.clouds.vertical_extent,
            self.clouds.max_cf,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("scene parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.land_fraction) {
            return Err(Error::InvalidArgument("land_fraction outside [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.clouds.max_cf) {
            return Err(Error::InvalidArgument("max_cf outside [0, 1]".into()));
        }
        if self.clouds.horizontal_extent <= 0.0 || self.clouds.vertical_extent <= 0.0 {
            return Err(Error::InvalidArgument("cloud extents must be positive".into()));
        }
        if !(200.0..=330.0).contains(&self.season.t_surface_mean)
            || !(0.0..=30.0).contains(&self.season.t_surface_amplitude)
            || !(0.0..=3.0).contains(&self.season.humidity_scale)
        {
            return Err(Error::InvalidArgument(
                "season parameters outside the supported range".into(),
            ));
        }
        Ok(())
    }

    pub fn lat(&self, j: usize) -> f64 {
        self.lat0 + j as f64 * self.dx_deg
    }

    pub fn lon(&self, i: usize) -> f64 {
        self.lon0 + i as f64 * self.dx_deg
    }
}

/// A 2-D field of columns with surface diagnostics. Cells are stored
/// row-major with index `i * ny + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub nx: usize,
    pub ny: usize,
    pub lat0: f64,
    pub lon0: f64,
    pub dx_deg: f64,
    pub timestamp: Timestamp,
    pub columns: Vec<AtmosphericColumn>,
    /// hPa.
    pub p_surface: Vec<f64>,
    /// m/s.
    pub wind10: Vec<f64>,
    pub land_mask: Vec<bool>,
}

impl Scene {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn column(&self, i: usize, j: usize) -> &AtmosphericColumn {
        &self.columns[self.idx(i, j)]
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn lat(&self, j: usize) -> f64 {
        self.lat0 + j as f64 * self.dx_deg
    }

    pub fn lon(&self, i: usize) -> f64 {
        self.lon0 + i as f64 * self.dx_deg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSeries {
    pub scenes: Vec<Scene>,
}

impl SceneSeries {
    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.scenes.first().map(|s| (s.nx, s.ny))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VortexSpec {
    pub center: (usize, usize),
    /// Central pressure depression, hPa.
    pub depth: f64,
    /// Radius of maximum wind, grid cells.
    pub radius: f64,
    pub v_max: f64,
}

/// Top-of-atmosphere downward shortwave, `S0 · max(0, cos θz)`, in W/m².
pub fn solar_geometry(lat_deg: f64, lon_deg: f64, t: Timestamp) -> f64 {
    let days = t as f64 / 86400.0;
    let day_of_year = days.rem_euclid(365.2422) + 1.0;
    let decl = (23.44f64).to_radians() * (2.0 * PI * (284.0 + day_of_year) / 365.0).sin();
    let utc_hours = days.rem_euclid(1.0) * 24.0;
    let solar_hours = utc_hours + lon_deg / 15.0;
    let hour_angle = (15.0 * (solar_hours - 12.0)).to_radians();
    let lat = lat_deg.to_radians();
    let cos_z = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    SOLAR_CONSTANT * cos_z.max(0.0)
}

/// Local solar hour in [0, 24) for a longitude; noon is 12.
pub fn local_solar_hour(lon_deg: f64, t: Timestamp) -> f64 {
    let utc_hours = (t as f64 / 3600.0).rem_euclid(24.0);
    (utc_hours + lon_deg / 15.0).rem_euclid(24.0)
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    kx: f64,
    ky: f64,
    omega: f64,
    phase: f64,
}

/// Sum of eight seeded travelling sinusoids; values roughly in [-1, 1].
#[derive(Debug, Clone)]
struct SmoothField {
    waves: [Wave; 8],
}

impl SmoothField {
    fn new(seed: u64, stream: u64, steady: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, stream));
        let waves = std::array::from_fn(|_| {
            let k = 2.0 * PI * rng.random_range(0.5..2.5);
            let dir = rng.random_range(0.0..2.0 * PI);
            let period_days = rng.random_range(1.0..4.0);
            Wave {
                kx: k * dir.cos(),
                ky: k * dir.sin(),
                omega: if steady { 0.0 } else { 2.0 * PI / period_days },
                phase: rng.random_range(0.0..2.0 * PI),
            }
        });
        Self { waves }
    }

    /// `x`, `y` in domain units (0..1 across the grid), `t_days` in days.
    fn eval(&self, x: f64, y: f64, t_days: f64) -> f64 {
        let s: f64 = self
            .waves
            .iter()
            .map(|w| (w.kx * x + w.ky * y - w.omega * t_days + w.phase).sin())
            .sum();
        s / 8f64.sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    x0: f64,
    y0: f64,
    vx: f64,
    vy: f64,
    layer: f64,
    sigma_h: f64,
    sigma_v: f64,
    amp: f64,
}

struct Generator {
    spec: SceneSpec,
    grid: Arc<LevelGrid>,
    temp: SmoothField,
    temp_upper: SmoothField,
    humid: SmoothField,
    ozone: SmoothField,
    albedo: SmoothField,
    pressure: SmoothField,
    wind: SmoothField,
    blobs: Vec<Blob>,
    land_mask: Vec<bool>,
}

const BLOB_CUTOFF: f64 = 3.0;

impl Generator {
    fn new(spec: &SceneSpec) -> Self {
        let seed = spec.seed;
        let land = SmoothField::new(seed, 5, true);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 100));
        let c = spec.clouds;
        let blobs = (0..c.blob_count)
            .map(|_| {
                // bell-shaped in height: most cloud mass sits mid-column
                let u: f64 = (0..3).map(|_| rng.random_range(0.0..1.0)).sum::<f64>() / 3.0;
                Blob {
                    x0: rng.random_range(0.0..1.0),
                    y0: rng.random_range(0.0..1.0),
                    vx: rng.random_range(-0.4..0.4),
                    vy: rng.random_range(-0.4..0.4),
                    layer: 3.0 + u * (N_LAYERS as f64 - 5.0),
                    sigma_h: c.horizontal_extent * rng.random_range(0.6..1.4),
                    sigma_v: c.vertical_extent * rng.random_range(0.5..1.5),
                    amp: c.max_cf * rng.random_range(0.5..1.0),
                }
            })
            .collect();

        let n = spec.nx * spec.ny;
        let mut values: Vec<(f64, usize)> = (0..n)
            .map(|idx| {
                let (i, j) = (idx / spec.ny, idx % spec.ny);
                let (x, y) = (i as f64 / spec.nx as f64, j as f64 / spec.ny as f64);
                (land.eval(x, y, 0.0), idx)
            })
            .collect();
        values.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let n_land = (spec.land_fraction * n as f64).round() as usize;
        let mut land_mask = vec![false; n];
        for &(_, idx) in values.iter().take(n_land) {
            land_mask[idx] = true;
        }

        Self {
            spec: *spec,
            grid: Arc::new(LevelGrid::standard()),
            temp: SmoothField::new(seed, 1, false),
            temp_upper: SmoothField::new(seed, 2, false),
            humid: SmoothField::new(seed, 3, false),
            ozone: SmoothField::new(seed, 4, false),
            albedo: SmoothField::new(seed, 6, true),
            pressure: SmoothField::new(seed, 7, false),
            wind: SmoothField::new(seed, 8, false),
            blobs,
            land_mask,
        }
    }

    fn cloud_profile(&self, i: usize, j: usize, t_days: f64) -> Vec<f64> {
        let s = &self.spec;
        let mut cf = vec![0.0; N_LAYERS];
        for b in &self.blobs {
            let cx = (b.x0 + b.vx * t_days).rem_euclid(1.0) * s.nx as f64;
            let cy = (b.y0 + b.vy * t_days).rem_euclid(1.0) * s.ny as f64;
            let dx = periodic(i as f64 - cx, s.nx as f64) / b.sigma_h;
            let dy = periodic(j as f64 - cy, s.ny as f64) / b.sigma_h;
            let dh2 = dx * dx + dy * dy;
            if dh2 > BLOB_CUTOFF * BLOB_CUTOFF {
                continue;
            }
            for (l, c) in cf.iter_mut().enumerate() {
                let dz = (l as f64 - b.layer) / b.sigma_v;
                let d2 = dh2 + dz * dz;
                if d2 <= BLOB_CUTOFF * BLOB_CUTOFF {
                    *c += b.amp * (-0.5 * d2).exp();
                }
            }
        }
        for c in &mut cf {
            *c = c.min(s.clouds.max_cf);
        }
        cf
    }

    fn scene(&self, t: Timestamp) -> Scene {
        let s = &self.spec;
        let t_days = t as f64 / 86400.0;
        let p = self.grid.p_layers();
        let p_s = self.grid.p_surface();
        let n = s.nx * s.ny;
        let mut columns = Vec::with_capacity(n);
        let mut p_surface = Vec::with_capacity(n);
        let mut wind10 = Vec::with_capacity(n);
        for i in 0..s.nx {
            for j in 0..s.ny {
                let idx = i * s.ny + j;
                let (x, y) = (i as f64 / s.nx as f64, j as f64 / s.ny as f64);
                let land = self.land_mask[idx];
                let mu0_s0 = solar_geometry(s.lat(j), s.lon(i), t);
                let sun = mu0_s0 / SOLAR_CONSTANT;

                let t0 = s.season.t_surface_mean
                    + s.season.t_surface_amplitude * self.temp.eval(x, y, t_days)
                    + if land { 4.0 * sun - 1.5 } else { 0.0 };
                let upper = 2.0 * self.temp_upper.eval(x, y, t_days);
                let t_trop = 216.65 + 0.3 * (t0 - 288.0);
                let t_layer: Vec<f64> = p
                    .iter()
                    .map(|&pl| {
                        let z_km = 7.29 * (p_s / pl).ln();
                        let mut tl = (t0 - 6.5 * z_km).max(t_trop);
                        if z_km > 20.0 {
                            tl += 1.0 * (z_km - 20.0);
                        }
                        tl + upper * (1.0 - pl / p_s)
                    })
                    .map(|tl| tl.clamp(T_MIN + 1.0, T_MAX - 1.0))
                    .collect();

                let qv_s = (s.season.humidity_scale
                    * 0.012
                    * (1.0 + 0.35 * self.humid.eval(x, y, t_days)))
                .max(0.0);
                let qv_layer = p.iter().map(|&pl| qv_s * (pl / p_s).powi(3)).collect();
                let o3_scale = 1.0 + 0.15 * self.ozone.eval(x, y, t_days);
                let o3_layer = p
                    .iter()
                    .map(|&pl| {
                        let d = (pl.ln() - 20f64.ln()) / 0.9;
                        8e-6 * o3_scale * (-0.5 * d * d).exp()
                    })
                    .collect();

                let t_skin = (t0
                    + if land {
                        10.0 * sun - 2.0
                    } else {
                        0.5 * sun
                    })
                .clamp(T_MIN + 1.0, T_MAX - 1.0);
                let a = 0.5 * (self.albedo.eval(x, y, 0.0) + 1.0);
                let (emissivity, albedo, surface) = if land {
                    (
                        0.90 + 0.08 * unit_hash(s.seed, i, j),
                        (0.12 + 0.18 * a).clamp(0.0, 1.0),
                        Surface::Land,
                    )
                } else {
                    (0.98, 0.06, Surface::Ocean)
                };

                columns.push(AtmosphericColumn {
                    grid: Arc::clone(&self.grid),
                    t_layer,
                    qv_layer,
                    o3_layer,
                    cf_layer: self.cloud_profile(i, j, t_days),
                    t_skin,
                    emissivity,
                    albedo,
                    mu0_s0,
                    surface,
                });
                p_surface.push(1010.0 + 3.0 * self.pressure.eval(x, y, t_days));
                wind10.push((5.0 + 2.5 * self.wind.eval(x, y, t_days)).max(0.0));
            }
        }
        Scene {
            nx: s.nx,
            ny: s.ny,
            lat0: s.lat0,
            lon0: s.lon0,
            dx_deg: s.dx_deg,
            timestamp: t,
            columns,
            p_surface,
            wind10,
            land_mask: self.land_mask.clone(),
        }
    }
}

fn periodic(d: f64, period: f64) -> f64 {
    let r = d.rem_euclid(period);
    if r > 0.5 * period {
        r - period
    } else {
        r
    }
}

/// splitmix64 finaliser over a combined key.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_hash(seed: u64, i: usize, j: usize) -> f64 {
    let h = mix(mix(seed, i as u64), j as u64 ^ 0xA5A5);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn generate_scene(spec: &SceneSpec, t: Timestamp) -> Result<Scene> {
    spec.validate()?;
    Ok(Generator::new(spec).scene(t))
}

/// Adds an analytic vortex: a Gaussian pressure low, a Rankine-like wind
/// field with a calm eye, and an annulus of mid-level cloud at the radius
/// of maximum wind.
pub fn inject_vortex(scene: &Scene, v: &VortexSpec) -> Result<Scene> {
    let (ci, cj) = v.center;
    if ci >= scene.nx || cj >= scene.ny {
        return Err(Error::InvalidArgument(format!(
            "vortex center ({ci}, {cj}) outside {}x{} grid",
            scene.nx, scene.ny
        )));
    }
    if !(v.depth > 0.0 && v.radius >= 2.0 && v.v_max >= 0.0) {
        return Err(Error::InvalidArgument(
            "vortex needs depth > 0, radius >= 2 and v_max >= 0".into(),
        ));
    }
    let mut out = scene.clone();
    let r0 = v.radius;
    for i in 0..scene.nx {
        for j in 0..scene.ny {
            let idx = scene.idx(i, j);
            let dx = i as f64 - ci as f64;
            let dy = j as f64 - cj as f64;
            let r = (dx * dx + dy * dy).sqrt();
            let g = (-r * r / (2.0 * r0 * r0)).exp();
            out.p_surface[idx] -= v.depth * g;
            let vt = if r <= r0 { v.v_max * r / r0 } else { v.v_max * r0 / r };
            out.wind10[idx] = vt + scene.wind10[idx] * (1.0 - g);

            let ring = (-((r - r0) / (0.5 * r0)).powi(2)).exp();
            if ring > 1e-3 {
                let col = &mut out.columns[idx];
                for l in 15..35 {
                    col.cf_layer[l] = (col.cf_layer[l] + 0.6 * ring).min(1.0);
                }
            }
        }
    }
    Ok(out)
}

pub fn generate_series(
    spec: &SceneSpec,
    t0: Timestamp,
    dt: i64,
    n: usize,
    vortex_track: Option<&[VortexSpec]>,
) -> Result<SceneSeries> {
    let scenes = series_iter(spec, t0, dt, n, vortex_track)?.collect::<Result<_>>()?;
    Ok(SceneSeries { scenes })
}

/// The scenes of [`generate_series`], produced one at a time.
pub fn series_iter<'a>(
    spec: &SceneSpec,
    t0: Timestamp,
    dt: i64,
    n: usize,
    vortex_track: Option<&'a [VortexSpec]>,
) -> Result<impl Iterator<Item = Result<Scene>> + 'a> {
    spec.validate()?;
    if n == 0 || dt <= 0 {
        return Err(Error::InvalidArgument(
            "series needs n >= 1 and dt > 0".into(),
        ));
    }
    if let Some(track) = vortex_track {
        if track.len() != n {
            return Err(Error::InvalidArgument(format!(
                "vortex track has {} entries for {n} steps",
                track.len()
            )));
        }
    }
    let gen = Generator::new(spec);
    Ok((0..n).map(move |k| {
        let scene = gen.scene(t0 + k as i64 * dt);
        match vortex_track {
            Some(track) => inject_vortex(&scene, &track[k]),
            None => Ok(scene),
        }
    }))
}

/// Tag in the key slot of a dataset-framed file that marks a scene.
pub const SCENE_TAG: [u8; 3] = *b"SCN";
const CELL_WIDTH: usize = 4 * N_LAYERS + 8;

/// Serialises a scene with the dataset framing (magic, version, tag, CRC)
/// and an f64 payload, so a decoded scene is bit-identical.
pub fn encode_scene(scene: &Scene) -> Vec<u8> {
    let grid = scene.columns.first().map(|c| c.grid.p_interface().to_vec()).unwrap_or_default();
    let mut w = Writer::new(DATASET_MAGIC, (3 + grid.len() + scene.len() * CELL_WIDTH) * 8 + 32);
    w.bytes(&SCENE_TAG)
        .u32(scene.nx as u32)
        .u32(scene.ny as u32)
        .u64(scene.timestamp as u64)
        .u32(grid.len() as u32)
        .f64s([scene.lat0, scene.lon0, scene.dx_deg])
        .f64s(grid.iter().copied());
    for (c, col) in scene.columns.iter().enumerate() {
        w.f64s(col.t_layer.iter().copied())
            .f64s(col.qv_layer.iter().copied())
            .f64s(col.o3_layer.iter().copied())
            .f64s(col.cf_layer.iter().copied())
            .f64s([
                col.t_skin,
                col.emissivity,
                col.albedo,
                col.mu0_s0,
                (col.surface == Surface::Ocean) as u8 as f64,
                scene.p_surface[c],
                scene.wind10[c],
                scene.land_mask[c] as u8 as f64,
            ]);
    }
    w.finish()
}

pub fn decode_scene(bytes: &[u8]) -> std::result::Result<Scene, FormatError> {
    let mut r = Reader::open(bytes, DATASET_MAGIC)?;
    let tag = r.bytes3("scene tag")?;
    if tag != SCENE_TAG {
        return Err(FormatError::BadKey(tag));
    }
    let nx = r.u32("nx")? as usize;
    let ny = r.u32("ny")? as usize;
    let timestamp = r.u64("timestamp")? as i64;
    let ni = r.u32("interface count")? as usize;
    if ni != N_LAYERS + 1 {
        return Err(FormatError::Dimension(format!(
            "scene has {ni} interfaces, expected {}",
            N_LAYERS + 1
        )));
    }
    let cells = nx
        .checked_mul(ny)
        .filter(|&c| c > 0)
        .ok_or_else(|| FormatError::Dimension(format!("bad scene shape {nx}x{ny}")))?;
    let total = cells
        .checked_mul(CELL_WIDTH)
        .and_then(|v| v.checked_add(3 + ni))
        .ok_or_else(|| FormatError::Dimension("payload size overflows".into()))?;
    r.expect_payload64(total)?;
    let geo = r.f64s(3, "geometry")?;
    let grid = LevelGrid::new(r.f64s(ni, "pressure grid")?)
        .map_err(|e| FormatError::Dimension(format!("invalid pressure grid: {e}")))?;
    let grid = Arc::new(grid);
    let body = r.f64s(cells * CELL_WIDTH, "columns")?;
    let mut columns = Vec::with_capacity(cells);
    let (mut p_surface, mut wind10, mut land_mask) = (Vec::new(), Vec::new(), Vec::new());
    for c in body.chunks_exact(CELL_WIDTH) {
        let (prof, s) = c.split_at(4 * N_LAYERS);
        columns.push(AtmosphericColumn {
            grid: Arc::clone(&grid),
            t_layer: prof[..N_LAYERS].to_vec(),
            qv_layer: prof[N_LAYERS..2 * N_LAYERS].to_vec(),
            o3_layer: prof[2 * N_LAYERS..3 * N_LAYERS].to_vec(),
            cf_layer: prof[3 * N_LAYERS..].to_vec(),
            t_skin: s[0],
            emissivity: s[1],
            albedo: s[2],
            mu0_s0: s[3],
            surface: if s[4] != 0.0 { Surface::Ocean } else { Surface::Land },
        });
        p_surface.push(s[5]);
        wind10.push(s[6]);
        land_mask.push(s[7] != 0.0);
    }
    Ok(Scene {
        nx,
        ny,
        lat0: geo[0],
        lon0: geo[1],
        dx_deg: geo[2],
        timestamp,
        columns,
        p_surface,
        wind10,
        land_mask,
    })
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_scene(scene))
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    decode_scene(&read_file(path)?).map_err(|e| Error::format(path, e))
}
