//! The eight-model emulator bank: loading, per-column dispatch, batched
//! scene inference and the throughput benchmark against the reference
//! scheme.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::container::{read_file, write_file, Reader, Writer};
use crate::datapipe::DATASET_MAGIC;
use crate::domain::{
    sky_of, validate_column, write_features, AtmosphericColumn, Mode, ModelKey, RadiationResult,
    N_LAYERS, N_OUTPUTS,
};
use crate::error::{Error, FormatError, Result};
use crate::net::{decode_weights, encode_weights, MlpModel, MlpWeights32};
use crate::refrad::{reference_radiation_unchecked, RefRadConfig};
use crate::scenegen::{Scene, Timestamp};

pub const WEIGHTS_EXT: &str = "rnnw";
/// Tag in the key slot of a dataset-framed file that marks a radiation field.
pub const FIELD_TAG: [u8; 3] = *b"RAD";

fn key_index(key: ModelKey) -> usize {
    ModelKey::all().iter().position(|&k| k == key).expect("all() lists every key")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub key: ModelKey,
    pub file: PathBuf,
    pub crc32: u32,
}

/// Exactly one model per [`ModelKey`], immutable once built.
#[derive(Debug)]
pub struct EmulatorBank {
    models: Vec<MlpModel>,
    fast: Vec<MlpWeights32>,
    manifest: Vec<ManifestEntry>,
    calls: [AtomicUsize; 8],
}

impl EmulatorBank {
    /// Builds a bank from eight models, one per key, in any order.
    pub fn new(models: Vec<MlpModel>) -> Result<Self> {
        let mut slots: Vec<Option<MlpModel>> = vec![None; 8];
        for m in models {
            if m.weights.n != m.key.n_features() || m.weights.m != N_OUTPUTS {
                return Err(Error::Shape(format!(
                    "model {} has n={} m={}, expected n={} m={N_OUTPUTS}",
                    m.key,
                    m.weights.n,
                    m.weights.m,
                    m.key.n_features()
                )));
            }
            let slot = &mut slots[key_index(m.key)];
            if slot.is_some() {
                return Err(Error::DuplicateKey(m.key));
            }
            *slot = Some(m);
        }
        let mut out = Vec::with_capacity(8);
        for (slot, key) in slots.into_iter().zip(ModelKey::all()) {
            out.push(slot.ok_or(Error::MissingKey(key))?);
        }
        let fast = out.iter().map(|m| MlpWeights32::from(&m.weights)).collect();
        Ok(Self {
            models: out,
            fast,
            manifest: Vec::new(),
            calls: Default::default(),
        })
    }

    pub fn model(&self, key: ModelKey) -> &MlpModel {
        &self.models[key_index(key)]
    }

    pub fn models(&self) -> &[MlpModel] {
        &self.models
    }

    /// Files and checksums the bank was loaded from (empty when built in
    /// memory).
    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }

    /// Number of batched forward passes run by `key`'s model so far.
    pub fn invocations(&self, key: ModelKey) -> usize {
        self.calls[key_index(key)].load(Ordering::Relaxed)
    }

    pub fn reset_invocations(&self) {
        for c in &self.calls {
            c.store(0, Ordering::Relaxed);
        }
    }

    /// Normalise → f32 forward → denormalise for `rows` stacked feature
    /// vectors of `key`.
    fn infer(&self, key: ModelKey, x: &[f64], scratch: &mut Scratch) -> Result<Vec<f64>> {
        let idx = key_index(key);
        let model = &self.models[idx];
        let n = model.weights.n;
        if x.len() % n != 0 {
            return Err(Error::Shape(format!(
                "feature block of {} values is not a multiple of {n}",
                x.len()
            )));
        }
        self.calls[idx].fetch_add(1, Ordering::Relaxed);
        let norm = &model.norm;
        scratch.x.clear();
        for row in x.chunks_exact(n) {
            scratch.x.extend(
                row.iter()
                    .zip(norm.feat_mean.iter().zip(&norm.feat_std))
                    .map(|(v, (m, s))| ((v - m) / s) as f32),
            );
        }
        self.fast[idx].forward_batch_into(&scratch.x, &mut scratch.h, &mut scratch.y)?;
        Ok(scratch
            .y
            .chunks_exact(N_OUTPUTS)
            .flat_map(|r| {
                r.iter()
                    .zip(norm.targ_mean.iter().zip(&norm.targ_std))
                    .map(|(&v, (m, s))| v as f64 * s + m)
            })
            .collect())
    }
}

#[derive(Default)]
struct Scratch {
    x: Vec<f32>,
    h: Vec<f32>,
    y: Vec<f32>,
}

fn weights_file(dir: &Path, key: ModelKey) -> PathBuf {
    dir.join(format!("{}.{WEIGHTS_EXT}", key.code()))
}

/// Writes each model to `{code}.rnnw` in `dir`.
pub fn bank_save(bank: &EmulatorBank, dir: impl AsRef<Path>) -> Result<()> {
    for m in bank.models() {
        write_file(&weights_file(dir.as_ref(), m.key), &encode_weights(m)?)?;
    }
    Ok(())
}

/// Loads the eight `{L|O}{1|2}{L|S}.rnnw` files from `dir`. Other files
/// are ignored.
pub fn bank_load(dir: impl AsRef<Path>) -> Result<EmulatorBank> {
    let dir = dir.as_ref();
    let mut models = Vec::new();
    let mut manifest = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.extension().and_then(|e| e.to_str()) != Some(WEIGHTS_EXT) {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Ok(named) = stem.parse::<ModelKey>() else {
            return Err(Error::InvalidArgument(format!(
                "{}: weight files must be named {{L|O}}{{1|2}}{{L|S}}.{WEIGHTS_EXT}",
                path.display()
            )));
        };
        let bytes = read_file(&path)?;
        let model = decode_weights(&bytes).map_err(|e| Error::format(&path, e))?;
        if model.key != named {
            return Err(Error::format(
                &path,
                FormatError::Dimension(format!("file named {named} holds model {}", model.key)),
            ));
        }
        if models.iter().any(|m: &MlpModel| m.key == named) {
            return Err(Error::DuplicateKey(named));
        }
        manifest.push(ManifestEntry {
            key: named,
            file: path.clone(),
            crc32: crc32fast::hash(&bytes),
        });
        models.push(model);
    }
    let mut bank = EmulatorBank::new(models)?;
    manifest.sort_by_key(|e| key_index(e.key));
    bank.manifest = manifest;
    Ok(bank)
}

/// Model for `col` in `mode`; `None` means no inference is needed
/// (shortwave at night).
pub fn dispatch(col: &AtmosphericColumn, mode: Mode) -> Option<ModelKey> {
    if mode == Mode::Sw && !col.is_daylight() {
        return None;
    }
    Some(ModelKey::new(mode, sky_of(col, 0.0), col.surface))
}

pub fn emulate_column(bank: &EmulatorBank, col: &AtmosphericColumn, mode: Mode) -> Result<RadiationResult> {
    validate_column(col).into_result()?;
    let Some(key) = dispatch(col, mode) else {
        return Ok(RadiationResult::zeros(mode));
    };
    let mut x = Vec::with_capacity(key.n_features());
    write_features(col, key, &mut x);
    round_features(&mut x);
    let y = bank.infer(key, &x, &mut Scratch::default())?;
    RadiationResult::from_targets(mode, &y)
}

/// Training features are stored as f32; inference sees the same rounding.
fn round_features(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Longwave and shortwave results for every cell of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationField {
    pub nx: usize,
    pub ny: usize,
    pub timestamp: Timestamp,
    pub lw: Vec<RadiationResult>,
    pub sw: Vec<RadiationResult>,
}

impl RadiationField {
    pub fn result(&self, mode: Mode, cell: usize) -> &RadiationResult {
        match mode {
            Mode::Lw => &self.lw[cell],
            Mode::Sw => &self.sw[cell],
        }
    }

    /// One row per cell: i, j, the six boundary fluxes and the
    /// mass-weighted column-mean heating rates.
    pub fn to_csv(&self, scene: &Scene) -> String {
        let mut s = String::from(
            "i,j,lat,lon,LWUPT,LWUPB,LWDNB,SWUPT,SWDNB,SWUPB,hr_lw_mean,hr_sw_mean\n",
        );
        for i in 0..self.nx {
            for j in 0..self.ny {
                let c = i * self.ny + j;
                let (lw, sw) = (&self.lw[c], &self.sw[c]);
                let grid = &scene.columns[c].grid;
                let _ = writeln!(
                    s,
                    "{i},{j},{},{},{},{},{},{},{},{},{},{}",
                    scene.lat(j),
                    scene.lon(i),
                    lw.flux_top_up,
                    lw.flux_bot_up,
                    lw.flux_bot_down,
                    sw.flux_top_up,
                    sw.flux_bot_down,
                    sw.flux_bot_up,
                    column_mean_heating(&lw.heating, grid.p_interface()),
                    column_mean_heating(&sw.heating, grid.p_interface()),
                );
            }
        }
        s
    }
}

/// Pressure-thickness-weighted mean of a heating-rate profile, K/day.
pub fn column_mean_heating(heating: &[f64], p_interface: &[f64]) -> f64 {
    let mut num = 0.0;
    for (l, h) in heating.iter().enumerate() {
        num += h * (p_interface[l + 1] - p_interface[l]);
    }
    num / (p_interface[heating.len()] - p_interface[0])
}

fn check_scene(scene: &Scene) -> Result<()> {
    if scene.columns.len() != scene.nx * scene.ny || scene.columns.is_empty() {
        return Err(Error::Shape(format!(
            "scene is {}x{} but holds {} columns",
            scene.nx,
            scene.ny,
            scene.columns.len()
        )));
    }
    for (c, col) in scene.columns.iter().enumerate() {
        let r = validate_column(col);
        if !r.is_valid() {
            return Err(Error::InvalidColumn(format!("cell {c}: {r}")));
        }
    }
    Ok(())
}

/// Emulates every column, grouping columns by model so each model runs one
/// batched forward pass per mode.
pub fn emulate_scene(bank: &EmulatorBank, scene: &Scene) -> Result<RadiationField> {
    check_scene(scene)?;
    Ok(RadiationField {
        nx: scene.nx,
        ny: scene.ny,
        timestamp: scene.timestamp,
        lw: emulate_mode(bank, scene, Mode::Lw)?,
        sw: emulate_mode(bank, scene, Mode::Sw)?,
    })
}

/// Batched inference for one mode on an already validated scene.
fn emulate_mode(bank: &EmulatorBank, scene: &Scene, mode: Mode) -> Result<Vec<RadiationResult>> {
    let mut scratch = Scratch::default();
    let mut x = Vec::new();
    let mut groups: [Vec<usize>; 8] = Default::default();
    for (c, col) in scene.columns.iter().enumerate() {
        if let Some(key) = dispatch(col, mode) {
            groups[key_index(key)].push(c);
        }
    }
    let mut out = vec![RadiationResult::zeros(mode); scene.len()];
    for (key, cells) in ModelKey::all().into_iter().zip(&groups) {
        if cells.is_empty() {
            continue;
        }
        x.clear();
        for &c in cells {
            write_features(&scene.columns[c], key, &mut x);
        }
        round_features(&mut x);
        let y = bank.infer(key, &x, &mut scratch)?;
        for (&c, row) in cells.iter().zip(y.chunks_exact(N_OUTPUTS)) {
            out[c] = RadiationResult::from_targets(mode, row)?;
        }
    }
    Ok(out)
}

/// Reference-scheme counterpart of [`emulate_scene`].
pub fn reference_scene(scene: &Scene, cfg: &RefRadConfig) -> Result<RadiationField> {
    check_scene(scene)?;
    cfg.validate()?;
    let run = |mode| {
        scene
            .columns
            .iter()
            .map(|c| reference_radiation_unchecked(c, mode, cfg))
            .collect()
    };
    Ok(RadiationField {
        nx: scene.nx,
        ny: scene.ny,
        timestamp: scene.timestamp,
        lw: run(Mode::Lw),
        sw: run(Mode::Sw),
    })
}

pub fn encode_field(field: &RadiationField) -> Vec<u8> {
    let cells = field.lw.len();
    let mut w = Writer::new(DATASET_MAGIC, cells * 2 * N_OUTPUTS * 8 + 32);
    w.bytes(&FIELD_TAG)
        .u32(field.nx as u32)
        .u32(field.ny as u32)
        .u64(field.timestamp as u64);
    for (lw, sw) in field.lw.iter().zip(&field.sw) {
        w.f64s(lw.to_targets()).f64s(sw.to_targets());
    }
    w.finish()
}

pub fn decode_field(bytes: &[u8]) -> std::result::Result<RadiationField, FormatError> {
    let mut r = Reader::open(bytes, DATASET_MAGIC)?;
    let tag = r.bytes3("field tag")?;
    if tag != FIELD_TAG {
        return Err(FormatError::BadKey(tag));
    }
    let nx = r.u32("nx")? as usize;
    let ny = r.u32("ny")? as usize;
    let timestamp = r.u64("timestamp")? as i64;
    let total = nx
        .checked_mul(ny)
        .and_then(|c| c.checked_mul(2 * N_OUTPUTS))
        .ok_or_else(|| FormatError::Dimension("payload size overflows".into()))?;
    r.expect_payload64(total)?;
    let body = r.f64s(total, "radiation values")?;
    let mut field = RadiationField {
        nx,
        ny,
        timestamp,
        lw: Vec::with_capacity(nx * ny),
        sw: Vec::with_capacity(nx * ny),
    };
    for row in body.chunks_exact(2 * N_OUTPUTS) {
        let (a, b) = row.split_at(N_OUTPUTS);
        field.lw.push(RadiationResult::from_targets(Mode::Lw, a).expect("width checked"));
        field.sw.push(RadiationResult::from_targets(Mode::Sw, b).expect("width checked"));
    }
    Ok(field)
}

pub fn save_field(field: &RadiationField, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_field(field))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<RadiationField> {
    let path = path.as_ref();
    decode_field(&read_file(path)?).map_err(|e| Error::format(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub columns: usize,
    pub repetitions: usize,
    pub columns_per_second_emulator: f64,
    pub columns_per_second_reference: f64,
    pub speedup: f64,
    /// Per-mode seconds per column on the benchmark scene.
    pub emulator_lw_s_per_column: f64,
    pub emulator_sw_s_per_column: f64,
    pub reference_lw_s_per_column: f64,
    pub reference_sw_s_per_column: f64,
    /// Seconds per column on all-clear and all-cloudy variants of the scene.
    pub emulator_clear_s_per_column: f64,
    pub emulator_cloudy_s_per_column: f64,
    pub reference_clear_s_per_column: f64,
    pub reference_cloudy_s_per_column: f64,
}

impl BenchReport {
    /// Relative difference of emulator cost between cloudy and clear.
    pub fn emulator_sky_variation(&self) -> f64 {
        rel_variation(self.emulator_clear_s_per_column, self.emulator_cloudy_s_per_column)
    }

    /// Ratio of the slower to the faster reference cost, clear vs cloudy.
    pub fn reference_sky_ratio(&self) -> f64 {
        let (a, b) = (self.reference_clear_s_per_column, self.reference_cloudy_s_per_column);
        a.max(b) / a.min(b)
    }

    pub fn to_csv(&self) -> String {
        let fields = [
            ("columns", self.columns as f64),
            ("repetitions", self.repetitions as f64),
            ("columns_per_second_emulator", self.columns_per_second_emulator),
            ("columns_per_second_reference", self.columns_per_second_reference),
            ("speedup", self.speedup),
            ("emulator_lw_s_per_column", self.emulator_lw_s_per_column),
            ("emulator_sw_s_per_column", self.emulator_sw_s_per_column),
            ("reference_lw_s_per_column", self.reference_lw_s_per_column),
            ("reference_sw_s_per_column", self.reference_sw_s_per_column),
            ("emulator_clear_s_per_column", self.emulator_clear_s_per_column),
            ("emulator_cloudy_s_per_column", self.emulator_cloudy_s_per_column),
            ("reference_clear_s_per_column", self.reference_clear_s_per_column),
            ("reference_cloudy_s_per_column", self.reference_cloudy_s_per_column),
            ("emulator_sky_variation", self.emulator_sky_variation()),
            ("reference_sky_ratio", self.reference_sky_ratio()),
        ];
        let (h, v): (Vec<_>, Vec<_>) = fields.iter().map(|(k, v)| (*k, v.to_string())).unzip();
        format!("{}\n{}\n", h.join(","), v.join(","))
    }
}

fn rel_variation(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.min(b)
}

/// Copy of `scene` with every cloud removed.
pub fn all_clear(scene: &Scene) -> Scene {
    let mut s = scene.clone();
    for c in &mut s.columns {
        c.cf_layer.iter_mut().for_each(|v| *v = 0.0);
    }
    s
}

/// Copy of `scene` where every column has cloud: clear columns get a
/// mid-level layer of 0.5 cover.
pub fn all_cloudy(scene: &Scene) -> Scene {
    let mut s = scene.clone();
    for c in &mut s.columns {
        if c.max_cloud_fraction() <= 0.0 {
            c.cf_layer[N_LAYERS / 2] = 0.5;
        }
    }
    s
}

fn min_time<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<Duration> {
    let mut best = Duration::MAX;
    for _ in 0..reps {
        let t = Instant::now();
        std::hint::black_box(f()?);
        best = best.min(t.elapsed());
    }
    Ok(best)
}

fn reference_mode(scene: &Scene, mode: Mode, cfg: &RefRadConfig) -> Result<Vec<RadiationResult>> {
    check_scene(scene)?;
    Ok(scene
        .columns
        .iter()
        .map(|c| reference_radiation_unchecked(c, mode, cfg))
        .collect())
}

/// Times full-scene emulation against full-scene reference evaluation
/// (both modes, same inputs), taking the minimum over `reps` runs.
pub fn benchmark(bank: &EmulatorBank, scene: &Scene, reps: usize, cfg: &RefRadConfig) -> Result<BenchReport> {
    if reps < 3 {
        return Err(Error::InvalidArgument(format!("benchmark needs at least 3 repetitions, got {reps}")));
    }
    cfg.validate()?;
    check_scene(scene)?;
    let n = scene.len() as f64;
    let emu = min_time(reps, || emulate_scene(bank, scene))?.as_secs_f64();
    let reference = min_time(reps, || reference_scene(scene, cfg))?.as_secs_f64();
    let per = |d: Duration| d.as_secs_f64() / n;
    let emu_lw = per(min_time(reps, || {
        check_scene(scene)?;
        emulate_mode(bank, scene, Mode::Lw)
    })?);
    let emu_sw = per(min_time(reps, || {
        check_scene(scene)?;
        emulate_mode(bank, scene, Mode::Sw)
    })?);
    let ref_lw = per(min_time(reps, || reference_mode(scene, Mode::Lw, cfg))?);
    let ref_sw = per(min_time(reps, || reference_mode(scene, Mode::Sw, cfg))?);
    let clear = all_clear(scene);
    let cloudy = all_cloudy(scene);
    let emu_clear = per(min_time(reps, || emulate_scene(bank, &clear))?);
    let emu_cloudy = per(min_time(reps, || emulate_scene(bank, &cloudy))?);
    let ref_clear = per(min_time(reps, || reference_scene(&clear, cfg))?);
    let ref_cloudy = per(min_time(reps, || reference_scene(&cloudy, cfg))?);
    Ok(BenchReport {
        columns: scene.len(),
        repetitions: reps,
        columns_per_second_emulator: n / emu,
        columns_per_second_reference: n / reference,
        speedup: reference / emu,
        emulator_lw_s_per_column: emu_lw,
        emulator_sw_s_per_column: emu_sw,
        reference_lw_s_per_column: ref_lw,
        reference_sw_s_per_column: ref_sw,
        emulator_clear_s_per_column: emu_clear,
        emulator_cloudy_s_per_column: emu_cloudy,
        reference_clear_s_per_column: ref_clear,
        reference_cloudy_s_per_column: ref_cloudy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::NormStats;
    use crate::domain::{Sky, Surface};
    use crate::net::{init_kaiming, MlpWeights, ModelMeta};
    use crate::scenegen::{generate_scene, SceneSpec, SEPTEMBER_2022};

    pub(crate) fn random_bank(seed: u64) -> EmulatorBank {
        let models = ModelKey::all()
            .into_iter()
            .map(|key| {
                let n = key.n_features();
                let w = init_kaiming(n, 16, N_OUTPUTS, seed ^ key_index(key) as u64).unwrap();
                let mut norm = NormStats::identity(n, N_OUTPUTS);
                norm.feat_std.iter_mut().for_each(|s| *s = 100.0);
                MlpModel::new(key, w, norm, ModelMeta::default()).unwrap()
            })
            .collect();
        EmulatorBank::new(models).unwrap()
    }

    fn scene() -> Scene {
        let spec = SceneSpec { nx: 12, ny: 10, ..Default::default() };
        generate_scene(&spec, SEPTEMBER_2022 + 4 * 3600).unwrap()
    }

    #[test]
    fn dispatch_rules() {
        let mut col = AtmosphericColumn::standard();
        assert_eq!(
            dispatch(&col, Mode::Lw),
            Some(ModelKey::new(Mode::Lw, Sky::Clear, Surface::Land))
        );
        col.surface = Surface::Ocean;
        col.cf_layer[20] = 0.4;
        assert_eq!(
            dispatch(&col, Mode::Sw),
            Some(ModelKey::new(Mode::Sw, Sky::Cloudy, Surface::Ocean))
        );
        col.mu0_s0 = 0.0;
        assert_eq!(dispatch(&col, Mode::Sw), None);
    }

    #[test]
    fn zero_network_predicts_target_mean() {
        let models = ModelKey::all()
            .into_iter()
            .map(|key| {
                let n = key.n_features();
                let mut norm = NormStats::identity(n, N_OUTPUTS);
                norm.targ_mean = (0..N_OUTPUTS).map(|q| 0.5 + q as f64).collect();
                norm.targ_std = vec![3.0; N_OUTPUTS];
                MlpModel::new(key, MlpWeights::zeros(n, 4, N_OUTPUTS), norm, ModelMeta::default()).unwrap()
            })
            .collect();
        let bank = EmulatorBank::new(models).unwrap();
        let r = emulate_column(&bank, &AtmosphericColumn::standard(), Mode::Lw).unwrap();
        let expect: Vec<f64> = (0..N_OUTPUTS).map(|q| 0.5 + q as f64).collect();
        assert_eq!(r.to_targets(), expect);
    }

    #[test]
    fn night_shortwave_is_zero_without_inference() {
        let bank = random_bank(1);
        let mut col = AtmosphericColumn::standard();
        col.mu0_s0 = 0.0;
        let r = emulate_column(&bank, &col, Mode::Sw).unwrap();
        assert_eq!(r, RadiationResult::zeros(Mode::Sw));
        assert!(ModelKey::all().iter().all(|&k| bank.invocations(k) == 0));
    }

    #[test]
    fn incomplete_and_duplicate_banks_rejected() {
        let bank = random_bank(2);
        let mut models = bank.models().to_vec();
        let gone = models.remove(3).key;
        assert!(matches!(EmulatorBank::new(models.clone()), Err(Error::MissingKey(k)) if k == gone));
        models.push(models[0].clone());
        assert!(matches!(EmulatorBank::new(models), Err(Error::DuplicateKey(_))));
    }

    #[test]
    fn batched_matches_per_column() {
        let bank = random_bank(3);
        let s = scene();
        let field = emulate_scene(&bank, &s).unwrap();
        for (c, col) in s.columns.iter().enumerate() {
            for mode in [Mode::Lw, Mode::Sw] {
                let a = emulate_column(&bank, col, mode).unwrap().to_targets();
                let b = field.result(mode, c).to_targets();
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() <= 1e-6 * u.abs().max(v.abs()), "{u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn clear_scene_never_calls_cloudy_models() {
        let bank = random_bank(4);
        emulate_scene(&bank, &all_clear(&scene())).unwrap();
        for key in ModelKey::all() {
            if key.sky == Sky::Cloudy {
                assert_eq!(bank.invocations(key), 0);
            } else {
                assert!(bank.invocations(key) <= 1);
            }
        }
    }

    #[test]
    fn bank_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let bank = random_bank(5);
        bank_save(&bank, dir.path()).unwrap();
        let loaded = bank_load(dir.path()).unwrap();
        for (a, b) in loaded.models().iter().zip(bank.models()) {
            assert_eq!(a, &b.quantized());
        }
        assert_eq!(loaded.manifest().len(), 8);

        fs::remove_file(dir.path().join("O2S.rnnw")).unwrap();
        let err = bank_load(dir.path()).unwrap_err();
        assert!(err.to_string().contains("O2S"), "{err}");

        // a cloudy-width network stored under a clear name
        let mut bytes = encode_weights(bank.model("L2S".parse().unwrap())).unwrap();
        bytes[8..11].copy_from_slice(&"L1S".parse::<ModelKey>().unwrap().to_bytes());
        let body = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body]);
        bytes[body..].copy_from_slice(&crc.to_le_bytes());
        fs::write(dir.path().join("L1S.rnnw"), bytes).unwrap();
        assert!(matches!(
            bank_load(dir.path()),
            Err(Error::Format { source: FormatError::Dimension(_), .. })
        ));
    }

    #[test]
    fn field_file_round_trip() {
        let s = scene();
        let f = reference_scene(&s, &RefRadConfig::default()).unwrap();
        let bytes = encode_field(&f);
        assert_eq!(decode_field(&bytes).unwrap(), f);
        let mut bad = bytes;
        let k = bad.len() / 2;
        bad[k] ^= 4;
        assert!(matches!(decode_field(&bad), Err(FormatError::ChecksumFailure { .. })));
        assert!(f.to_csv(&s).lines().count() == s.len() + 1);
    }

    #[test]
    fn bench_plumbing() {
        let bank = random_bank(6);
        let s = scene();
        let r = benchmark(&bank, &s, 3, &RefRadConfig::default()).unwrap();
        assert_eq!(r.repetitions, 3);
        assert_eq!(r.columns, s.len());
        assert!(r.speedup > 0.0);
        assert!(benchmark(&bank, &s, 2, &RefRadConfig::default()).is_err());
    }
}
