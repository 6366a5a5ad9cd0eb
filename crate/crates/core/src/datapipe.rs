//! Training-data pipeline: categorisation into the eight sub-model keys,
//! two-level cloud stratification, balanced sampling, splitting,
//! normalisation and the `.rnds` dataset container.
//!
//! Stratification works in two steps. Pixels are first binned into ten
//! equal-width classes of time-mean cloudiness (column-maximum cloud
//! fraction averaged over the series). Within each class, cloudy samples
//! are then binned into ten equal-width classes of cloud center of mass
//! spanning that class's observed range. Balanced sampling draws equally
//! from every non-empty inner bin so the thin tails of the center-of-mass
//! distribution are not starved.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::container::{self, Reader, Writer};
use crate::domain::{sky_of, write_features, ModelKey, RadiationResult, Sky, N_LAYERS, N_OUTPUTS};
use crate::error::{Error, FormatError, Result};
use crate::refrad::{reference_radiation_unchecked, RefRadConfig};
use crate::scenegen::{SceneSeries, Timestamp};

pub const DATASET_MAGIC: [u8; 4] = *b"RNDS";
pub const N_BINS: usize = 10;
pub const STD_FLOOR: f64 = 1e-8;

/// Where a sample came from. Not persisted in the container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SampleOrigin {
    pub timestamp: Timestamp,
    pub i: usize,
    pub j: usize,
    /// Position of the scene within its series.
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Stored at container precision.
    pub features: Vec<f32>,
    /// Heating rates then the three boundary fluxes, in output-table order.
    pub targets: Vec<f32>,
    pub origin: Option<SampleOrigin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Provenance {
    pub seed: u64,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub key: ModelKey,
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(key: ModelKey, samples: Vec<Sample>, provenance: Provenance) -> Result<Self> {
        let ds = Self {
            key,
            samples,
            provenance,
        };
        ds.check_shapes()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.key.n_features()
    }

    fn check_shapes(&self) -> Result<()> {
        let nf = self.n_features();
        for (k, s) in self.samples.iter().enumerate() {
            if s.features.len() != nf || s.targets.len() != N_OUTPUTS {
                return Err(Error::Shape(format!(
                    "sample {k} has {} features / {} targets, key {} needs {nf} / {N_OUTPUTS}",
                    s.features.len(),
                    s.targets.len(),
                    self.key
                )));
            }
        }
        Ok(())
    }

    /// Row-major feature matrix in f64.
    pub fn feature_matrix(&self) -> Vec<f64> {
        self.samples
            .iter()
            .flat_map(|s| s.features.iter().map(|&v| v as f64))
            .collect()
    }

    /// Row-major target matrix in f64.
    pub fn target_matrix(&self) -> Vec<f64> {
        self.samples
            .iter()
            .flat_map(|s| s.targets.iter().map(|&v| v as f64))
            .collect()
    }

    /// Same key and persisted contents (origins are not compared).
    pub fn same_contents(&self, other: &Dataset) -> bool {
        self.key == other.key
            && self.provenance.seed == other.provenance.seed
            && self.samples.len() == other.samples.len()
            && self.samples.iter().zip(&other.samples).all(|(a, b)| {
                a.features.iter().map(|v| v.to_bits()).eq(b.features.iter().map(|v| v.to_bits()))
                    && a.targets.iter().map(|v| v.to_bits()).eq(b.targets.iter().map(|v| v.to_bits()))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
    pub targ_mean: Vec<f64>,
    pub targ_std: Vec<f64>,
}

impl NormStats {
    pub fn identity(n_features: usize, n_targets: usize) -> Self {
        Self {
            feat_mean: vec![0.0; n_features],
            feat_std: vec![1.0; n_features],
            targ_mean: vec![0.0; n_targets],
            targ_std: vec![1.0; n_targets],
        }
    }

    pub fn normalize_features(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feat_mean.iter().zip(&self.feat_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn normalize_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.targ_mean.iter().zip(&self.targ_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.targ_mean.iter().zip(&self.targ_std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Rounds every statistic to f32 precision (the weight-file precision).
    pub fn quantized(&self) -> Self {
        let q = |v: &Vec<f64>| v.iter().map(|&x| x as f32 as f64).collect();
        Self {
            feat_mean: q(&self.feat_mean),
            feat_std: q(&self.feat_std),
            targ_mean: q(&self.targ_mean),
            targ_std: q(&self.targ_std),
        }
    }
}

/// Per-column mean and population std; std floored at [`STD_FLOOR`].
pub fn column_stats(data: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let rows = data.len() / width;
    let mut mean = vec![0.0; width];
    for row in data.chunks_exact(width) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0; width];
    for row in data.chunks_exact(width) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var
        .iter()
        .map(|s| (s / rows as f64).sqrt().max(STD_FLOOR))
        .collect();
    (mean, std)
}

pub fn fit_normalization(train: &Dataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot fit normalisation on an empty dataset".into(),
        ));
    }
    let (feat_mean, feat_std) = column_stats(&train.feature_matrix(), train.n_features());
    let (targ_mean, targ_std) = column_stats(&train.target_matrix(), N_OUTPUTS);
    Ok(NormStats {
        feat_mean,
        feat_std,
        targ_mean,
        targ_std,
    })
}

/// Cloud-fraction-weighted mean level number (1 = top layer), or `None`
/// for a cloud-free profile.
pub fn cloud_center_of_mass(cf_layer: &[f64]) -> Option<f64> {
    let total: f64 = cf_layer.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let moment: f64 = cf_layer
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1) as f64 * c)
        .sum();
    Some(moment / total)
}

/// A cloudy sample's location in a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SampleRef {
    pub step: usize,
    pub cell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedIndex {
    pub nx: usize,
    pub ny: usize,
    /// Outer class of each pixel (cell index `i * ny + j`).
    pub pixel_bin: Vec<usize>,
    /// Pixels in each outer class.
    pub outer_bins: Vec<Vec<usize>>,
    /// Cloudy samples per (outer, inner) class.
    pub inner_bins: Vec<Vec<Vec<SampleRef>>>,
    /// Center-of-mass range used for each outer class's inner edges.
    pub com_range: Vec<Option<(f64, f64)>>,
}

impl StratifiedIndex {
    pub fn empty_outer_bins(&self) -> Vec<usize> {
        (0..N_BINS).filter(|&b| self.outer_bins[b].is_empty()).collect()
    }

    pub fn non_empty_inner_bins(&self) -> usize {
        self.inner_bins
            .iter()
            .flatten()
            .filter(|b| !b.is_empty())
            .count()
    }

    /// Inner class of a center of mass within outer class `outer`.
    pub fn inner_bin_of(&self, outer: usize, com: f64) -> Option<usize> {
        let (lo, hi) = self.com_range[outer]?;
        Some(equal_width_bin(com, lo, hi))
    }
}

fn equal_width_bin(v: f64, lo: f64, hi: f64) -> usize {
    if hi <= lo {
        return 0;
    }
    let b = ((v - lo) / (hi - lo) * N_BINS as f64).floor();
    (b.max(0.0) as usize).min(N_BINS - 1)
}

pub fn build_stratification(series: &SceneSeries) -> Result<StratifiedIndex> {
    let (nx, ny) = series
        .shape()
        .ok_or_else(|| Error::InvalidArgument("stratification needs at least one scene".into()))?;
    if series.scenes.iter().any(|s| s.nx != nx || s.ny != ny) {
        return Err(Error::Shape("scenes in series differ in shape".into()));
    }
    let n_cells = nx * ny;
    let mut mean_cloud = vec![0.0; n_cells];
    for scene in &series.scenes {
        for (m, col) in mean_cloud.iter_mut().zip(&scene.columns) {
            *m += col.max_cloud_fraction();
        }
    }
    let steps = series.len() as f64;
    let pixel_bin: Vec<usize> = mean_cloud
        .iter()
        .map(|m| equal_width_bin(m / steps, 0.0, 1.0))
        .collect();
    let mut outer_bins = vec![Vec::new(); N_BINS];
    for (cell, &b) in pixel_bin.iter().enumerate() {
        outer_bins[b].push(cell);
    }

    let mut coms: Vec<Vec<(SampleRef, f64)>> = vec![Vec::new(); N_BINS];
    for (step, scene) in series.scenes.iter().enumerate() {
        for (cell, col) in scene.columns.iter().enumerate() {
            if let Some(com) = cloud_center_of_mass(&col.cf_layer) {
                coms[pixel_bin[cell]].push((SampleRef { step, cell }, com));
            }
        }
    }
    let mut inner_bins = vec![vec![Vec::new(); N_BINS]; N_BINS];
    let mut com_range = vec![None; N_BINS];
    for (outer, members) in coms.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let lo = members.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        let hi = members.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
        com_range[outer] = Some((lo, hi));
        for (r, com) in members {
            inner_bins[outer][equal_width_bin(com, lo, hi)].push(r);
        }
    }
    Ok(StratifiedIndex {
        nx,
        ny,
        pixel_bin,
        outer_bins,
        inner_bins,
        com_range,
    })
}

/// Splits `n` draws over bins of the given capacities: every bin gets
/// `⌊n/B⌋` or `⌈n/B⌉`, except bins too small for their share, which give
/// everything they have while the shortfall is spread over the rest.
pub fn allocate_quotas(capacities: &[usize], n: usize) -> Result<Vec<usize>> {
    let total: usize = capacities.iter().sum();
    if n > total {
        return Err(Error::ImpossibleSampleCount {
            requested: n,
            reason: format!("only {total} candidates available"),
        });
    }
    let mut quota = vec![0; capacities.len()];
    let mut open: Vec<usize> = (0..capacities.len()).filter(|&b| capacities[b] > 0).collect();
    let mut remaining = n;
    while remaining > 0 && !open.is_empty() {
        let share = remaining / open.len();
        let capped: Vec<usize> = open
            .iter()
            .copied()
            .filter(|&b| capacities[b] - quota[b] <= share)
            .collect();
        if capped.is_empty() {
            let extra = remaining % open.len();
            for (k, &b) in open.iter().enumerate() {
                quota[b] += share + usize::from(k < extra);
            }
            remaining = 0;
        } else {
            for &b in &capped {
                remaining -= capacities[b] - quota[b];
                quota[b] = capacities[b];
            }
            open.retain(|b| !capped.contains(b));
        }
    }
    Ok(quota)
}

fn matches_key(col: &crate::domain::AtmosphericColumn, key: ModelKey) -> bool {
    col.surface == key.surface
        && sky_of(col, 0.0) == key.sky
        && (key.radiation == crate::domain::Mode::Lw || col.is_daylight())
}

fn make_dataset(
    series: &SceneSeries,
    key: ModelKey,
    mut refs: Vec<SampleRef>,
    seed: u64,
    cfg: &RefRadConfig,
) -> Result<Dataset> {
    refs.sort_by_key(|r| {
        let s = &series.scenes[r.step];
        (s.timestamp, r.cell / s.ny, r.cell % s.ny)
    });
    let nf = key.n_features();
    let mut feats = Vec::with_capacity(nf);
    let samples = refs
        .iter()
        .map(|r| {
            let scene = &series.scenes[r.step];
            let col = &scene.columns[r.cell];
            feats.clear();
            write_features(col, key, &mut feats);
            let targets = reference_radiation_unchecked(col, key.radiation, cfg).to_targets();
            Sample {
                features: feats.iter().map(|&v| v as f32).collect(),
                targets: targets.iter().map(|&v| v as f32).collect(),
                origin: Some(SampleOrigin {
                    timestamp: scene.timestamp,
                    i: r.cell / scene.ny,
                    j: r.cell % scene.ny,
                    step: r.step,
                }),
            }
        })
        .collect();
    let provenance = Provenance {
        seed,
        t_start: series.scenes.first().map_or(0, |s| s.timestamp),
        t_end: series.scenes.last().map_or(0, |s| s.timestamp),
    };
    Dataset::new(key, samples, provenance)
}

fn validate_series(series: &SceneSeries) -> Result<()> {
    for (k, scene) in series.scenes.iter().enumerate() {
        for (c, col) in scene.columns.iter().enumerate() {
            let r = crate::domain::validate_column(col);
            if !r.is_valid() {
                return Err(Error::InvalidColumn(format!("scene {k} cell {c}: {r}")));
            }
        }
    }
    Ok(())
}

/// Number of (time, pixel) samples in `series` that match `key`.
pub fn count_matching(series: &SceneSeries, key: ModelKey) -> usize {
    series
        .scenes
        .iter()
        .map(|s| s.columns.iter().filter(|c| matches_key(c, key)).count())
        .sum()
}

/// Uniform draw without replacement over every (time, pixel) matching `key`.
pub fn sample_uniform(
    series: &SceneSeries,
    key: ModelKey,
    n: usize,
    seed: u64,
    cfg: &RefRadConfig,
) -> Result<Dataset> {
    validate_series(series)?;
    let mut candidates: Vec<SampleRef> = series
        .scenes
        .iter()
        .enumerate()
        .flat_map(|(step, scene)| {
            scene
                .columns
                .iter()
                .enumerate()
                .filter(move |(_, col)| matches_key(col, key))
                .map(move |(cell, _)| SampleRef { step, cell })
        })
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoMatchingSamples(key));
    }
    if n > candidates.len() {
        return Err(Error::ImpossibleSampleCount {
            requested: n,
            reason: format!("only {} samples match {key}", candidates.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(n);
    make_dataset(series, key, candidates, seed, cfg)
}

/// Draws `n` samples for `key`. Cloudy keys are balanced across the
/// non-empty inner bins of `index`; clear keys are drawn uniformly in space
/// and time.
pub fn sample_balanced(
    index: &StratifiedIndex,
    series: &SceneSeries,
    key: ModelKey,
    n: usize,
    seed: u64,
    cfg: &RefRadConfig,
) -> Result<Dataset> {
    if key.sky == Sky::Clear {
        return sample_uniform(series, key, n, seed, cfg);
    }
    validate_series(series)?;
    if series.shape() != Some((index.nx, index.ny)) {
        return Err(Error::Shape("index and series shapes differ".into()));
    }
    let bins: Vec<Vec<SampleRef>> = index
        .inner_bins
        .iter()
        .flatten()
        .map(|bin| {
            bin.iter()
                .copied()
                .filter(|r| {
                    series
                        .scenes
                        .get(r.step)
                        .is_some_and(|s| matches_key(&s.columns[r.cell], key))
                })
                .collect()
        })
        .collect();
    let capacities: Vec<usize> = bins.iter().map(Vec::len).collect();
    let non_empty = capacities.iter().filter(|&&c| c > 0).count();
    if non_empty == 0 {
        return Err(Error::NoMatchingSamples(key));
    }
    if n < non_empty {
        return Err(Error::ImpossibleSampleCount {
            requested: n,
            reason: format!("fewer than the {non_empty} non-empty bins"),
        });
    }
    // Balance the center-of-mass deciles first, then spread each decile's
    // share over the cloud-cover classes that have it.
    let mut decile_caps = [0; N_BINS];
    for (b, &c) in capacities.iter().enumerate() {
        decile_caps[b % N_BINS] += c;
    }
    let decile_quota = allocate_quotas(&decile_caps, n)?;
    let mut quotas = vec![0; capacities.len()];
    for (d, &q) in decile_quota.iter().enumerate() {
        let members: Vec<usize> = (d..capacities.len()).step_by(N_BINS).collect();
        let caps: Vec<usize> = members.iter().map(|&b| capacities[b]).collect();
        for (&b, q) in members.iter().zip(allocate_quotas(&caps, q)?) {
            quotas[b] = q;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(n);
    for (mut bin, q) in bins.into_iter().zip(quotas) {
        bin.shuffle(&mut rng);
        chosen.extend_from_slice(&bin[..q]);
    }
    make_dataset(series, key, chosen, seed, cfg)
}

/// Center-of-mass histogram of a cloudy dataset by inner-bin position,
/// aggregated over outer classes.
pub fn com_decile_histogram(index: &StratifiedIndex, ds: &Dataset) -> Result<[usize; N_BINS]> {
    if ds.key.sky != Sky::Cloudy {
        return Err(Error::InvalidArgument(
            "center-of-mass histogram needs a cloudy dataset".into(),
        ));
    }
    let mut hist = [0; N_BINS];
    let cf_start = 4 * N_LAYERS;
    for s in &ds.samples {
        let o = s.origin.ok_or_else(|| {
            Error::InvalidArgument("histogram needs samples with known origin".into())
        })?;
        let cf: Vec<f64> = s.features[cf_start..cf_start + N_LAYERS]
            .iter()
            .map(|&v| v as f64)
            .collect();
        let com = cloud_center_of_mass(&cf)
            .ok_or_else(|| Error::InvalidArgument("cloud-free sample in cloudy dataset".into()))?;
        let outer = index.pixel_bin[o.i * index.ny + o.j];
        let inner = index
            .inner_bin_of(outer, com)
            .ok_or_else(|| Error::InvalidArgument("sample outside indexed series".into()))?;
        hist[inner] += 1;
    }
    Ok(hist)
}

/// Seeded shuffle split; the first part holds `⌈N·train_frac⌉` samples
/// (at most `N − 1`).
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_frac {train_frac} outside (0, 1)"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot split a dataset of {n} samples"
        )));
    }
    let n_train = ((n as f64 * train_frac - 1e-9).ceil() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| Dataset {
        key: ds.key,
        samples: idx.iter().map(|&k| ds.samples[k].clone()).collect(),
        provenance: ds.provenance,
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    ds.check_shapes()?;
    let nf = ds.n_features();
    let mut w = Writer::new(DATASET_MAGIC, ds.len() * (nf + N_OUTPUTS) * 4);
    w.bytes(&ds.key.to_bytes())
        .u32(nf as u32)
        .u32(N_OUTPUTS as u32)
        .u64(ds.len() as u64)
        .u64(ds.provenance.seed);
    for s in &ds.samples {
        w.f32s(s.features.iter().copied());
        w.f32s(s.targets.iter().copied());
    }
    Ok(w.finish())
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, FormatError> {
    let mut r = Reader::open(bytes, DATASET_MAGIC)?;
    let key_bytes = r.bytes3("model key")?;
    let nf = r.u32("n_features")? as usize;
    let nt = r.u32("n_targets")? as usize;
    let ns = r.u64("n_samples")?;
    let seed = r.u64("provenance seed")?;
    let ns = usize::try_from(ns)
        .map_err(|_| FormatError::Dimension(format!("n_samples {ns} too large")))?;
    let row = nf
        .checked_add(nt)
        .ok_or_else(|| FormatError::Dimension("row width overflows".into()))?;
    let total = ns
        .checked_mul(row)
        .ok_or_else(|| FormatError::Dimension("payload size overflows".into()))?;
    r.expect_payload(total)?;
    let key = ModelKey::from_bytes(key_bytes).ok_or(FormatError::BadKey(key_bytes))?;
    if nf != key.n_features() || nt != N_OUTPUTS {
        return Err(FormatError::Dimension(format!(
            "key {key} needs {} features and {N_OUTPUTS} targets, header says {nf} and {nt}",
            key.n_features()
        )));
    }
    let payload = r.f32s(total, "payload")?;
    let samples = payload
        .chunks_exact(row)
        .map(|c| Sample {
            features: c[..nf].to_vec(),
            targets: c[nf..].to_vec(),
            origin: None,
        })
        .collect();
    Ok(Dataset {
        key,
        samples,
        provenance: Provenance {
            seed,
            ..Default::default()
        },
    })
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    container::write_file(path.as_ref(), &encode_dataset(ds)?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = container::read_file(path)?;
    decode_dataset(&bytes).map_err(|e| Error::format(path, e))
}

/// CSV mirror of a dataset for inspection: `f0..fN, <target names>`.
pub fn write_dataset_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..ds.n_features())
        .map(|k| format!("f{k}"))
        .chain((0..N_LAYERS).map(|k| format!("hr{k}")))
        .chain(
            RadiationResult::flux_names(ds.key.radiation)
                .iter()
                .map(|s| s.to_string()),
        )
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for s in &ds.samples {
        let row: Vec<String> = s
            .features
            .iter()
            .chain(&s.targets)
            .map(|v| v.to_string())
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Mode, Surface};

    #[test]
    fn center_of_mass_cases() {
        let mut cf = vec![0.0; N_LAYERS];
        assert_eq!(cloud_center_of_mass(&cf), None);
        cf[9] = 0.3;
        assert_eq!(cloud_center_of_mass(&cf), Some(10.0));
        cf[19] = 0.3;
        assert_eq!(cloud_center_of_mass(&cf), Some(15.0));
        let mut cf = vec![0.0; N_LAYERS];
        cf[4] = 0.2;
        cf[39] = 0.6;
        let com = cloud_center_of_mass(&cf).unwrap();
        assert!((com - 31.25).abs() < 1e-12);
    }

    #[test]
    fn quotas_exact_division() {
        let q = allocate_quotas(&[500; 10], 1000).unwrap();
        assert!(q.iter().all(|&x| x == 100));
    }

    #[test]
    fn quotas_redistribute_shortfall() {
        let mut caps = vec![1000; 10];
        caps[3] = 3;
        let q = allocate_quotas(&caps, 1000).unwrap();
        assert_eq!(q[3], 3);
        assert_eq!(q.iter().sum::<usize>(), 1000);
        // 997 over nine bins: 110 or 111 each
        for (b, &x) in q.iter().enumerate() {
            if b != 3 {
                assert!(x == 110 || x == 111, "{x}");
            }
        }
        assert!(allocate_quotas(&caps, 10_000).is_err());
    }

    #[test]
    fn quotas_skip_empty_bins() {
        let q = allocate_quotas(&[0, 7, 0, 7], 10).unwrap();
        assert_eq!(q, vec![0, 5, 0, 5]);
    }

    fn toy(n: usize) -> Dataset {
        let key = ModelKey::new(Mode::Lw, Sky::Clear, Surface::Land);
        let samples = (0..n)
            .map(|k| Sample {
                features: vec![k as f32; key.n_features()],
                targets: vec![k as f32 * 0.5; N_OUTPUTS],
                origin: None,
            })
            .collect();
        Dataset::new(key, samples, Provenance::default()).unwrap()
    }

    #[test]
    fn split_sizes() {
        let (a, b) = split(&toy(100), 0.9, 1).unwrap();
        assert_eq!((a.len(), b.len()), (90, 10));
        let (a, b) = split(&toy(10), 0.9, 1).unwrap();
        assert_eq!((a.len(), b.len()), (9, 1));
        assert!(split(&toy(1), 0.9, 1).is_err());
        assert!(split(&toy(10), 1.0, 1).is_err());
    }

    #[test]
    fn split_is_seeded_and_exhaustive() {
        let ds = toy(50);
        let (a1, b1) = split(&ds, 0.9, 42).unwrap();
        let (a2, b2) = split(&ds, 0.9, 42).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
        let mut seen: Vec<f32> = a1
            .samples
            .iter()
            .chain(&b1.samples)
            .map(|s| s.features[0])
            .collect();
        seen.sort_by(f32::total_cmp);
        assert_eq!(seen, (0..50).map(|k| k as f32).collect::<Vec<_>>());
    }

    #[test]
    fn normalization_population_std() {
        let mut ds = toy(2);
        ds.samples[0].features[0] = 1.0;
        ds.samples[1].features[0] = 3.0;
        let st = fit_normalization(&ds).unwrap();
        assert_eq!(st.feat_mean[0], 2.0);
        assert_eq!(st.feat_std[0], 1.0);
    }

    #[test]
    fn constant_column_is_floored() {
        let mut ds = toy(5);
        for s in &mut ds.samples {
            s.features[7] = 4.0;
        }
        let st = fit_normalization(&ds).unwrap();
        assert_eq!(st.feat_std[7], STD_FLOOR);
        let x: Vec<f64> = ds.samples[0].features.iter().map(|&v| v as f64).collect();
        assert_eq!(st.normalize_features(&x)[7], 0.0);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_dataset(&toy(3)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_dataset(&bytes),
            Err(FormatError::BadMagic { .. })
        ));
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let bytes = encode_dataset(&toy(3)).unwrap();
        let mut bad = bytes.clone();
        let k = bytes.len() - 20;
        bad[k] ^= 0x40;
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(&bad[..bad.len() - 4]);
        assert_ne!(stored, computed);
        assert_eq!(
            decode_dataset(&bad),
            Err(FormatError::ChecksumFailure { stored, computed })
        );
    }

    #[test]
    fn version_and_truncation() {
        let bytes = encode_dataset(&toy(3)).unwrap();
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(
            decode_dataset(&v),
            Err(FormatError::VersionMismatch { found: 9, .. })
        ));
        assert!(matches!(
            decode_dataset(&bytes[..bytes.len() - 10]),
            Err(FormatError::Truncated(_))
        ));
    }
}
