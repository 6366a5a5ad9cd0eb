//! Single-hidden-layer tanh network:
//!
//! `y_q = b2_q + Σ_j W2_qj · tanh(b1_j + Σ_i W1_ji · x_i)`
//!
//! with a linear output layer. Training runs in f64; weight files and
//! batched inference use f32.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{self, Reader, Writer};
use crate::datapipe::NormStats;
use crate::domain::{ModelKey, N_OUTPUTS};
use crate::error::{Error, FormatError, Result};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"RNNW";
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    /// `k × n`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `m × k`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpWeights {
    pub fn zeros(n: usize, k: usize, m: usize) -> Self {
        Self {
            n,
            k,
            m,
            w1: vec![0.0; k * n],
            b1: vec![0.0; k],
            w2: vec![0.0; m * k],
            b2: vec![0.0; m],
        }
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn check(&self) -> Result<()> {
        let (n, k, m) = (self.n, self.k, self.m);
        if n == 0 || k == 0 || m == 0 {
            return Err(Error::Shape("network dimensions must be positive".into()));
        }
        if self.w1.len() != k * n || self.b1.len() != k || self.w2.len() != m * k || self.b2.len() != m
        {
            return Err(Error::Shape(format!(
                "parameter lengths do not match n={n}, k={k}, m={m}"
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    /// All parameters in file order: W1, B1, W2, B2.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    /// Every parameter rounded to f32.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        out.params_mut().for_each(|p| *p = *p as f32 as f64);
        out
    }
}

/// Kaiming-uniform weights with gain 1 (`U(±√(6/fan_in))`), zero biases.
pub fn init_kaiming(n: usize, k: usize, m: usize, seed: u64) -> Result<MlpWeights> {
    if n == 0 || k == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "network dimensions must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = MlpWeights::zeros(n, k, m);
    let a1 = (6.0 / n as f64).sqrt();
    w.w1.iter_mut().for_each(|v| *v = rng.random_range(-a1..=a1));
    let a2 = (6.0 / k as f64).sqrt();
    w.w2.iter_mut().for_each(|v| *v = rng.random_range(-a2..=a2));
    Ok(w)
}

pub fn forward(w: &MlpWeights, x: &[f64]) -> Result<Vec<f64>> {
    w.check()?;
    if x.len() != w.n {
        return Err(Error::Shape(format!(
            "input has length {}, network expects {}",
            x.len(),
            w.n
        )));
    }
    let hidden: Vec<f64> = (0..w.k)
        .map(|j| {
            let row = &w.w1[j * w.n..(j + 1) * w.n];
            let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            (w.b1[j] + z).tanh()
        })
        .collect();
    Ok((0..w.m)
        .map(|q| {
            let row = &w.w2[q * w.k..(q + 1) * w.k];
            w.b2[q] + row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect())
}

/// `C (m×n) = A (m×k) · B`, where `B` is `k×n` or, with `b_transposed`,
/// stored as `n×k`.
#[allow(clippy::too_many_arguments)]
fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_transposed { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths cover the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Forward pass over a row-major batch (`rows × n`); returns `rows × m`.
pub fn forward_batch(w: &MlpWeights, x: &[f64]) -> Result<Vec<f64>> {
    w.check()?;
    if x.len() % w.n != 0 {
        return Err(Error::Shape(format!(
            "ragged batch: {} values is not a multiple of width {}",
            x.len(),
            w.n
        )));
    }
    let rows = x.len() / w.n;
    let mut h = vec![0.0; rows * w.k];
    hidden_layer(w, x, rows, &mut h);
    let mut y = vec![0.0; rows * w.m];
    output_layer(w, &h, rows, &mut y);
    Ok(y)
}

fn hidden_layer(w: &MlpWeights, x: &[f64], rows: usize, h: &mut [f64]) {
    for r in h.chunks_exact_mut(w.k) {
        r.copy_from_slice(&w.b1);
    }
    dgemm(rows, w.n, w.k, x, false, &w.w1, true, 1.0, h);
    h.iter_mut().for_each(|v| *v = v.tanh());
}

fn output_layer(w: &MlpWeights, h: &[f64], rows: usize, y: &mut [f64]) {
    for r in y.chunks_exact_mut(w.m) {
        r.copy_from_slice(&w.b2);
    }
    dgemm(rows, w.k, w.m, h, false, &w.w2, true, 1.0, y);
}

/// Gradients of the loss with respect to every parameter, laid out like
/// [`MlpWeights`].
pub type Gradients = MlpWeights;

/// Per-sample loss `(1/m) Σ_q (y_q − t_q)²` and its analytic gradients.
pub fn backward(w: &MlpWeights, x: &[f64], y_true: &[f64]) -> Result<(Gradients, f64)> {
    if y_true.len() != w.m {
        return Err(Error::Shape(format!(
            "target has length {}, network outputs {}",
            y_true.len(),
            w.m
        )));
    }
    if x.len() != w.n {
        return Err(Error::Shape(format!(
            "input has length {}, network expects {}",
            x.len(),
            w.n
        )));
    }
    let mut g = MlpWeights::zeros(w.n, w.k, w.m);
    let mut scratch = BatchScratch::default();
    let loss = batch_gradients(w, x, y_true, 1, &mut g, &mut scratch)?;
    Ok((g, loss))
}

#[derive(Debug, Default)]
pub(crate) struct BatchScratch {
    h: Vec<f64>,
    y: Vec<f64>,
}

/// Mean per-sample loss over a batch and its gradients (written into `g`).
pub(crate) fn batch_gradients(
    w: &MlpWeights,
    x: &[f64],
    y_true: &[f64],
    rows: usize,
    g: &mut Gradients,
    s: &mut BatchScratch,
) -> Result<f64> {
    w.check()?;
    if x.len() != rows * w.n || y_true.len() != rows * w.m {
        return Err(Error::Shape("batch shapes do not match the network".into()));
    }
    let (n, k, m) = (w.n, w.k, w.m);
    s.h.resize(rows * k, 0.0);
    s.y.resize(rows * m, 0.0);
    hidden_layer(w, x, rows, &mut s.h);
    output_layer(w, &s.h, rows, &mut s.y);

    // dL/dy, reusing the output buffer
    let scale = 2.0 / (m * rows) as f64;
    let mut loss = 0.0;
    for (yp, yt) in s.y.iter_mut().zip(y_true) {
        let r = *yp - yt;
        loss += r * r;
        *yp = scale * r;
    }
    loss /= (m * rows) as f64;
    let dy = &s.y;

    // dW2 = dyᵀ · H
    dgemm(m, rows, k, dy, true, &s.h, false, 0.0, &mut g.w2);
    g.b2.iter_mut().for_each(|v| *v = 0.0);
    for r in dy.chunks_exact(m) {
        for (b, d) in g.b2.iter_mut().zip(r) {
            *b += d;
        }
    }

    // dZ = (dy · W2) ⊙ (1 − H²)
    let mut dz = vec![0.0; rows * k];
    dgemm(rows, m, k, dy, false, &w.w2, false, 0.0, &mut dz);
    for (d, h) in dz.iter_mut().zip(&s.h) {
        *d *= 1.0 - h * h;
    }
    dgemm(k, rows, n, &dz, true, x, false, 0.0, &mut g.w1);
    g.b1.iter_mut().for_each(|v| *v = 0.0);
    for r in dz.chunks_exact(k) {
        for (b, d) in g.b1.iter_mut().zip(r) {
            *b += d;
        }
    }
    Ok(loss)
}

/// f32 copy of a network for throughput-oriented inference.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights32 {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: Vec<f32>,
}

impl From<&MlpWeights> for MlpWeights32 {
    fn from(w: &MlpWeights) -> Self {
        let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect();
        Self {
            n: w.n,
            k: w.k,
            m: w.m,
            w1: f(&w.w1),
            b1: f(&w.b1),
            w2: f(&w.w2),
            b2: f(&w.b2),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn sgemm_bt(m: usize, k: usize, n: usize, a: &[f32], b_nk: &[f32], c: &mut [f32]) {
    debug_assert!(a.len() >= m * k && b_nk.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths cover the strided extents checked above.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b_nk.as_ptr(),
            1,
            k as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl MlpWeights32 {
    /// Batched f32 forward pass; `h` and `y` are resized scratch/output.
    pub fn forward_batch_into(&self, x: &[f32], h: &mut Vec<f32>, y: &mut Vec<f32>) -> Result<()> {
        if x.len() % self.n != 0 {
            return Err(Error::Shape(format!(
                "ragged batch: {} values is not a multiple of width {}",
                x.len(),
                self.n
            )));
        }
        let rows = x.len() / self.n;
        h.clear();
        for _ in 0..rows {
            h.extend_from_slice(&self.b1);
        }
        sgemm_bt(rows, self.n, self.k, x, &self.w1, h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        y.clear();
        for _ in 0..rows {
            y.extend_from_slice(&self.b2);
        }
        sgemm_bt(rows, self.k, self.m, h, &self.w2, y);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub epochs: usize,
    pub final_nrmse: f64,
    pub seed: u64,
    /// Path or description of the model this one was fine-tuned from.
    pub lineage: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub key: ModelKey,
    pub weights: MlpWeights,
    pub norm: NormStats,
    pub meta: ModelMeta,
}

impl MlpModel {
    pub fn new(key: ModelKey, weights: MlpWeights, norm: NormStats, meta: ModelMeta) -> Result<Self> {
        let model = Self {
            key,
            weights,
            norm,
            meta,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        self.weights.check()?;
        let w = &self.weights;
        if w.n != self.key.n_features() || w.m != N_OUTPUTS {
            return Err(Error::Shape(format!(
                "model {} needs n={} and m={N_OUTPUTS}, got n={} m={}",
                self.key,
                self.key.n_features(),
                w.n,
                w.m
            )));
        }
        let nm = &self.norm;
        if nm.feat_mean.len() != w.n
            || nm.feat_std.len() != w.n
            || nm.targ_mean.len() != w.m
            || nm.targ_std.len() != w.m
        {
            return Err(Error::Shape("normalisation lengths do not match the network".into()));
        }
        Ok(())
    }

    /// Physical-unit prediction for one raw feature vector.
    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        let x = self.norm.normalize_features(features);
        let y = forward(&self.weights, &x)?;
        Ok(self.norm.denormalize_targets(&y))
    }

    /// Weights and statistics rounded to f32, as they are stored on disk.
    pub fn quantized(&self) -> Self {
        Self {
            key: self.key,
            weights: self.weights.quantized(),
            norm: self.norm.quantized(),
            meta: self.meta.clone(),
        }
    }
}

pub fn encode_weights(model: &MlpModel) -> Result<Vec<u8>> {
    model.check()?;
    let w = &model.weights;
    let nm = &model.norm;
    let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    let mut out = Writer::new(WEIGHTS_MAGIC, w.n_params() * 4 + (2 * w.n + 2 * w.m) * 4);
    out.bytes(&model.key.to_bytes())
        .u32(w.n as u32)
        .u32(w.k as u32)
        .u32(w.m as u32);
    for arr in [
        &nm.feat_mean,
        &nm.feat_std,
        &nm.targ_mean,
        &nm.targ_std,
        &w.w1,
        &w.b1,
        &w.w2,
        &w.b2,
    ] {
        out.f32s(to32(arr));
    }
    Ok(out.finish())
}

pub fn decode_weights(bytes: &[u8]) -> Result<MlpModel, FormatError> {
    let mut r = Reader::open(bytes, WEIGHTS_MAGIC)?;
    let key_bytes = r.bytes3("model key")?;
    let n = r.u32("n")? as usize;
    let k = r.u32("k")? as usize;
    let m = r.u32("m")? as usize;
    let key = ModelKey::from_bytes(key_bytes).ok_or(FormatError::BadKey(key_bytes))?;
    if n != key.n_features() || m != N_OUTPUTS || k == 0 {
        return Err(FormatError::Dimension(format!(
            "model {key} needs n={} m={N_OUTPUTS} k>=1, header has n={n} k={k} m={m}",
            key.n_features()
        )));
    }
    let arrays = [n, n, m, m, k * n, k, m * k, m];
    let names = ["feat_mean", "feat_std", "targ_mean", "targ_std", "W1", "B1", "W2", "B2"];
    let mut vals: Vec<Vec<f64>> = Vec::with_capacity(8);
    for (len, name) in arrays.iter().zip(names) {
        let v = r.f32s(*len, name)?;
        vals.push(v.into_iter().map(f64::from).collect());
    }
    r.expect_payload(0)?;
    let mut it = vals.into_iter();
    let mut next = || it.next().unwrap();
    let norm = NormStats {
        feat_mean: next(),
        feat_std: next(),
        targ_mean: next(),
        targ_std: next(),
    };
    let weights = MlpWeights {
        n,
        k,
        m,
        w1: next(),
        b1: next(),
        w2: next(),
        b2: next(),
    };
    Ok(MlpModel {
        key,
        weights,
        norm,
        meta: ModelMeta::default(),
    })
}

pub fn save_weights(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    container::write_file(path.as_ref(), &encode_weights(model)?)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let bytes = container::read_file(path)?;
    decode_weights(&bytes).map_err(|e| Error::format(path, e))
}
