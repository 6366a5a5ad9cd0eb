//! Minibatch training with a reduce-on-plateau learning-rate schedule,
//! early stopping, best-epoch snapshots and warm-started fine-tuning.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datapipe::{column_stats, fit_normalization, Dataset, NormStats};
use crate::domain::{ModelKey, N_OUTPUTS};
use crate::error::{Error, Result};
use crate::net::{
    batch_gradients, forward_batch, init_kaiming, BatchScratch, MlpModel, MlpWeights, ModelMeta,
    DEFAULT_HIDDEN,
};

/// Minimum decrease of the validation loss that counts as an improvement.
pub const IMPROVEMENT_DELTA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lr0: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub lr_min: f64,
    pub early_stop_patience: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            lr0: 3e-3,
            batch: 256,
            max_epochs: 1500,
            plateau_patience: 5,
            plateau_factor: 0.5,
            lr_min: 1e-7,
            early_stop_patience: 20,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > self.lr_min && self.lr_min > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need lr0 > lr_min > 0 (lr0={}, lr_min={})",
                self.lr0, self.lr_min
            )));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument(
                "patience values and batch size must be at least 1".into(),
            ));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "plateau_factor {} outside (0, 1)",
                self.plateau_factor
            )));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be at least 1".into()));
        }
        Ok(())
    }
}

/// Reduce-on-plateau schedule: after `patience` consecutive epochs without
/// an improvement of more than [`IMPROVEMENT_DELTA`], the learning rate is
/// multiplied by `factor`, never going below `lr_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub best: f64,
    pub stagnant: usize,
    pub patience: usize,
    pub factor: f64,
    pub lr_min: f64,
    /// Set when a plateau is reached while already at `lr_min`.
    pub exhausted: bool,
}

impl PlateauScheduler {
    pub fn new(lr0: f64, patience: usize, factor: f64, lr_min: f64) -> Self {
        Self {
            lr: lr0,
            best: f64::INFINITY,
            stagnant: 0,
            patience,
            factor,
            lr_min,
            exhausted: false,
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.lr0, cfg.plateau_patience, cfg.plateau_factor, cfg.lr_min)
    }

    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - IMPROVEMENT_DELTA {
            self.best = val_loss;
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
            if self.stagnant >= self.patience {
                if self.lr <= self.lr_min {
                    self.exhausted = true;
                }
                self.lr = (self.lr * self.factor).max(self.lr_min);
                self.stagnant = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The learning rate reached its floor and the loss still stalled.
    Converged,
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_nrmse: Vec<f64>,
    /// Learning rate used during each epoch.
    pub lr: Vec<f64>,
    /// Index of the epoch whose weights were returned, if any epoch ran.
    pub best_epoch: Option<usize>,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.val_loss.len()
    }

    pub fn best_nrmse(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.val_nrmse[e])
    }

    /// First epoch (1-based count) at which validation NRMSE is at or
    /// below `target`.
    pub fn epochs_to_reach(&self, target: f64) -> Option<usize> {
        self.val_nrmse.iter().position(|&v| v <= target).map(|e| e + 1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_nrmse,lr\n");
        for e in 0..self.epochs() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e + 1,
                self.train_loss[e],
                self.val_loss[e],
                self.val_nrmse[e],
                self.lr[e]
            );
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Mean over outputs of the per-output RMSE divided by that output's std.
/// `pred` and `target` are row-major with `targ_std.len()` columns.
pub fn nrmse(pred: &[f64], target: &[f64], targ_std: &[f64]) -> Result<f64> {
    let m = targ_std.len();
    if m == 0 || pred.is_empty() {
        return Err(Error::InvalidArgument("NRMSE of an empty batch".into()));
    }
    if pred.len() != target.len() || pred.len() % m != 0 {
        return Err(Error::Shape(format!(
            "pred has {} values, target {}, width {m}",
            pred.len(),
            target.len()
        )));
    }
    if targ_std.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("target std must be positive".into()));
    }
    let rows = pred.len() / m;
    let mut sq = vec![0.0; m];
    for (p, t) in pred.chunks_exact(m).zip(target.chunks_exact(m)) {
        for q in 0..m {
            let d = p[q] - t[q];
            sq[q] += d * d;
        }
    }
    Ok(sq
        .iter()
        .zip(targ_std)
        .map(|(s, sd)| (s / rows as f64).sqrt() / sd)
        .sum::<f64>()
        / m as f64)
}

/// Normalised training/validation matrices plus what is needed to report
/// physical-unit NRMSE.
struct Prepared {
    n: usize,
    x_train: Vec<f64>,
    y_train: Vec<f64>,
    x_val: Vec<f64>,
    y_val: Vec<f64>,
    /// Validation targets in physical units.
    y_val_phys: Vec<f64>,
    /// Std of the validation targets, the NRMSE yardstick.
    val_std: Vec<f64>,
}

fn normalize_rows(data: &[f64], width: usize, mean: &[f64], std: &[f64]) -> Vec<f64> {
    data.chunks_exact(width)
        .flat_map(|r| {
            r.iter()
                .zip(mean.iter().zip(std))
                .map(|(v, (m, s))| (v - m) / s)
        })
        .collect()
}

fn prepare(train: &Dataset, val: &Dataset, norm: &NormStats) -> Prepared {
    let n = train.n_features();
    let y_val_phys = val.target_matrix();
    let (_, val_std) = column_stats(&y_val_phys, N_OUTPUTS);
    Prepared {
        n,
        x_train: normalize_rows(&train.feature_matrix(), n, &norm.feat_mean, &norm.feat_std),
        y_train: normalize_rows(&train.target_matrix(), N_OUTPUTS, &norm.targ_mean, &norm.targ_std),
        x_val: normalize_rows(&val.feature_matrix(), n, &norm.feat_mean, &norm.feat_std),
        y_val: normalize_rows(&y_val_phys, N_OUTPUTS, &norm.targ_mean, &norm.targ_std),
        y_val_phys,
        val_std,
    }
}

fn check_inputs(key: ModelKey, train: &Dataset, val: &Dataset) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }
    if train.key != key || val.key != key {
        return Err(Error::InvalidArgument(format!(
            "datasets ({} / {}) do not match model key {key}",
            train.key, val.key
        )));
    }
    Ok(())
}

/// Validation loss (MSE on normalised targets) and physical-unit NRMSE.
fn evaluate(w: &MlpWeights, p: &Prepared, norm: &NormStats) -> Result<(f64, f64)> {
    let y = forward_batch(w, &p.x_val)?;
    let mse = y
        .iter()
        .zip(&p.y_val)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64;
    let phys: Vec<f64> = y
        .chunks_exact(N_OUTPUTS)
        .flat_map(|r| norm.denormalize_targets(r))
        .collect();
    Ok((mse, nrmse(&phys, &p.y_val_phys, &p.val_std)?))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, w: &mut MlpWeights, g: &MlpWeights, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((p, gi), m), v) in w
            .params_mut()
            .zip(g.params())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = Self::B1 * *m + (1.0 - Self::B1) * gi;
            *v = Self::B2 * *v + (1.0 - Self::B2) * gi * gi;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn run_loop(
    mut w: MlpWeights,
    p: &Prepared,
    norm: &NormStats,
    cfg: &TrainConfig,
) -> Result<(MlpWeights, TrainHistory)> {
    let mut hist = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        val_nrmse: Vec::new(),
        lr: Vec::new(),
        best_epoch: None,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut best = w.clone();
    let mut best_val = f64::INFINITY;
    let mut sched = PlateauScheduler::from_config(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_7EA1);
    let rows = p.x_train.len() / p.n;
    let mut order: Vec<usize> = (0..rows).collect();
    let mut g = MlpWeights::zeros(w.n, w.k, w.m);
    let mut scratch = BatchScratch::default();
    let mut adam = Adam::new(w.n_params());
    let (mut xb, mut yb) = (Vec::new(), Vec::new());

    for epoch in 0..cfg.max_epochs {
        let lr = sched.lr;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            xb.clear();
            yb.clear();
            for &r in chunk {
                xb.extend_from_slice(&p.x_train[r * p.n..(r + 1) * p.n]);
                yb.extend_from_slice(&p.y_train[r * N_OUTPUTS..(r + 1) * N_OUTPUTS]);
            }
            let loss = batch_gradients(&w, &xb, &yb, chunk.len(), &mut g, &mut scratch)?;
            loss_sum += loss * chunk.len() as f64;
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut w, &g, lr),
                Optimizer::Sgd => {
                    for (pi, gi) in w.params_mut().zip(g.params()) {
                        *pi -= lr * gi;
                    }
                }
            }
        }
        let train_loss = loss_sum / rows as f64;
        let (val_loss, val_nrmse) = evaluate(&w, p, norm)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch: epoch + 1,
                train_loss,
                val_loss,
            });
        }
        hist.train_loss.push(train_loss);
        hist.val_loss.push(val_loss);
        hist.val_nrmse.push(val_nrmse);
        hist.lr.push(lr);

        if val_loss < best_val - IMPROVEMENT_DELTA {
            best_val = val_loss;
            best.clone_from(&w);
            hist.best_epoch = Some(epoch);
        }
        sched.step(val_loss);
        if sched.exhausted {
            hist.stop_reason = StopReason::Converged;
            break;
        }
        let since_best = epoch - hist.best_epoch.unwrap_or(0);
        if hist.best_epoch.is_some() && since_best >= cfg.early_stop_patience {
            hist.stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    Ok((best, hist))
}

/// Trains a fresh sub-model. Normalisation is fitted on `train` only.
pub fn train(
    key: ModelKey,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainHistory)> {
    cfg.validate()?;
    check_inputs(key, train, val)?;
    let norm = fit_normalization(train)?.quantized();
    let p = prepare(train, val, &norm);
    let w0 = init_kaiming(key.n_features(), cfg.hidden, N_OUTPUTS, cfg.seed)?;
    let (w, hist) = run_loop(w0, &p, &norm, cfg)?;
    let meta = ModelMeta {
        epochs: hist.epochs(),
        final_nrmse: hist.best_nrmse().unwrap_or(f64::NAN),
        seed: cfg.seed,
        lineage: None,
    };
    let model = MlpModel::new(key, w, norm, meta)?.quantized();
    Ok((model, hist))
}

/// Re-expresses a network trained under `old` statistics so it computes
/// the same physical-unit function under `new` statistics.
pub fn rebase_normalization(w: &MlpWeights, old: &NormStats, new: &NormStats) -> MlpWeights {
    let mut out = w.clone();
    for j in 0..w.k {
        let mut shift = 0.0;
        for i in 0..w.n {
            let a = w.w1[j * w.n + i];
            out.w1[j * w.n + i] = a * new.feat_std[i] / old.feat_std[i];
            shift += a * (new.feat_mean[i] - old.feat_mean[i]) / old.feat_std[i];
        }
        out.b1[j] = w.b1[j] + shift;
    }
    for q in 0..w.m {
        let ratio = old.targ_std[q] / new.targ_std[q];
        for j in 0..w.k {
            out.w2[q * w.k + j] = w.w2[q * w.k + j] * ratio;
        }
        out.b2[q] = (old.targ_std[q] * w.b2[q] + old.targ_mean[q] - new.targ_mean[q])
            / new.targ_std[q];
    }
    out
}

/// Continues training `base` on new data. Statistics are refitted on
/// `new_train` and the base weights are rebased onto them first, so the
/// starting point computes exactly the base model's function.
pub fn finetune(
    base: &MlpModel,
    new_train: &Dataset,
    new_val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainHistory)> {
    cfg.validate()?;
    check_inputs(base.key, new_train, new_val)?;
    if base.weights.n != new_train.n_features() || base.weights.m != N_OUTPUTS {
        return Err(Error::Shape(format!(
            "base model width {} does not match data width {}",
            base.weights.n,
            new_train.n_features()
        )));
    }
    let norm = fit_normalization(new_train)?.quantized();
    let p = prepare(new_train, new_val, &norm);
    let w0 = rebase_normalization(&base.weights, &base.norm, &norm);
    let (w, hist) = run_loop(w0, &p, &norm, cfg)?;
    let lineage = format!(
        "fine-tuned from {} (seed {}, {} epochs{})",
        base.key,
        base.meta.seed,
        base.meta.epochs,
        base.meta
            .lineage
            .as_ref()
            .map(|l| format!("; {l}"))
            .unwrap_or_default()
    );
    let meta = ModelMeta {
        epochs: hist.epochs(),
        final_nrmse: hist.best_nrmse().unwrap_or(f64::NAN),
        seed: cfg.seed,
        lineage: Some(lineage),
    };
    let model = MlpModel::new(base.key, w, norm, meta)?.quantized();
    Ok((model, hist))
}

/// Physical-unit NRMSE of `model` on `ds`, with `ds`'s own target std as
/// the yardstick.
pub fn evaluate_nrmse(model: &MlpModel, ds: &Dataset) -> Result<f64> {
    if ds.key != model.key {
        return Err(Error::InvalidArgument(format!(
            "dataset key {} does not match model {}",
            ds.key, model.key
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidArgument("NRMSE of an empty dataset".into()));
    }
    let n = ds.n_features();
    let x = normalize_rows(&ds.feature_matrix(), n, &model.norm.feat_mean, &model.norm.feat_std);
    let y = forward_batch(&model.weights, &x)?;
    let phys: Vec<f64> = y
        .chunks_exact(N_OUTPUTS)
        .flat_map(|r| model.norm.denormalize_targets(r))
        .collect();
    let target = ds.target_matrix();
    let (_, std) = column_stats(&target, N_OUTPUTS);
    nrmse(&phys, &target, &std)
}
