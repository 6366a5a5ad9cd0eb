#![allow(dead_code)]

use std::sync::Arc;

use proptest::prelude::*;
use radnet::datapipe::NormStats;
use radnet::domain::*;
use radnet::emulator::EmulatorBank;
use radnet::net::{init_kaiming, MlpModel, ModelMeta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A physically plausible random column drawn from `seed`.
pub fn column_from_seed(seed: u64) -> AtmosphericColumn {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ps = rng.random_range(940.0..1030.0);
    let grid = Arc::new(LevelGrid::sigma(5.0, ps).unwrap());
    let p = grid.p_layers();
    let t_sfc: f64 = rng.random_range(240.0..315.0);
    let lapse = rng.random_range(4.0..9.0);
    let wet = rng.random_range(0.0..0.025);
    let cloudy = rng.random_bool(0.5);
    let t_layer = p
        .iter()
        .map(|&pl| (t_sfc - lapse * 7.29 * (ps / pl).ln()).max(190.0) + rng.random_range(-2.0..2.0))
        .collect();
    let qv_layer = p.iter().map(|&pl| wet * (pl / ps).powi(3)).collect();
    let o3_layer = p.iter().map(|_| rng.random_range(0.0..1e-5)).collect();
    let cf_layer = p
        .iter()
        .map(|_| if cloudy && rng.random_bool(0.3) { rng.random_range(0.01..=1.0) } else { 0.0 })
        .collect();
    AtmosphericColumn {
        grid,
        t_layer,
        qv_layer,
        o3_layer,
        cf_layer,
        t_skin: t_sfc + rng.random_range(-8.0..12.0),
        emissivity: rng.random_range(0.8..=1.0),
        albedo: rng.random_range(0.0..=1.0),
        mu0_s0: if rng.random_bool(0.8) { rng.random_range(1.0..1361.0) } else { 0.0 },
        surface: if rng.random_bool(0.5) { Surface::Land } else { Surface::Ocean },
    }
}

pub fn any_column() -> impl Strategy<Value = AtmosphericColumn> {
    any::<u64>().prop_map(column_from_seed)
}

/// Bank of small random networks with plausible normalisation statistics.
pub fn random_bank(seed: u64, hidden: usize) -> EmulatorBank {
    let models = ModelKey::all()
        .into_iter()
        .enumerate()
        .map(|(k, key)| {
            let n = key.n_features();
            let w = init_kaiming(n, hidden, N_OUTPUTS, seed.wrapping_add(k as u64)).unwrap();
            let mut norm = NormStats::identity(n, N_OUTPUTS);
            norm.feat_std.iter_mut().for_each(|s| *s = 50.0);
            norm.targ_std.iter_mut().for_each(|s| *s = 3.0);
            MlpModel::new(key, w, norm, ModelMeta::default()).unwrap()
        })
        .collect();
    EmulatorBank::new(models).unwrap()
}
