use std::sync::OnceLock;

use proptest::prelude::*;
use radnet::datapipe::*;
use radnet::domain::*;
use radnet::refrad::{reference_radiation, RefRadConfig};
use radnet::scenegen::*;

fn series() -> &'static SceneSeries {
    static S: OnceLock<SceneSeries> = OnceLock::new();
    S.get_or_init(|| {
        let spec = SceneSpec { nx: 16, ny: 12, seed: 5, ..Default::default() };
        generate_series(&spec, SEPTEMBER_2022, 3600, 24, None).unwrap()
    })
}

fn dataset(key: ModelKey, n: usize, seed: u64) -> Dataset {
    sample_uniform(series(), key, n, seed, &RefRadConfig::default()).unwrap()
}

fn cloudy_keys() -> impl Strategy<Value = ModelKey> {
    prop::sample::select(vec!["L2L", "O2L", "L2S", "O2S"]).prop_map(|c| c.parse().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn samples_match_their_key_and_reference(key in cloudy_keys(), seed in any::<u64>()) {
        let ds = dataset(key, 20, seed);
        let cfg = RefRadConfig::default();
        for s in &ds.samples {
            let o = s.origin.unwrap();
            let col = series().scenes[o.step].column(o.i, o.j);
            prop_assert_eq!(col.surface, key.surface);
            prop_assert_eq!(classify_sky(col, 0.0).unwrap(), key.sky);
            if key.radiation == Mode::Sw {
                prop_assert!(col.is_daylight());
            }
            let want = reference_radiation(col, key.radiation, &cfg).unwrap().to_targets();
            let got: Vec<f32> = want.iter().map(|&v| v as f32).collect();
            prop_assert_eq!(&s.targets, &got);
        }
    }

    #[test]
    fn dataset_round_trip_and_corruption(seed in any::<u64>(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let ds = dataset("L2L".parse().unwrap(), 3, seed);
        let bytes = encode_dataset(&ds).unwrap();
        let back = decode_dataset(&bytes).unwrap();
        prop_assert!(back.same_contents(&ds));
        prop_assert_eq!(encode_dataset(&back).unwrap(), bytes.clone());
        let mut bad = bytes;
        let i = pos.index(bad.len());
        bad[i] ^= flip;
        prop_assert!(decode_dataset(&bad).is_err());
    }

    #[test]
    fn split_partitions_the_dataset(seed in any::<u64>(), frac in 0.05f64..0.95, n in 2usize..60) {
        let ds = dataset("L2L".parse().unwrap(), n, 3);
        let (a, b) = split(&ds, frac, seed).unwrap();
        prop_assert_eq!(a.len() + b.len(), n);
        prop_assert!(!a.is_empty() && !b.is_empty());
        let mut all: Vec<_> = a.samples.iter().chain(&b.samples).map(|s| s.origin.unwrap()).collect();
        all.sort_by_key(|o| (o.step, o.i, o.j));
        all.dedup();
        prop_assert_eq!(all.len(), n);
    }

    #[test]
    fn quotas_are_feasible_and_level(caps in prop::collection::vec(0usize..200, 1..20), frac in 0.0f64..=1.0) {
        let total: usize = caps.iter().sum();
        let n = (total as f64 * frac) as usize;
        let q = allocate_quotas(&caps, n).unwrap();
        prop_assert_eq!(q.iter().sum::<usize>(), n);
        for (qi, ci) in q.iter().zip(&caps) {
            prop_assert!(qi <= ci);
        }
        // bins that were not exhausted differ by at most one
        let open: Vec<usize> = q.iter().zip(&caps).filter(|(a, b)| a < b).map(|(a, _)| *a).collect();
        if let (Some(lo), Some(hi)) = (open.iter().min(), open.iter().max()) {
            prop_assert!(hi - lo <= 1);
            // and every exhausted bin holds no more than an open one
            for (qi, ci) in q.iter().zip(&caps) {
                if qi == ci {
                    prop_assert!(qi <= hi);
                }
            }
        }
    }

    #[test]
    fn normalisation_standardises(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..40)) {
        let data: Vec<f64> = rows.concat();
        let (mean, std) = column_stats(&data, 3);
        for c in 0..3 {
            let col: Vec<f64> = rows.iter().map(|r| (r[c] - mean[c]) / std[c]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            prop_assert!(m.abs() < 1e-9);
            if std[c] > STD_FLOOR {
                let v = col.iter().map(|x| x * x).sum::<f64>() / col.len() as f64;
                prop_assert!((v - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn balanced_sampling_fills_bins_evenly() {
    let idx = build_stratification(series()).unwrap();
    let key: ModelKey = "O2L".parse().unwrap();
    let n = count_matching(series(), key) / 4;
    let ds = sample_balanced(&idx, series(), key, n, 8, &RefRadConfig::default()).unwrap();
    assert_eq!(ds.len(), n);
    let h = com_decile_histogram(&idx, &ds).unwrap();
    let (lo, hi) = (h.iter().min().unwrap(), h.iter().max().unwrap());
    assert!(*hi as f64 <= 1.5 * *lo as f64, "{h:?}");
}

#[test]
fn impossible_requests_are_errors() {
    let key: ModelKey = "L2S".parse().unwrap();
    let available = count_matching(series(), key);
    assert!(available > 0);
    assert!(matches!(
        sample_uniform(series(), key, available + 1, 0, &RefRadConfig::default()),
        Err(radnet::Error::ImpossibleSampleCount { .. })
    ));
    let missing = ModelKey::all().into_iter().find(|k| count_matching(series(), *k) == 0);
    if let Some(k) = missing {
        assert!(matches!(
            sample_uniform(series(), k, 1, 0, &RefRadConfig::default()),
            Err(radnet::Error::NoMatchingSamples(_))
        ));
    }
    assert!(split(&dataset("L2L".parse().unwrap(), 1, 0), 0.5, 0).is_err());
}

#[test]
fn csv_export_has_one_row_per_sample() {
    let ds = dataset("O2S".parse().unwrap(), 7, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset_csv(&ds, &path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 8);
}
