mod common;

use common::any_column;
use proptest::prelude::*;
use radnet::domain::*;

proptest! {
    #[test]
    fn generated_columns_are_valid(col in any_column()) {
        prop_assert!(validate_column(&col).is_valid());
    }

    #[test]
    fn features_round_trip(col in any_column(), lw in any::<bool>()) {
        let sky = classify_sky(&col, 0.0).unwrap();
        let mode = if lw { Mode::Lw } else { Mode::Sw };
        let key = ModelKey::new(mode, sky, col.surface);
        let fv = assemble_features(&col, key).unwrap();
        prop_assert_eq!(fv.values.len(), key.n_features());
        let back = disassemble_features(&fv).unwrap();
        prop_assert_eq!(&back.t_layer, &col.t_layer);
        prop_assert_eq!(&back.qv_layer, &col.qv_layer);
        prop_assert_eq!(&back.o3_layer, &col.o3_layer);
        prop_assert_eq!(&back.p_layer, &col.grid.p_layers());
        if sky == Sky::Cloudy {
            prop_assert_eq!(&back.cf_layer, &col.cf_layer);
        }
        let scalars = if lw { [col.t_skin, col.emissivity] } else { [col.mu0_s0, col.albedo] };
        prop_assert_eq!(back.scalars, scalars);
    }

    #[test]
    fn sky_follows_column_maximum(col in any_column(), thr in 0.0f64..0.99) {
        let expect = if col.max_cloud_fraction() > thr { Sky::Cloudy } else { Sky::Clear };
        prop_assert_eq!(classify_sky(&col, thr).unwrap(), expect);
    }

    #[test]
    fn out_of_range_temperature_reported(col in any_column(), layer in 0..N_LAYERS, hot in any::<bool>()) {
        let mut bad = col;
        bad.t_layer[layer] = if hot { T_MAX + 1.0 } else { T_MIN - 1.0 };
        let report = validate_column(&bad);
        prop_assert!(report.violations.iter().any(|v| v.field == "t_layer" && v.layer == Some(layer)));
    }

    #[test]
    fn targets_round_trip(vals in prop::collection::vec(-1e3f64..1e3, N_OUTPUTS), lw in any::<bool>()) {
        let mode = if lw { Mode::Lw } else { Mode::Sw };
        let r = RadiationResult::from_targets(mode, &vals).unwrap();
        prop_assert_eq!(r.to_targets(), vals);
    }
}

#[test]
fn every_key_code_parses_back() {
    for key in ModelKey::all() {
        assert_eq!(key.code().parse::<ModelKey>().unwrap(), key);
        assert_eq!(ModelKey::from_bytes(key.to_bytes()), Some(key));
    }
    assert!("X2L".parse::<ModelKey>().is_err());
    assert!("L3L".parse::<ModelKey>().is_err());
}
