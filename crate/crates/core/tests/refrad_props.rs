mod common;

use common::any_column;
use proptest::prelude::*;
use radnet::domain::*;
use radnet::refrad::*;

fn cfg() -> RefRadConfig {
    RefRadConfig::default()
}

proptest! {
    #[test]
    fn shortwave_energy_closes(col in any_column()) {
        let b = sw_budget(&col, &cfg()).unwrap();
        let total = b.fluxes.up[0]
            + b.absorbed_surface
            + b.absorbed_down.iter().sum::<f64>()
            + b.absorbed_up.iter().sum::<f64>();
        prop_assert!((total - col.mu0_s0).abs() <= 1e-9 * col.mu0_s0.max(1.0));
        prop_assert!(b.absorbed_down.iter().chain(&b.absorbed_up).all(|&a| a >= 0.0));
    }

    #[test]
    fn longwave_within_blackbody_limits(col in any_column()) {
        let fp = lw_fluxes(&col, &cfg()).unwrap();
        let hottest = col.t_layer.iter().copied().fold(col.t_skin, f64::max);
        let bound = STEFAN_BOLTZMANN * hottest.powi(4) * (1.0 + 1e-12);
        prop_assert_eq!(fp.down[0], 0.0);
        for &f in fp.up.iter().chain(&fp.down) {
            prop_assert!((0.0..=bound).contains(&f), "flux {} outside [0, {}]", f, bound);
        }
    }

    #[test]
    fn heating_is_linear_in_fluxes(col in any_column(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let lw = lw_fluxes(&col, &cfg()).unwrap();
        let sw = sw_fluxes(&col, &cfg()).unwrap();
        let mix = FluxProfile {
            up: lw.up.iter().zip(&sw.up).map(|(x, y)| a * x + b * y).collect(),
            down: lw.down.iter().zip(&sw.down).map(|(x, y)| a * x + b * y).collect(),
        };
        let h1 = heating_rates(&lw, &col.grid, &cfg()).unwrap();
        let h2 = heating_rates(&sw, &col.grid, &cfg()).unwrap();
        let hm = heating_rates(&mix, &col.grid, &cfg()).unwrap();
        let scale = h1.iter().zip(&h2).fold(1e-30f64, |m, (x, y)| m.max((a * x).abs() + (b * y).abs()));
        for ((x, y), z) in h1.iter().zip(&h2).zip(&hm) {
            prop_assert!((a * x + b * y - z).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn night_has_no_shortwave(col in any_column()) {
        let mut night = col;
        night.mu0_s0 = 0.0;
        let r = reference_radiation(&night, Mode::Sw, &cfg()).unwrap();
        prop_assert_eq!(r, RadiationResult::zeros(Mode::Sw));
    }

    #[test]
    fn more_cloud_never_brightens_the_surface(col in any_column(), layer in 0..N_LAYERS) {
        let mut cloudier = col.clone();
        cloudier.cf_layer[layer] = (cloudier.cf_layer[layer] + 0.5).min(1.0);
        let before = sw_fluxes(&col, &cfg()).unwrap();
        let after = sw_fluxes(&cloudier, &cfg()).unwrap();
        prop_assert!(after.down[N_LAYERS] <= before.down[N_LAYERS] + 1e-9);
    }

    #[test]
    fn reference_is_deterministic(col in any_column()) {
        for mode in [Mode::Lw, Mode::Sw] {
            prop_assert_eq!(reference_radiation(&col, mode, &cfg()).unwrap(), reference_radiation(&col, mode, &cfg()).unwrap());
        }
    }
}

#[test]
fn invalid_columns_are_rejected() {
    let mut col = AtmosphericColumn::standard();
    col.cf_layer[3] = 1.5;
    assert!(matches!(reference_radiation(&col, Mode::Lw, &cfg()), Err(radnet::Error::InvalidColumn(_))));
}
