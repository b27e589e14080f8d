mod common;

use panelq_core::interval::{
    build_interval, classify_and_quantify, logo_split, run_detection, ForestQuantile,
};
use panelq_core::{
    AnomalyClass, ForestConfig, MethodConfig, PredictionInterval, QuantileForest, TauPair,
};
use proptest::prelude::*;

#[test]
fn forty_seven_region_fold_sizes() {
    let d = common::synthetic_panel(&common::SyntheticPanel { regions: 47, ..Default::default() }, 1);
    for region in d.regions() {
        let s = logo_split(&d, region).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (736, 16));
    }
}

#[test]
fn planted_high_and_low_regions() {
    let base = common::synthetic_panel(&common::SyntheticPanel::default(), 17);
    let high = common::scale_regions(&base, &["R03"], 3.0);
    let recs = run_detection(&high, &MethodConfig::Qr, TauPair::default()).unwrap();
    for r in recs.iter().filter(|r| r.region == "R03") {
        assert_eq!(r.class, AnomalyClass::High);
        assert!(r.uar > 0.0);
    }
    let low = common::scale_regions(&base, &["R03"], 0.2);
    let recs = run_detection(&low, &MethodConfig::Qr, TauPair::default()).unwrap();
    for r in recs.iter().filter(|r| r.region == "R03") {
        assert_eq!(r.class, AnomalyClass::Low);
        assert!(r.lar < 0.0 && r.lar >= -1.0);
    }
}

#[test]
fn records_cover_every_cell_once_and_respect_the_rule() {
    let d = common::synthetic_panel(&common::SyntheticPanel { regions: 8, years: 6, noise_sd: 8.0 }, 5);
    for cfg in [
        MethodConfig::Qr,
        MethodConfig::Qrf(ForestConfig { n_trees: 50, seed: 4, ..ForestConfig::default() }),
    ] {
        let recs = run_detection(&d, &cfg, TauPair::default()).unwrap();
        let cells: Vec<(String, i32)> = recs.iter().map(|r| (r.region.clone(), r.year)).collect();
        let expect: Vec<(String, i32)> = d.observations().iter().map(|o| (o.region.clone(), o.year)).collect();
        assert_eq!(cells, expect);
        for r in &recs {
            let inside = r.interval.lower <= r.observed && r.observed <= r.interval.upper;
            assert_eq!(inside, r.class == AnomalyClass::Normal);
            if r.class == AnomalyClass::High {
                assert!(r.uar > 0.0);
            }
            if r.class == AnomalyClass::Low {
                assert!(r.lar < 0.0);
            }
            if matches!(cfg, MethodConfig::Qrf(_)) {
                assert!(!r.interval.crossing_repaired);
            }
        }
    }
}

#[test]
fn detection_is_reproducible() {
    let d = common::synthetic_panel(&common::SyntheticPanel { regions: 6, years: 8, noise_sd: 8.0 }, 8);
    let cfg = MethodConfig::Qrf(ForestConfig { n_trees: 40, seed: 12, ..ForestConfig::default() });
    let a = run_detection(&d, &cfg, TauPair::default()).unwrap();
    let b = run_detection(&d, &cfg, TauPair::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn non_positive_lower_bound_is_a_pathology() {
    // Sales fall steeply with price; the held-out region's high price extrapolates the
    // lower quantile below zero.
    let mut rows = Vec::new();
    for (r, region) in ["A", "B", "C", "D", "E"].iter().enumerate() {
        for t in 0..4 {
            let price = if *region == "E" { 6.0 + t as f64 * 0.1 } else { 1.0 + 0.3 * r as f64 + 0.1 * t as f64 };
            let gdp = 20.0 + r as f64 + 0.5 * t as f64;
            rows.push(panelq_core::PanelObservation {
                region: region.to_string(),
                year: 2000 + t,
                sales_pc: (120.0 - 30.0 * price + ((r * 7 + t as usize * 3) % 5) as f64).max(1.0),
                price,
                gdp_pc: gdp,
            });
        }
    }
    let d = panelq_core::PanelDataset::from_observations(rows, &Default::default()).unwrap();
    let err = run_detection(&d, &MethodConfig::Qr, TauPair::default()).unwrap_err();
    assert!(err.is_pathology(), "{err}");
}

#[test]
fn build_interval_from_models() {
    let (x, y): (Vec<[f64; 2]>, Vec<f64>) = (0..40)
        .map(|i| ([(i % 5) as f64, (i % 7) as f64], 100.0 + ((i * 37) % 23) as f64))
        .unzip();
    let f = QuantileForest::fit(&x, &y, &ForestConfig { n_trees: 20, seed: 2, ..ForestConfig::default() }).unwrap();
    let taus = TauPair::default();
    let lo = ForestQuantile { forest: &f, tau: taus.low() };
    let hi = ForestQuantile { forest: &f, tau: taus.high() };
    let pi = build_interval(&lo, &hi, &[2.0, 3.0], "X", 2010, taus).unwrap();
    assert!(pi.lower <= pi.upper && !pi.crossing_repaired);

    let qlo = panelq_core::qr::fit_qr(&x, &y, taus.low()).unwrap();
    let qhi = panelq_core::qr::fit_qr(&x, &y, taus.high()).unwrap();
    // Passing the models in the wrong order exercises the swap.
    let swapped = build_interval(&qhi, &qlo, &[2.0, 3.0], "X", 2010, taus).unwrap();
    let straight = build_interval(&qlo, &qhi, &[2.0, 3.0], "X", 2010, taus).unwrap();
    assert!(swapped.crossing_repaired);
    assert_eq!((swapped.lower, swapped.upper), (straight.lower, straight.upper));
}

proptest! {
    #[test]
    fn ratios_are_scale_free(
        lower in 1.0f64..100.0,
        width in 0.0f64..100.0,
        observed in 0.0f64..300.0,
        c in 0.01f64..100.0,
    ) {
        let taus = TauPair::default();
        let a = classify_and_quantify(observed, &PredictionInterval::from_predictions("A", 1, lower, lower + width, taus).unwrap()).unwrap();
        let b = classify_and_quantify(observed * c, &PredictionInterval::from_predictions("A", 1, lower * c, (lower + width) * c, taus).unwrap()).unwrap();
        prop_assert!((a.uar - b.uar).abs() <= 1e-12 * (1.0 + a.uar.abs()));
        prop_assert!((a.lar - b.lar).abs() <= 1e-12 * (1.0 + a.lar.abs()));
        prop_assert!(a.lar >= -1.0);
    }

    #[test]
    fn forest_intervals_never_cross(seed in any::<u64>(), qx in 0.0f64..6.0, qy in 0.0f64..8.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (x, y): (Vec<[f64; 2]>, Vec<f64>) = (0..30)
            .map(|_| ([rng.gen_range(0..6) as f64, rng.gen_range(0..8) as f64], rng.gen_range(1..50) as f64))
            .unzip();
        let f = QuantileForest::fit(&x, &y, &ForestConfig { n_trees: 10, min_node_size: 2, seed, ..ForestConfig::default() }).unwrap();
        for (lo, hi) in [(0.1, 0.9), (0.25, 0.75), (0.05, 0.95)] {
            let taus = TauPair::new(lo, hi).unwrap();
            let pi = build_interval(
                &ForestQuantile { forest: &f, tau: taus.low() },
                &ForestQuantile { forest: &f, tau: taus.high() },
                &[qx, qy], "A", 1, taus,
            ).unwrap();
            prop_assert!(!pi.crossing_repaired);
        }
    }
}
