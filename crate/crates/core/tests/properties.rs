//! Property tests for the statistic layer.

mod common;

use cmi_core::instruments::exact_instrument_supremum_index;
use cmi_core::stats::{BandwidthRule, SigmaNRule, StatisticSpec, Weighting};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..24).prop_flat_map(|n| {
        (
            proptest::collection::vec(0.001..0.999f64, n),
            proptest::collection::vec(-1.0..1.0f64, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Every statistic is nonnegative, zero exactly when no weighted moment
    // is negative anywhere.
    #[test]
    fn statistics_nonnegative((xs, scores) in instance()) {
        let comps = vec![scores];
        for spec in [
            StatisticSpec::iv_cvm(1.0, Weighting::Bounded),
            StatisticSpec::iv_cvm(2.0, Weighting::TruncVar(SigmaNRule::Half)),
            StatisticSpec::iv_ks(Weighting::Bounded),
            StatisticSpec::iv_ks(Weighting::Multiscale),
            StatisticSpec::kern_cvm(1.0, BandwidthRule::Third),
            StatisticSpec::kern_ks(BandwidthRule::Third),
        ] {
            let mut spec = spec;
            spec.mu_resolution = (20, 20);
            spec.x_grid = 64;
            let v = common::library_statistic(&xs, &comps, &spec);
            prop_assert!(v >= 0.0);
        }
    }

    // The exact interval minimizer agrees with a direct scan over all runs
    // of sorted observations evaluated by explicit interval membership.
    #[test]
    fn interval_minimizer_matches_run_scan((xs, scores) in instance()) {
        let (_, got) = exact_instrument_supremum_index(&xs, &scores).unwrap();
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let mut best = 0.0f64;
        for i in 0..order.len() {
            for j in i..order.len() {
                // Interval capturing sorted positions i..=j, honoring ties:
                // expand to all observations with the same covariate value.
                let lo_v = xs[order[i]];
                let hi_v = xs[order[j]];
                let sum: f64 = xs
                    .iter()
                    .zip(&scores)
                    .filter(|(x, _)| lo_v <= **x && **x <= hi_v)
                    .map(|(_, s)| *s)
                    .sum();
                best = best.min(sum / xs.len() as f64);
            }
        }
        prop_assert!((got - best).abs() < 1e-12, "got {got}, scan {best}");
    }

    // Bounded-weight statistics are positively homogeneous of degree one in
    // the moment scores.
    #[test]
    fn bounded_statistics_homogeneous((xs, scores) in instance(), c in 0.1..5.0f64) {
        for spec in [
            StatisticSpec::iv_cvm(2.0, Weighting::Bounded),
            StatisticSpec::iv_ks(Weighting::Bounded),
            StatisticSpec::kern_ks(BandwidthRule::Third),
        ] {
            let mut spec = spec;
            spec.mu_resolution = (15, 15);
            spec.x_grid = 64;
            let base = common::library_statistic(&xs, std::slice::from_ref(&scores), &spec);
            let scaled_scores: Vec<f64> = scores.iter().map(|s| c * s).collect();
            let scaled = common::library_statistic(&xs, &[scaled_scores], &spec);
            prop_assert!(
                (scaled - c * base).abs() <= 1e-10 * (1.0 + c * base),
                "family {:?}: {scaled} vs {}",
                spec.family,
                c * base
            );
        }
    }
}
