//! Stability checks for simulated least-favorable critical values.

use cmi_core::critval::{simulate_lf_critval, LfDesign};
use cmi_core::model::{median_reg_moment, simulate_missing_data};
use cmi_core::seed::{derive_rng, Stream};
use cmi_core::stats::{PreparedStatistic, StatisticSpec, Weighting};
use cmi_core::util::upper_quantile;
use rand::Rng;

fn spec() -> StatisticSpec {
    let mut spec = StatisticSpec::iv_cvm(1.0, Weighting::Bounded);
    spec.mu_resolution = (40, 40);
    spec
}

/// Simulated scaled-statistic draws under the least-favorable null.
fn draws(n: usize, n_sims: usize, seed: u64) -> Vec<f64> {
    let lf = LfDesign::standard();
    let prepared = PreparedStatistic::new(spec()).unwrap();
    let model = median_reg_moment();
    (0..n_sims)
        .map(|sim| {
            let mut rng = derive_rng(seed, Stream::Critval, &[sim as u64]);
            let sample = simulate_missing_data(&lf.design, n, &mut rng).unwrap();
            prepared.evaluate(&sample, &model, &lf.theta).unwrap().scaled
        })
        .collect()
}

/// Bootstrap standard error of the empirical (1 − alpha) quantile.
fn quantile_bootstrap_se(draws: &[f64], alpha: f64, boots: usize, seed: u64) -> f64 {
    let mut rng = derive_rng(seed, Stream::Simulate, &[777]);
    let mut quantiles = Vec::with_capacity(boots);
    for _ in 0..boots {
        let resample: Vec<f64> = (0..draws.len())
            .map(|_| draws[rng.random_range(0..draws.len())])
            .collect();
        quantiles.push(upper_quantile(&resample, alpha));
    }
    let mean = quantiles.iter().sum::<f64>() / boots as f64;
    (quantiles.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / (boots - 1) as f64).sqrt()
}

#[test]
fn critval_stabilizes_in_simulation_count() {
    let n = 200;
    let all = draws(n, 40_000, 5);
    let c_small = upper_quantile(&all[..10_000], 0.05);
    let c_large = upper_quantile(&all, 0.05);
    let se = quantile_bootstrap_se(&all[..10_000], 0.05, 200, 5);
    assert!(
        (c_small - c_large).abs() <= 2.0 * se,
        "critval drift {c_small} -> {c_large} exceeds twice the quantile s.e. {se}"
    );
}

#[test]
fn critval_agrees_across_seeds_within_bootstrap_band() {
    // The reference configuration: bounded instrument CvM, p = 1, n = 500,
    // alpha = 0.05, 10⁴ simulations.
    let n = 500;
    let a = draws(n, 10_000, 11);
    let b = draws(n, 10_000, 12);
    let ca = upper_quantile(&a, 0.05);
    let cb = upper_quantile(&b, 0.05);
    let se_a = quantile_bootstrap_se(&a, 0.05, 200, 11);
    let se_b = quantile_bootstrap_se(&b, 0.05, 200, 12);
    assert!(
        (ca - cb).abs() <= 4.0 * (se_a * se_a + se_b * se_b).sqrt(),
        "seeds disagree: {ca} vs {cb} with s.e.s {se_a}, {se_b}"
    );
}

#[test]
fn critval_simulation_matches_external_quantile() {
    // simulate_lf_critval equals the quantile of independently recomputed
    // draws with the same streams.
    let lf = LfDesign::standard();
    let cv = simulate_lf_critval(&spec(), 120, 0.1, 2000, 21, &lf).unwrap();
    let all = draws(120, 2000, 21);
    assert_eq!(cv.value.to_bits(), upper_quantile(&all, 0.1).to_bits());
    assert!(cv.value > 0.0);
}
