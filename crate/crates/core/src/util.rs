//! Small numeric helpers shared across the statistic and rate modules.

/// Negative part `|t|_− = |min(t, 0)|`.
///
/// Single source of truth for the magnitude-of-violation convention used by
/// every statistic and limit functional in this crate.
#[inline]
pub fn neg_part(t: f64) -> f64 {
    if t < 0.0 {
        -t
    } else {
        0.0
    }
}

/// Pairwise (cascade) summation.
///
/// Deterministic for a given input order and substantially more accurate
/// than a running sum on the long quadrature accumulations used here.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 32;
    if values.len() <= BASE {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Empirical quantile at level `1 − alpha`, using the higher (conservative)
/// order statistic of rank `⌈(1−alpha)·B⌉`.
///
/// `draws` need not be sorted. Requires a nonempty slice and `alpha ∈ (0, 1)`.
pub fn upper_quantile(draws: &[f64], alpha: f64) -> f64 {
    assert!(!draws.is_empty(), "quantile of empty draw set");
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let mut sorted = draws.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let b = sorted.len();
    let rank = ((1.0 - alpha) * b as f64).ceil() as usize;
    let rank = rank.clamp(1, b);
    sorted[rank - 1]
}

/// Mean and the binomial standard error `√(p̂(1−p̂)/n)` of a rejection count.
pub fn binomial_rate(rejections: usize, trials: usize) -> (f64, f64) {
    assert!(trials > 0);
    let p = rejections as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neg_part_convention() {
        assert_eq!(neg_part(-2.5), 2.5);
        assert_eq!(neg_part(0.0), 0.0);
        assert_eq!(neg_part(3.0), 0.0);
    }

    #[test]
    fn pairwise_matches_naive_on_small_inputs() {
        let v: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-12);
    }

    #[test]
    fn quantile_rank_convention() {
        // alpha = 0.5 over {0,1,2,3,4}: rank ceil(0.5*5) = 3 -> value 2.
        let draws = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(upper_quantile(&draws, 0.5), 2.0);
        // alpha -> 1 picks the lowest order statistic.
        assert_eq!(upper_quantile(&draws, 0.99), 0.0);
        // alpha -> 0 picks the top order statistic.
        assert_eq!(upper_quantile(&draws, 0.01), 4.0);
    }

    #[test]
    fn quantile_monotone_in_alpha() {
        let draws: Vec<f64> = (0..101).map(|i| i as f64 / 7.0).collect();
        let mut last = f64::INFINITY;
        for alpha in [0.01, 0.05, 0.1, 0.5, 0.9] {
            let q = upper_quantile(&draws, alpha);
            assert!(q <= last, "quantile must shrink as alpha grows");
            last = q;
        }
    }
}
