//! Brute-force reference implementations shared by the integration tests.
//!
//! Everything here recomputes the statistics from their definitions with
//! direct per-observation sums — no sorting, no prefix sums, no shared
//! evaluation machinery — so agreement with the library is a genuine
//! two-route check.

// Each test binary uses a different subset of the helpers.
#![allow(dead_code)]

use cmi_core::instruments::{enumerate_grid, GridNode, MuMeasure};
use cmi_core::model::{MomentModel, OutcomeData, Sample};
use cmi_core::stats::{Family, StatisticSpec};

/// Test moment model carrying preset per-component scores scaled by `θ₀`.
pub struct FixedScores {
    /// Row-major `n × d_y`.
    pub vals: Vec<f64>,
    pub d_y: usize,
}

impl FixedScores {
    pub fn from_components(comps: &[Vec<f64>]) -> Self {
        let d_y = comps.len();
        let n = comps[0].len();
        let mut vals = vec![0.0; n * d_y];
        for (j, comp) in comps.iter().enumerate() {
            for (i, v) in comp.iter().enumerate() {
                vals[i * d_y + j] = *v;
            }
        }
        FixedScores { vals, d_y }
    }
}

impl MomentModel for FixedScores {
    fn d_theta(&self) -> usize {
        1
    }
    fn d_y(&self) -> usize {
        self.d_y
    }
    fn bound(&self) -> f64 {
        self.vals.iter().fold(1.0f64, |b, v| b.max(v.abs())) * 10.0
    }
    fn evaluate(&self, _s: &Sample, i: usize, theta: &[f64], out: &mut [f64]) {
        let row = &self.vals[i * self.d_y..(i + 1) * self.d_y];
        for (o, v) in out.iter_mut().zip(row) {
            *o = theta[0] * v;
        }
    }
}

pub fn toy_sample(xs: &[f64]) -> Sample {
    Sample::new(xs.to_vec(), 1, OutcomeData::WHigh(vec![0.0; xs.len()])).unwrap()
}

fn neg(v: f64) -> f64 {
    if v < 0.0 {
        -v
    } else {
        0.0
    }
}

/// Box membership by direct endpoint comparison on `(s, t)` coordinates.
fn in_box(node: &GridNode, x: f64) -> bool {
    let (s, t) = node.instrument.as_box();
    s < x && x < s + t
}

fn box_moment_sd(xs: &[f64], scores: &[f64], node: &GridNode) -> (f64, f64) {
    let n = xs.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (x, v) in xs.iter().zip(scores) {
        if in_box(node, *x) {
            sum += v;
            sum_sq += v * v;
        }
    }
    let mean = sum / n;
    (mean, (sum_sq / n - mean * mean).max(0.0).sqrt())
}

/// Direct double-loop IV-CvM over the μ grid.
pub fn oracle_iv_cvm(
    xs: &[f64],
    comps: &[Vec<f64>],
    mu: &MuMeasure,
    p: f64,
    sigma_n: Option<f64>,
) -> f64 {
    let grid = enumerate_grid(mu).unwrap();
    let mut acc = 0.0;
    for node in &grid {
        let mut cell = 0.0;
        for scores in comps {
            let (mean, sd) = box_moment_sd(xs, scores, node);
            let omega = match sigma_n {
                None => 1.0,
                Some(sn) => 1.0 / sd.max(sn),
            };
            cell += neg(mean * omega).powf(p);
        }
        acc += node.weight * cell;
    }
    acc.powf(1.0 / p)
}

/// Direct IV-KS over every contiguous run of order statistics plus the μ
/// grid, each candidate evaluated by scanning all observations against an
/// explicit interval.
pub fn oracle_iv_ks(xs: &[f64], comps: &[Vec<f64>], mu: &MuMeasure, sigma_n: Option<f64>) -> f64 {
    let n = xs.len() as f64;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let mut endpoints = vec![if sorted[0] > 0.0 { 0.5 * sorted[0] } else { sorted[0] - 1.0 }];
    for w in sorted.windows(2) {
        endpoints.push(0.5 * (w[0] + w[1]));
    }
    let last = *sorted.last().unwrap();
    endpoints.push(if last < 1.0 { 0.5 * (last + 1.0) } else { last + 1.0 });

    let objective = |s: f64, e: f64, scores: &[f64]| -> f64 {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for (x, v) in xs.iter().zip(scores) {
            if s < *x && *x < e {
                sum += v;
                sum_sq += v * v;
            }
        }
        let mean = sum / n;
        let omega = match sigma_n {
            None => 1.0,
            Some(sn) => {
                let sd = (sum_sq / n - mean * mean).max(0.0).sqrt();
                1.0 / sd.max(sn)
            }
        };
        neg(mean * omega)
    };

    let mut best = 0.0f64;
    for scores in comps {
        for i in 0..endpoints.len() {
            for j in (i + 1)..endpoints.len() {
                best = best.max(objective(endpoints[i], endpoints[j], scores));
            }
        }
        for node in enumerate_grid(mu).unwrap() {
            let (s, t) = node.instrument.as_box();
            best = best.max(objective(s, s + t, scores));
        }
    }
    best
}

/// Direct kernel CvM / KS with per-node window scans (uniform kernel).
pub fn oracle_kern(
    xs: &[f64],
    comps: &[Vec<f64>],
    h: f64,
    x_grid: usize,
    p: f64,
    cvm: bool,
) -> f64 {
    let lo = 0.5 * h;
    let cell = (1.0 - h) / x_grid as f64;
    let mut acc = 0.0;
    let mut best = 0.0f64;
    for t in 0..x_grid {
        let x = lo + (t as f64 + 0.5) * cell;
        let mut cell_val = 0.0;
        for scores in comps {
            let mut num = 0.0;
            let mut den = 0.0;
            for (xi, v) in xs.iter().zip(scores) {
                if x - 0.5 * h < *xi && *xi < x + 0.5 * h {
                    num += v;
                    den += 1.0;
                }
            }
            if den == 0.0 {
                continue;
            }
            let v = neg(num / den);
            if cvm {
                cell_val += v.powf(p);
            } else {
                best = best.max(v);
            }
        }
        if cvm {
            acc += cell * cell_val;
        }
    }
    if cvm {
        acc.powf(1.0 / p)
    } else {
        best
    }
}

/// Computes the library statistic for a prepared spec on raw scores.
pub fn library_statistic(xs: &[f64], comps: &[Vec<f64>], spec: &StatisticSpec) -> f64 {
    let sample = toy_sample(xs);
    let model = FixedScores::from_components(comps);
    cmi_core::stats::PreparedStatistic::new(spec.clone())
        .unwrap()
        .evaluate(&sample, &model, &[1.0])
        .unwrap()
        .raw
}

/// Matching oracle value for the same spec.
pub fn oracle_statistic(xs: &[f64], comps: &[Vec<f64>], spec: &StatisticSpec) -> f64 {
    let n = xs.len();
    let sigma_n = spec.weighting.sigma_n(n);
    match spec.family {
        Family::IvCvm => oracle_iv_cvm(xs, comps, &spec.mu_measure(), spec.p, sigma_n),
        Family::IvKs => oracle_iv_ks(xs, comps, &spec.mu_measure(), sigma_n),
        Family::KernCvm | Family::KernKs => {
            let h = spec.bandwidth.unwrap().bandwidth(n);
            oracle_kern(
                xs,
                comps,
                h,
                spec.x_grid,
                spec.p,
                spec.family == Family::KernCvm,
            )
        }
    }
}

/// Spec battery exercised by the oracle-equivalence criterion.
pub fn oracle_battery() -> Vec<StatisticSpec> {
    use cmi_core::stats::{BandwidthRule, SigmaNRule, Weighting};
    vec![
        StatisticSpec::iv_cvm(1.0, Weighting::Bounded),
        StatisticSpec::iv_cvm(2.0, Weighting::TruncVar(SigmaNRule::Third)),
        StatisticSpec::iv_ks(Weighting::Bounded),
        StatisticSpec::iv_ks(Weighting::TruncVar(SigmaNRule::Third)),
        StatisticSpec::kern_cvm(1.0, BandwidthRule::Fifth),
        StatisticSpec::kern_ks(BandwidthRule::Fifth),
    ]
}
