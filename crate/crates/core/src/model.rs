//! Datasets, moment functions, and the simulation designs.
//!
//! Two concrete models are provided:
//!
//! * **Median regression with endogenously missing data.** The latent
//!   outcome follows `W* = θ₁* + θ₂*·X + u` with `X ~ U(0,1)` and
//!   `u ~ U(−1,1)`; `W^H` equals `W*` when observed and `+∞` otherwise.
//!   The observable implication is the single inequality
//!   `E[1{θ₁ + θ₂X ≤ W^H} − 1/2 | X] ≥ 0`. Three missingness designs vary
//!   the shape of the binding set: constant missingness (flat, least
//!   favorable), a kink `p(x) = .02 + 2·.98·|x−.5|`, and a smooth minimum
//!   `p(x) = .02 + 4·.98·(x−.5)²`.
//! * **Interval regression.** `[W^L, W^H]` brackets a latent outcome with
//!   `E[W*|X] = (1, X')θ`, giving the two-sided moment
//!   `m(W, θ) = (W^H − (1,X')θ, (1,X')θ − W^L)`.
//!
//! Infinity is represented by [`INF_SENTINEL`], a finite value far above any
//! attainable outcome, so indicator evaluation stays branch-free and samples
//! round-trip through CSV (the sentinel is written as the token `INF`).

use crate::error::{Error, Result};
use crate::util::neg_part;
use rand::Rng;

/// Stand-in for `+∞` in outcome data. Strictly larger than any attainable
/// outcome of the models in this crate.
pub const INF_SENTINEL: f64 = 1e30;

/// Outcome columns of a dataset; the shape is model-specific.
#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeData {
    /// Upper outcome only; entries are finite or [`INF_SENTINEL`].
    WHigh(Vec<f64>),
    /// Interval outcomes `[lo, hi]`, both finite, `lo ≤ hi`.
    Interval { lo: Vec<f64>, hi: Vec<f64> },
}

/// An observed dataset `(X_i, W_i)`, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<f64>, // row-major n × d_x
    n: usize,
    d_x: usize,
    w: OutcomeData,
}

impl Sample {
    /// Validates invariants: `n ≥ 1`, finite covariates, outcomes finite or
    /// the sentinel (never NaN), and `lo ≤ hi` for interval data.
    pub fn new(x: Vec<f64>, d_x: usize, w: OutcomeData) -> Result<Self> {
        if d_x == 0 {
            return Err(Error::InvalidArgument("d_x must be at least 1".into()));
        }
        if x.is_empty() || !x.len().is_multiple_of(d_x) {
            return Err(Error::InvalidArgument(format!(
                "covariate length {} is not a positive multiple of d_x = {}",
                x.len(),
                d_x
            )));
        }
        let n = x.len() / d_x;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite covariate".into()));
        }
        let check_high = |vals: &[f64]| -> Result<()> {
            if vals.len() != n {
                return Err(Error::InvalidData("outcome length mismatch".into()));
            }
            if vals.iter().any(|v| v.is_nan()) {
                return Err(Error::InvalidData("NaN outcome".into()));
            }
            if vals.iter().any(|v| !v.is_finite() && *v != INF_SENTINEL) {
                return Err(Error::InvalidData(
                    "outcomes must be finite or the INF sentinel".into(),
                ));
            }
            Ok(())
        };
        match &w {
            OutcomeData::WHigh(hi) => check_high(hi)?,
            OutcomeData::Interval { lo, hi } => {
                check_high(hi)?;
                if lo.len() != n || lo.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidData("invalid lower outcome column".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(Error::InvalidData("W^L > W^H in data".into()));
                }
            }
        }
        Ok(Sample { x, n, d_x, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    /// Covariate vector of observation `i`.
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d_x..(i + 1) * self.d_x]
    }

    /// First covariate of every observation (the whole covariate when
    /// `d_x == 1`).
    pub fn x1(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x[i * self.d_x])
    }

    pub fn outcomes(&self) -> &OutcomeData {
        &self.w
    }

    /// Serializes to CSV with header `x_1,..,x_{d_X}` followed by the
    /// model-specific outcome columns; the sentinel is written as `INF`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for k in 1..=self.d_x {
            out.push_str(&format!("x_{k},"));
        }
        match &self.w {
            OutcomeData::WHigh(_) => out.push_str("w_high\n"),
            OutcomeData::Interval { .. } => out.push_str("w_low,w_high\n"),
        }
        let fmt = |v: f64| -> String {
            if v == INF_SENTINEL {
                "INF".to_string()
            } else {
                format!("{v}")
            }
        };
        for i in 0..self.n {
            for v in self.x_row(i) {
                out.push_str(&format!("{v},"));
            }
            match &self.w {
                OutcomeData::WHigh(hi) => out.push_str(&fmt(hi[i])),
                OutcomeData::Interval { lo, hi } => {
                    out.push_str(&format!("{},{}", fmt(lo[i]), fmt(hi[i])))
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV format written by [`Sample::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidData("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let d_x = cols.iter().take_while(|c| c.starts_with("x_")).count();
        if d_x == 0 {
            return Err(Error::InvalidData("missing covariate columns".into()));
        }
        let outcome_cols: Vec<&str> = cols[d_x..].to_vec();
        let interval = match outcome_cols.as_slice() {
            ["w_high"] => false,
            ["w_low", "w_high"] => true,
            other => {
                return Err(Error::InvalidData(format!(
                    "unrecognized outcome columns {other:?}"
                )))
            }
        };
        let parse = |tok: &str| -> Result<f64> {
            if tok == "INF" {
                Ok(INF_SENTINEL)
            } else {
                tok.parse::<f64>()
                    .map_err(|e| Error::InvalidData(format!("bad numeric field {tok:?}: {e}")))
            }
        };
        let mut x = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::InvalidData(format!(
                    "row has {} fields, expected {}",
                    fields.len(),
                    cols.len()
                )));
            }
            for tok in &fields[..d_x] {
                x.push(parse(tok)?);
            }
            if interval {
                lo.push(parse(fields[d_x])?);
                hi.push(parse(fields[d_x + 1])?);
            } else {
                hi.push(parse(fields[d_x])?);
            }
        }
        let w = if interval {
            OutcomeData::Interval { lo, hi }
        } else {
            OutcomeData::WHigh(hi)
        };
        Sample::new(x, d_x, w)
    }
}

/// A moment function `m(W, θ) ∈ R^{d_Y}` with parameter-space metadata.
///
/// Implementations must return finite values bounded by [`Self::bound`] in
/// absolute value for all valid inputs.
pub trait MomentModel: Sync {
    /// Parameter dimension `d_θ`.
    fn d_theta(&self) -> usize;

    /// Number of moment inequalities `d_Y`.
    fn d_y(&self) -> usize;

    /// Uniform bound `Ȳ` with `|m| ≤ Ȳ` almost surely.
    fn bound(&self) -> f64;

    /// Writes `m(W_i, θ)` into `out` (length `d_Y`).
    fn evaluate(&self, sample: &Sample, i: usize, theta: &[f64], out: &mut [f64]);

    /// Moment scores for the whole sample, row-major `n × d_Y`.
    fn scores(&self, sample: &Sample, theta: &[f64]) -> Vec<f64> {
        let d_y = self.d_y();
        let mut out = vec![0.0; sample.n() * d_y];
        for i in 0..sample.n() {
            self.evaluate(sample, i, theta, &mut out[i * d_y..(i + 1) * d_y]);
        }
        out
    }
}

/// Median regression with missing data: `m(W, θ) = 1{θ₁ + θ₂X ≤ W^H} − 1/2`,
/// a single inequality with bound `Ȳ = 1/2`. The sentinel outcome always
/// satisfies the indicator.
#[derive(Debug, Clone, Copy, Default)]
pub struct MedianRegMoment;

/// Returns the median-regression moment model.
pub fn median_reg_moment() -> MedianRegMoment {
    MedianRegMoment
}

impl MomentModel for MedianRegMoment {
    fn d_theta(&self) -> usize {
        2
    }

    fn d_y(&self) -> usize {
        1
    }

    fn bound(&self) -> f64 {
        0.5
    }

    fn evaluate(&self, sample: &Sample, i: usize, theta: &[f64], out: &mut [f64]) {
        let w_high = match sample.outcomes() {
            OutcomeData::WHigh(hi) => hi[i],
            OutcomeData::Interval { hi, .. } => hi[i],
        };
        let x = sample.x_row(i)[0];
        let fitted = theta[0] + theta[1] * x;
        out[0] = if fitted <= w_high { 0.5 } else { -0.5 };
    }
}

/// Interval regression: `m(W, θ) = (W^H − (1,X')θ, (1,X')θ − W^L)`, two
/// inequalities. The bound is taken from the configured outcome range.
#[derive(Debug, Clone, Copy)]
pub struct IntervalRegMoment {
    d_theta: usize,
    bound: f64,
}

/// Returns the interval-regression moment model for `d_x` covariates with
/// outcomes known to lie in `[-outcome_bound, outcome_bound]`.
pub fn interval_reg_moment() -> IntervalRegMoment {
    IntervalRegMoment {
        d_theta: 2,
        bound: 4.0,
    }
}

impl IntervalRegMoment {
    pub fn with_dims(d_x: usize, outcome_bound: f64) -> Self {
        IntervalRegMoment {
            d_theta: d_x + 1,
            bound: 2.0 * outcome_bound,
        }
    }
}

impl MomentModel for IntervalRegMoment {
    fn d_theta(&self) -> usize {
        self.d_theta
    }

    fn d_y(&self) -> usize {
        2
    }

    fn bound(&self) -> f64 {
        self.bound
    }

    fn evaluate(&self, sample: &Sample, i: usize, theta: &[f64], out: &mut [f64]) {
        let (lo, hi) = match sample.outcomes() {
            OutcomeData::Interval { lo, hi } => (lo[i], hi[i]),
            OutcomeData::WHigh(_) => {
                // Interval moments need both bounds; treat missing lower
                // bound as data error at evaluation time.
                panic!("interval regression model applied to upper-only outcomes")
            }
        };
        let xs = sample.x_row(i);
        let mut fitted = theta[0];
        for (k, xv) in xs.iter().enumerate() {
            fitted += theta[k + 1] * xv;
        }
        out[0] = hi - fitted;
        out[1] = fitted - lo;
    }
}

/// Missingness shape of the three simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingKind {
    /// Design 1: `p(x) = 0.1` (flat binding conditional mean).
    Constant,
    /// Design 2: `p(x) = .02 + 2·.98·|x − .5|` (kinked minimum, γ = 1).
    Kink,
    /// Design 3: `p(x) = .02 + 4·.98·(x − .5)²` (smooth minimum, γ = 2).
    Smooth,
    /// Diagnostic override `p ≡ 0` (no missingness, point identification).
    None,
}

/// A data-generating process for the missing-data median regression model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingDataDesign {
    pub design_id: u8,
    pub kind: MissingKind,
    /// True coefficients of the latent regression.
    pub theta_star: [f64; 2],
}

impl MissingDataDesign {
    /// One of the three standard designs (`id ∈ {1, 2, 3}`) with
    /// `θ* = (0, 0)`.
    pub fn design(id: u8) -> Result<Self> {
        let kind = match id {
            1 => MissingKind::Constant,
            2 => MissingKind::Kink,
            3 => MissingKind::Smooth,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "design id must be 1, 2 or 3, got {id}"
                )))
            }
        };
        Ok(MissingDataDesign {
            design_id: id,
            kind,
            theta_star: [0.0, 0.0],
        })
    }

    /// Diagnostic design with `p ≡ 0`.
    pub fn no_missing() -> Self {
        MissingDataDesign {
            design_id: 0,
            kind: MissingKind::None,
            theta_star: [0.0, 0.0],
        }
    }

    /// Missingness probability `p(x)`.
    pub fn missing_prob(&self, x: f64) -> f64 {
        match self.kind {
            MissingKind::Constant => 0.1,
            MissingKind::Kink => 0.02 + 2.0 * 0.98 * (x - 0.5).abs(),
            MissingKind::Smooth => 0.02 + 4.0 * 0.98 * (x - 0.5) * (x - 0.5),
            MissingKind::None => 0.0,
        }
    }

    /// Minimum of `p` over `[0, 1]` (attained value, closed form).
    fn min_missing_prob(&self) -> f64 {
        match self.kind {
            MissingKind::Constant => 0.1,
            MissingKind::Kink | MissingKind::Smooth => 0.02,
            MissingKind::None => 0.0,
        }
    }

    /// Population conditional mean `E[m(W, θ) | X = x]` of the
    /// median-regression moment at `θ = (theta1, 0)` under this design with
    /// `θ* = (0, 0)`:
    ///
    /// ```text
    /// E[m | X = x] = p(x) + (1 − p(x)) · P(u ≥ θ₁) − 1/2,
    /// ```
    ///
    /// with `u ~ U(−1, 1)`, so `P(u ≥ θ₁) = (1 − θ₁)/2` for `θ₁ ∈ [−1, 1]`.
    pub fn conditional_mean(&self, theta1: f64, x: f64) -> f64 {
        let p = self.missing_prob(x);
        let surv = ((1.0 - theta1) / 2.0).clamp(0.0, 1.0);
        p + (1.0 - p) * surv - 0.5
    }
}

/// Largest `θ₁` with `(θ₁, 0)` in the identified set of the design:
/// `θ̄₁ = min_x p(x)/(1 − p(x))`.
///
/// Requires `θ* = (0, 0)`; errors if missingness is degenerate
/// (`p ≈ 1` at the minimum).
pub fn boundary_theta1(design: &MissingDataDesign) -> Result<f64> {
    if design.theta_star != [0.0, 0.0] {
        return Err(Error::InvalidArgument(
            "boundary_theta1 assumes theta* = (0, 0)".into(),
        ));
    }
    let p_min = design.min_missing_prob();
    if p_min >= 1.0 {
        return Err(Error::DegenerateDesign(
            "missingness probability is one everywhere".into(),
        ));
    }
    Ok(p_min / (1.0 - p_min))
}

/// Simulates a dataset of size `n` from the missing-data design:
/// `X ~ U(0,1)`, `u ~ U(−1,1)` independent of `X`,
/// `W* = θ₁* + θ₂*X + u`, and `W^H = W*` with probability `1 − p(X)`
/// (independent missingness indicator), the sentinel otherwise.
///
/// Deterministic given the RNG state.
pub fn simulate_missing_data<R: Rng>(
    design: &MissingDataDesign,
    n: usize,
    rng: &mut R,
) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let mut x = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = rng.random_range(0.0..1.0);
        let ui: f64 = rng.random_range(-1.0..1.0);
        let w_star = design.theta_star[0] + design.theta_star[1] * xi + ui;
        let missing = rng.random_range(0.0..1.0) < design.missing_prob(xi);
        x.push(xi);
        hi.push(if missing { INF_SENTINEL } else { w_star });
    }
    Sample::new(x, 1, OutcomeData::WHigh(hi))
}

/// Violation magnitude of the population inequality at `(θ₁, 0)`:
/// `sup_x |E[m|X=x]|_−` over a grid, used as a diagnostic.
pub fn max_population_violation(design: &MissingDataDesign, theta1: f64, grid: usize) -> f64 {
    (0..=grid)
        .map(|k| k as f64 / grid as f64)
        .map(|x| neg_part(design.conditional_mean(theta1, x)))
        .fold(0.0, f64::max)
}
