//! The four statistic families and their weighting machinery.
//!
//! For a moment function `m`, parameter `θ`, and instruments `g`, write
//! `E_n[m_j g] = (1/n) Σ_i m_j(W_i, θ) g(X_i)` for the weighted sample
//! moment and `|t|_− = |min(t, 0)|` for the negative part. The statistics:
//!
//! ```text
//! IV-CvM    T = [ ∫ Σ_j |E_n[m_j g] ω_j(θ,g)|_−^p dμ(g) ]^{1/p}
//! IV-KS     T = max_j sup_{g∈G} |E_n[m_j g] ω_j(θ,g)|_−
//! kern-CvM  T = [ ∫ Σ_j |m̂_j(θ,x) ω_j(θ,x)|_−^p dx ]^{1/p}
//! kern-KS   T = max_j sup_x |m̂_j(θ,x) ω_j(θ,x)|_−
//! ```
//!
//! where `m̂_j(θ,x) = Σ_i m_j k((X_i−x)/h) / Σ_i k((X_i−x)/h)` is the kernel
//! estimate of `E[m_j | X = x]`, and the kernel `sup`/integral runs over
//! `[h/2, 1−h/2]` so the kernel window stays inside the covariate support.
//!
//! Weightings: bounded (`ω ≡ 1`) and truncated variance
//! `ω_j = (σ̂_j(θ,g) ∨ σ_n)^{-1}` with
//! `σ̂_j(θ,g) = {E_n[m_j g]² − [E_n m_j g]²}^{1/2}`. The multiscale variant
//! is the truncated-variance weighting with `σ_n = (log n)²/n`.
//!
//! The reported scaling multiplies the raw statistic by `√n` for instrument
//! statistics (and bounded-weight KS), `√(n/log n)` for truncated-variance
//! KS, and `(n h^{d_X})^{1/2}` for kernel statistics.
//!
//! For interval instruments in one dimension all suprema are exact: the
//! objective depends on an interval only through the contiguous run of
//! order statistics it contains, so enumeration over runs (plus the empty
//! interval) covers the whole family.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::instruments::{
    enumerate_grid, FamilyKind, GridNode, Instrument, InstrumentFamily, KernelFn, MuMeasure,
    SortedCovariates,
};
use crate::model::{MomentModel, Sample};
use crate::util::{neg_part, pairwise_sum};
use sha2::{Digest, Sha256};

/// Statistic family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    IvCvm,
    IvKs,
    KernCvm,
    KernKs,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::IvCvm => "iv_cvm",
            Family::IvKs => "iv_ks",
            Family::KernCvm => "kern_cvm",
            Family::KernKs => "kern_ks",
        }
    }

    pub fn is_kernel(&self) -> bool {
        matches!(self, Family::KernCvm | Family::KernKs)
    }

    pub fn is_cvm(&self) -> bool {
        matches!(self, Family::IvCvm | Family::KernCvm)
    }
}

/// Truncation sequence for the variance weighting, `σ_n² = n^{-e}/4`.
///
/// The `/4` matches the variance scale of interval indicators times a
/// half-bounded moment: truncation binds exactly for instruments narrower
/// than `n^{-e}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaNRule {
    /// `σ_n² = n^{-1/5}/4`.
    Fifth,
    /// `σ_n² = n^{-1/3}/4`.
    Third,
    /// `σ_n² = n^{-1/2}/4`.
    Half,
    /// Fixed `σ_n` (not a function of `n`).
    Fixed(f64),
}

impl SigmaNRule {
    pub fn sigma_n(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            SigmaNRule::Fifth => (nf.powf(-1.0 / 5.0) / 4.0).sqrt(),
            SigmaNRule::Third => (nf.powf(-1.0 / 3.0) / 4.0).sqrt(),
            SigmaNRule::Half => (nf.powf(-1.0 / 2.0) / 4.0).sqrt(),
            SigmaNRule::Fixed(v) => *v,
        }
    }

    pub fn token(&self) -> String {
        match self {
            SigmaNRule::Fifth => "n15".into(),
            SigmaNRule::Third => "n13".into(),
            SigmaNRule::Half => "n12".into(),
            SigmaNRule::Fixed(v) => format!("fixed:{v}"),
        }
    }
}

/// Weighting `ω_j(θ, g)` applied to each weighted moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// `ω ≡ 1`.
    Bounded,
    /// `ω_j = (σ̂_j ∨ σ_n)^{-1}` with `σ_n` from the rule.
    TruncVar(SigmaNRule),
    /// `ω_j = (σ̂_j ∨ (log n)²/n)^{-1}`.
    Multiscale,
}

impl Weighting {
    /// Resolved truncation level at sample size `n`; `None` for bounded
    /// weights.
    pub fn sigma_n(&self, n: usize) -> Option<f64> {
        match self {
            Weighting::Bounded => None,
            Weighting::TruncVar(rule) => Some(rule.sigma_n(n)),
            Weighting::Multiscale => {
                let nf = n as f64;
                Some(nf.ln() * nf.ln() / nf)
            }
        }
    }

    pub fn token(&self) -> String {
        match self {
            Weighting::Bounded => "bounded".into(),
            Weighting::TruncVar(rule) => format!("trunc_var({})", rule.token()),
            Weighting::Multiscale => "multiscale".into(),
        }
    }
}

/// Bandwidth sequence for kernel statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// `h = n^{-1/5}`.
    Fifth,
    /// `h = n^{-1/3}`.
    Third,
    /// `h = n^{-1/2}`.
    Half,
    Fixed(f64),
}

impl BandwidthRule {
    pub fn bandwidth(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            BandwidthRule::Fifth => nf.powf(-1.0 / 5.0),
            BandwidthRule::Third => nf.powf(-1.0 / 3.0),
            BandwidthRule::Half => nf.powf(-1.0 / 2.0),
            BandwidthRule::Fixed(h) => *h,
        }
    }

    pub fn token(&self) -> String {
        match self {
            BandwidthRule::Fifth => "n15".into(),
            BandwidthRule::Third => "n13".into(),
            BandwidthRule::Half => "n12".into(),
            BandwidthRule::Fixed(h) => format!("fixed:{h}"),
        }
    }
}

/// Optional per-`x` weight for kernel statistics, applied on top of the
/// implicit indicator of `[h/2, 1−h/2]`.
#[derive(Clone)]
pub struct OmegaWeight {
    /// Stable label used in fingerprints.
    pub label: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for OmegaWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "OmegaWeight({})", self.label)
    }
}

/// Full description of a statistic: family, exponent, weighting, bandwidth,
/// instrument family and discretization grids.
#[derive(Debug, Clone)]
pub struct StatisticSpec {
    pub family: Family,
    /// CvM exponent `p ≥ 1`; ignored by KS families.
    pub p: f64,
    pub weighting: Weighting,
    /// Bandwidth rule (kernel families only).
    pub bandwidth: Option<BandwidthRule>,
    /// Instrument family (instrument statistics only).
    pub instruments: InstrumentFamily,
    /// Tensor resolution of the μ quadrature grid.
    pub mu_resolution: (usize, usize),
    /// Number of integration nodes for kernel statistics.
    pub x_grid: usize,
    /// Kernel used by kernel statistics.
    pub kernel: KernelFn,
    /// Optional kernel-statistic weight `ω_j(θ, x)`.
    pub omega: Option<OmegaWeight>,
}

impl StatisticSpec {
    pub fn iv_cvm(p: f64, weighting: Weighting) -> Self {
        StatisticSpec {
            family: Family::IvCvm,
            p,
            weighting,
            bandwidth: None,
            instruments: InstrumentFamily::boxes_1d(),
            mu_resolution: (100, 100),
            x_grid: 512,
            kernel: KernelFn::Uniform,
            omega: None,
        }
    }

    pub fn iv_ks(weighting: Weighting) -> Self {
        StatisticSpec {
            family: Family::IvKs,
            p: f64::INFINITY,
            weighting,
            bandwidth: None,
            instruments: InstrumentFamily::boxes_1d(),
            mu_resolution: (100, 100),
            x_grid: 512,
            kernel: KernelFn::Uniform,
            omega: None,
        }
    }

    pub fn kern_cvm(p: f64, bandwidth: BandwidthRule) -> Self {
        StatisticSpec {
            family: Family::KernCvm,
            p,
            weighting: Weighting::Bounded,
            bandwidth: Some(bandwidth),
            instruments: InstrumentFamily::boxes_1d(),
            mu_resolution: (100, 100),
            x_grid: 512,
            kernel: KernelFn::Uniform,
            omega: None,
        }
    }

    pub fn kern_ks(bandwidth: BandwidthRule) -> Self {
        StatisticSpec {
            family: Family::KernKs,
            p: f64::INFINITY,
            weighting: Weighting::Bounded,
            bandwidth: Some(bandwidth),
            instruments: InstrumentFamily::boxes_1d(),
            mu_resolution: (100, 100),
            x_grid: 512,
            kernel: KernelFn::Uniform,
            omega: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.family.is_cvm() && !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::UnsupportedSpec(format!(
                "p must be >= 1 and finite for CvM statistics, got {}",
                self.p
            )));
        }
        if let Weighting::TruncVar(SigmaNRule::Fixed(v)) = self.weighting {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::UnsupportedSpec(format!(
                    "sigma_n must be positive, got {v}"
                )));
            }
        }
        if self.family.is_kernel() {
            match self.bandwidth {
                None => {
                    return Err(Error::UnsupportedSpec(
                        "kernel statistics need a bandwidth rule".into(),
                    ))
                }
                Some(BandwidthRule::Fixed(h)) if !(h > 0.0 && h < 1.0) => {
                    return Err(Error::InvalidBandwidth(h));
                }
                _ => {}
            }
            if self.weighting != Weighting::Bounded {
                return Err(Error::UnsupportedSpec(
                    "kernel statistics use the per-x weight, not instrument studentization".into(),
                ));
            }
            if self.x_grid < 1 {
                return Err(Error::UnsupportedSpec("x_grid must be positive".into()));
            }
        } else {
            if self.mu_resolution.0 < 2 || self.mu_resolution.1 < 2 {
                return Err(Error::UnsupportedSpec(
                    "mu grid resolution must be at least 2 per axis".into(),
                ));
            }
            if matches!(self.instruments.kind, FamilyKind::Boxes1d)
                && self.instruments.kernel != KernelFn::Uniform
            {
                return Err(Error::UnsupportedSpec(
                    "the box family is the uniform-kernel family".into(),
                ));
            }
        }
        Ok(())
    }

    /// Default μ measure induced by the instrument family.
    pub fn mu_measure(&self) -> MuMeasure {
        match self.instruments.kind {
            FamilyKind::Boxes1d => MuMeasure::lebesgue_on_triangle(self.mu_resolution.0),
            FamilyKind::KernelLocScale {
                center_range,
                width_range,
            } => MuMeasure::lebesgue_on_rect(
                center_range,
                width_range,
                self.mu_resolution,
                self.instruments.kernel,
            ),
        }
    }

    /// Canonical description entering the fingerprint.
    pub fn canonical(&self, n: usize) -> String {
        let fam = match self.instruments.kind {
            FamilyKind::Boxes1d => "boxes_1d".to_string(),
            FamilyKind::KernelLocScale {
                center_range,
                width_range,
            } => format!(
                "loc_scale[{},{}]x[{},{}]:{}",
                center_range.0,
                center_range.1,
                width_range.0,
                width_range.1,
                self.instruments.kernel.name()
            ),
        };
        let bw = self
            .bandwidth
            .map(|b| b.token())
            .unwrap_or_else(|| "-".into());
        let omega = self
            .omega
            .as_ref()
            .map(|o| o.label.clone())
            .unwrap_or_else(|| "-".into());
        format!(
            "family={};p={};weighting={};bandwidth={};instruments={};mu={}x{};x_grid={};kernel={};omega={};n={}",
            self.family.name(),
            self.p,
            self.weighting.token(),
            bw,
            fam,
            self.mu_resolution.0,
            self.mu_resolution.1,
            self.x_grid,
            self.kernel.name(),
            omega,
            n
        )
    }

    /// Fingerprint of the statistic at sample size `n`, used to key
    /// critical-value caches and to guard test decisions.
    pub fn fingerprint(&self, n: usize) -> Fingerprint {
        Fingerprint::of(&self.canonical(n))
    }

    /// Scaling of the raw statistic entering the test decision.
    pub fn scale_factor(&self, n: usize) -> f64 {
        let nf = n as f64;
        match self.family {
            Family::IvCvm => nf.sqrt(),
            Family::IvKs => match self.weighting {
                Weighting::Bounded => nf.sqrt(),
                Weighting::TruncVar(_) | Weighting::Multiscale => (nf / nf.ln()).sqrt(),
            },
            Family::KernCvm | Family::KernKs => {
                let h = self
                    .bandwidth
                    .expect("validated kernel spec has a bandwidth")
                    .bandwidth(n);
                (nf * h).sqrt()
            }
        }
    }
}

/// Short stable hash of a canonical spec description.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub String);

impl Fingerprint {
    pub fn of(canonical: &str) -> Self {
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        Fingerprint(hex)
    }
}

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// A computed statistic: the raw value and the scaled value compared against
/// critical values, tagged with the spec fingerprint it was computed under.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticValue {
    pub raw: f64,
    pub scaled: f64,
    pub fingerprint: Fingerprint,
}

/// Weighted sample moment `E_n[m(W,θ) g(X)]`, componentwise. The covariate
/// must be one-dimensional.
pub fn sample_moment(
    sample: &Sample,
    model: &dyn MomentModel,
    theta: &[f64],
    g: &Instrument,
) -> Vec<f64> {
    assert_eq!(sample.d_x(), 1, "instruments index a scalar covariate");
    let d_y = model.d_y();
    let mut acc = vec![0.0; d_y];
    let mut m = vec![0.0; d_y];
    for i in 0..sample.n() {
        let gx = g.eval(sample.x_row(i)[0]);
        if gx == 0.0 {
            continue;
        }
        model.evaluate(sample, i, theta, &mut m);
        for j in 0..d_y {
            acc[j] += m[j] * gx;
        }
    }
    let n = sample.n() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    acc
}

/// Sample standard deviation of `{m_j(W_i,θ) g(X_i)}`:
/// `σ̂_j = {E_n[m_j g]² − [E_n m_j g]²}^{1/2}`, clamped at zero against
/// rounding.
pub fn sample_sd(
    sample: &Sample,
    model: &dyn MomentModel,
    theta: &[f64],
    g: &Instrument,
    j: usize,
) -> f64 {
    let d_y = model.d_y();
    assert!(j < d_y, "component out of range");
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut m = vec![0.0; d_y];
    for i in 0..sample.n() {
        let gx = g.eval(sample.x_row(i)[0]);
        if gx == 0.0 {
            continue;
        }
        model.evaluate(sample, i, theta, &mut m);
        let s = m[j] * gx;
        sum += s;
        sum_sq += s * s;
    }
    let n = sample.n() as f64;
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0).sqrt()
}

/// Kernel estimate `m̂(θ, x)` of the conditional moment at `x`, uniform or
/// Epanechnikov kernel with bandwidth `h`.
///
/// Errors with [`Error::NoDataInWindow`] when no observation falls in the
/// kernel window; calling statistics treat such points as contributing zero.
pub fn kernel_estimate(
    sample: &Sample,
    model: &dyn MomentModel,
    theta: &[f64],
    x: f64,
    h: f64,
    kernel: KernelFn,
) -> Result<Vec<f64>> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidBandwidth(h));
    }
    let d_y = model.d_y();
    let window = Instrument {
        center: x,
        width: h,
        kernel,
    };
    let mut num = vec![0.0; d_y];
    let mut den = 0.0;
    let mut m = vec![0.0; d_y];
    for i in 0..sample.n() {
        let k = window.eval(sample.x_row(i)[0]);
        if k == 0.0 {
            continue;
        }
        model.evaluate(sample, i, theta, &mut m);
        den += k;
        for j in 0..d_y {
            num[j] += m[j] * k;
        }
    }
    if den <= 0.0 {
        return Err(Error::NoDataInWindow(x));
    }
    num.iter_mut().for_each(|v| *v /= den);
    Ok(num)
}

// ---------------------------------------------------------------------------
// Prepared evaluation
// ---------------------------------------------------------------------------

/// A statistic with its μ grid materialized, reusable across datasets.
#[derive(Debug, Clone)]
pub struct PreparedStatistic {
    spec: StatisticSpec,
    grid: Option<Arc<Vec<GridNode>>>,
}

impl PreparedStatistic {
    pub fn new(spec: StatisticSpec) -> Result<Self> {
        spec.validate()?;
        let grid = if spec.family.is_kernel() {
            None
        } else {
            Some(Arc::new(enumerate_grid(&spec.mu_measure())?))
        };
        Ok(PreparedStatistic { spec, grid })
    }

    pub fn spec(&self) -> &StatisticSpec {
        &self.spec
    }

    /// Computes the statistic at `θ`. The sample must have a
    /// one-dimensional covariate.
    pub fn evaluate(
        &self,
        sample: &Sample,
        model: &dyn MomentModel,
        theta: &[f64],
    ) -> Result<StatisticValue> {
        SampleSession::new(sample, model)?.evaluate(self, theta)
    }
}

/// A dataset prepared for repeated statistic evaluation: the covariate sort
/// is done once and shared across specs and parameter values.
pub struct SampleSession<'a> {
    sample: &'a Sample,
    model: &'a dyn MomentModel,
    sorted: SortedCovariates,
    /// Cumulative observation counts over distinct values, length m+1.
    cum_count: Vec<usize>,
}

impl<'a> SampleSession<'a> {
    pub fn new(sample: &'a Sample, model: &'a dyn MomentModel) -> Result<Self> {
        if sample.d_x() != 1 {
            return Err(Error::UnsupportedSpec(
                "statistic evaluation requires d_x = 1".into(),
            ));
        }
        let xs: Vec<f64> = sample.x1().collect();
        let sorted = SortedCovariates::new(&xs)?;
        let mut cum_count = vec![0usize; sorted.values.len() + 1];
        for (k, &c) in sorted.counts.iter().enumerate() {
            cum_count[k + 1] = cum_count[k] + c;
        }
        Ok(SampleSession {
            sample,
            model,
            sorted,
            cum_count,
        })
    }

    /// Computes a prepared statistic at `θ` on this dataset.
    pub fn evaluate(
        &self,
        prepared: &PreparedStatistic,
        theta: &[f64],
    ) -> Result<StatisticValue> {
        let spec = &prepared.spec;
        let n = self.sample.n();
        let prep = ThetaScores::new(self, theta);
        let raw = match spec.family {
            Family::IvCvm => eval_iv_cvm(
                prepared.grid.as_ref().unwrap(),
                &prep,
                spec.p,
                spec.weighting.sigma_n(n),
            ),
            Family::IvKs => eval_iv_ks(
                prepared.grid.as_ref().unwrap(),
                &prep,
                spec.weighting.sigma_n(n),
                matches!(spec.instruments.kind, FamilyKind::Boxes1d),
            ),
            Family::KernCvm | Family::KernKs => {
                let h = spec.bandwidth.unwrap().bandwidth(n);
                if !(h > 0.0 && h < 1.0) {
                    return Err(Error::InvalidBandwidth(h));
                }
                eval_kern(
                    &prep,
                    h,
                    spec.kernel,
                    spec.x_grid,
                    spec.p,
                    spec.family == Family::KernCvm,
                    spec.omega.as_ref(),
                )
            }
        };
        let scaled = raw * spec.scale_factor(n);
        Ok(StatisticValue {
            raw,
            scaled,
            fingerprint: spec.fingerprint(n),
        })
    }
}

/// Moment scores at one parameter value, aggregated over distinct covariate
/// values with prefix sums.
struct ThetaScores<'s> {
    sorted: &'s SortedCovariates,
    cum_count: &'s [usize],
    d_y: usize,
    n: usize,
    /// Per component: prefix sums of aggregated scores (length m+1).
    prefix: Vec<Vec<f64>>,
    /// Per component: prefix sums of aggregated squared scores.
    prefix_sq: Vec<Vec<f64>>,
    /// Per component: per-distinct-value aggregated scores.
    agg: Vec<Vec<f64>>,
    /// Per component: per-distinct-value aggregated squared scores.
    agg_sq: Vec<Vec<f64>>,
}

impl<'s> ThetaScores<'s> {
    fn new(session: &'s SampleSession<'_>, theta: &[f64]) -> Self {
        let d_y = session.model.d_y();
        let n = session.sample.n();
        let scores = session.model.scores(session.sample, theta);
        let sorted = &session.sorted;
        let m = sorted.values.len();
        let mut agg = vec![vec![0.0; m]; d_y];
        let mut agg_sq = vec![vec![0.0; m]; d_y];
        let mut pos = 0;
        for (k, &c) in sorted.counts.iter().enumerate() {
            for _ in 0..c {
                let i = sorted.order[pos];
                for (j, agg_j) in agg.iter_mut().enumerate() {
                    let s = scores[i * d_y + j];
                    agg_j[k] += s;
                    agg_sq[j][k] += s * s;
                }
                pos += 1;
            }
        }
        let mut prefix = vec![vec![0.0; m + 1]; d_y];
        let mut prefix_sq = vec![vec![0.0; m + 1]; d_y];
        for j in 0..d_y {
            for k in 0..m {
                prefix[j][k + 1] = prefix[j][k] + agg[j][k];
                prefix_sq[j][k + 1] = prefix_sq[j][k] + agg_sq[j][k];
            }
        }
        ThetaScores {
            sorted,
            cum_count: &session.cum_count,
            d_y,
            n,
            prefix,
            prefix_sq,
            agg,
            agg_sq,
        }
    }

    /// Index range `[lo, hi)` of distinct values strictly inside `(a, b)`.
    fn range(&self, a: f64, b: f64) -> (usize, usize) {
        let lo = self.sorted.values.partition_point(|v| *v <= a);
        let hi = self.sorted.values.partition_point(|v| *v < b);
        (lo, hi.max(lo))
    }

    /// Weighted moment and sd of component `j` for a general instrument,
    /// evaluated over distinct values in its support window (open interval,
    /// matching the strict indicator and the open kernel support).
    fn node_moment_sd(&self, g: &Instrument, j: usize) -> (f64, f64) {
        let half = 0.5 * g.width;
        let (lo, hi) = self.range(g.center - half, g.center + half);
        let (sum, sum_sq) = if g.kernel == KernelFn::Uniform {
            (
                self.prefix[j][hi] - self.prefix[j][lo],
                self.prefix_sq[j][hi] - self.prefix_sq[j][lo],
            )
        } else {
            let mut s = 0.0;
            let mut ss = 0.0;
            for k in lo..hi {
                let kv = g.eval(self.sorted.values[k]);
                s += kv * self.agg[j][k];
                ss += kv * kv * self.agg_sq[j][k];
            }
            (s, ss)
        };
        let n = self.n as f64;
        let mean = sum / n;
        let sd = (sum_sq / n - mean * mean).max(0.0).sqrt();
        (mean, sd)
    }
}

fn omega_for(weighting_sigma_n: Option<f64>, sd: f64) -> f64 {
    match weighting_sigma_n {
        None => 1.0,
        Some(sn) => 1.0 / sd.max(sn),
    }
}

fn eval_iv_cvm(grid: &[GridNode], prep: &ThetaScores, p: f64, sigma_n: Option<f64>) -> f64 {
    let pow = |v: f64| if p == 1.0 { v } else { v.powf(p) };
    let mut terms = Vec::with_capacity(grid.len());
    for node in grid {
        if node.weight == 0.0 {
            continue;
        }
        let mut cell = 0.0;
        for j in 0..prep.d_y {
            let (mean, sd) = prep.node_moment_sd(&node.instrument, j);
            let v = neg_part(mean * omega_for(sigma_n, sd));
            if v > 0.0 {
                cell += pow(v);
            }
        }
        if cell > 0.0 {
            terms.push(node.weight * cell);
        }
    }
    let total = pairwise_sum(&terms);
    if p == 1.0 {
        total
    } else {
        total.powf(1.0 / p)
    }
}

fn eval_iv_ks(
    grid: &[GridNode],
    prep: &ThetaScores,
    sigma_n: Option<f64>,
    exact_boxes: bool,
) -> f64 {
    let mut best = 0.0f64;
    if exact_boxes {
        for j in 0..prep.d_y {
            best = best.max(match sigma_n {
                None => exact_ks_bounded(prep, j),
                Some(sn) => exact_ks_weighted(prep, j, sn),
            });
        }
        if sigma_n.is_none() {
            // The unweighted enumeration is already the exact supremum over
            // the whole box family; no grid pass needed.
            return best;
        }
    }
    // Grid search over the μ nodes: the optimizer for non-box families, a
    // safety net alongside the exact enumeration for studentized boxes.
    for node in grid {
        for j in 0..prep.d_y {
            let (mean, sd) = prep.node_moment_sd(&node.instrument, j);
            best = best.max(neg_part(mean * omega_for(sigma_n, sd)));
        }
    }
    best
}

/// Most negative run mean: one pass over prefix sums
/// (`min_{lo<hi} P[hi] − P[lo]`, empty run giving zero).
fn exact_ks_bounded(prep: &ThetaScores, j: usize) -> f64 {
    let p = &prep.prefix[j];
    let m = p.len() - 1;
    let mut max_pref = p[0];
    let mut best = 0.0f64;
    for hi in 1..=m {
        max_pref = max_pref.max(p[hi - 1]);
        best = best.min(p[hi] - max_pref);
    }
    -best / prep.n as f64
}

/// Weighted supremum over all O(m²) runs of order statistics. The
/// studentized objective is interval-determined, so run enumeration is
/// exhaustive for the box family.
fn exact_ks_weighted(prep: &ThetaScores, j: usize, sigma_n: f64) -> f64 {
    let p = &prep.prefix[j];
    let q = &prep.prefix_sq[j];
    let m = p.len() - 1;
    let n = prep.n as f64;
    let mut best = 0.0f64;
    for lo in 0..m {
        let p_lo = p[lo];
        let q_lo = q[lo];
        for hi in (lo + 1)..=m {
            let sum = p[hi] - p_lo;
            if sum >= 0.0 {
                continue;
            }
            let mean = sum / n;
            let var = (q[hi] - q_lo) / n - mean * mean;
            let sd = var.max(0.0).sqrt();
            let obj = -mean / sd.max(sigma_n);
            if obj > best {
                best = obj;
            }
        }
    }
    best
}

fn eval_kern(
    prep: &ThetaScores,
    h: f64,
    kernel: KernelFn,
    x_grid: usize,
    p: f64,
    cvm: bool,
    omega: Option<&OmegaWeight>,
) -> f64 {
    let lo = 0.5 * h;
    let hi = 1.0 - 0.5 * h;
    let len = hi - lo;
    let cell = len / x_grid as f64;
    let pow = |v: f64| if p == 1.0 { v } else { v.powf(p) };
    let mut terms = Vec::with_capacity(if cvm { x_grid } else { 0 });
    let mut best = 0.0f64;
    for t in 0..x_grid {
        let x = lo + (t as f64 + 0.5) * cell;
        let w_x = omega.map(|o| (o.f)(x)).unwrap_or(1.0);
        if w_x == 0.0 {
            continue;
        }
        let window = Instrument {
            center: x,
            width: h,
            kernel,
        };
        // Denominator Σ k((X_i − x)/h) over the window.
        let half = 0.5 * h;
        let (klo, khi) = prep.range(x - half - 1e-300, x + half);
        let den: f64 = if kernel == KernelFn::Uniform {
            (prep.cum_count[khi] - prep.cum_count[klo]) as f64
        } else {
            (klo..khi)
                .map(|k| window.eval(prep.sorted.values[k]) * prep.sorted.counts[k] as f64)
                .sum()
        };
        if den <= 0.0 {
            continue; // no data in window: the point contributes zero
        }
        let mut cell_val = 0.0;
        for j in 0..prep.d_y {
            let num = if kernel == KernelFn::Uniform {
                prep.prefix[j][khi] - prep.prefix[j][klo]
            } else {
                (klo..khi)
                    .map(|k| window.eval(prep.sorted.values[k]) * prep.agg[j][k])
                    .sum()
            };
            let v = neg_part(num / den * w_x);
            if cvm {
                if v > 0.0 {
                    cell_val += pow(v);
                }
            } else {
                best = best.max(v);
            }
        }
        if cvm && cell_val > 0.0 {
            terms.push(cell * cell_val);
        }
    }
    if !cvm {
        return best;
    }
    let total = pairwise_sum(&terms);
    if p == 1.0 {
        total
    } else {
        total.powf(1.0 / p)
    }
}

// ---------------------------------------------------------------------------
// Free functions matching the operation-level API
// ---------------------------------------------------------------------------

/// IV-CvM statistic over an explicit measure `mu`.
pub fn iv_cvm(
    sample: &Sample,
    model: &dyn MomentModel,
    theta: &[f64],
    spec: &StatisticSpec,
    mu: &MuMeasure,
) -> Result<StatisticValue> {
    if spec.family != Family::IvCvm {
        return Err(Error::UnsupportedSpec("spec.family must be iv_cvm".into()));
    }
    spec.validate()?;
    if sample.d_x() != 1 {
        return Err(Error::UnsupportedSpec("iv_cvm requires d_x = 1".into()));
    }
    let grid = enumerate_grid(mu)?;
    let session = SampleSession::new(sample, model)?;
    let prep = ThetaScores::new(&session, theta);
    let raw = eval_iv_cvm(&grid, &prep, spec.p, spec.weighting.sigma_n(sample.n()));
    Ok(StatisticValue {
        raw,
        scaled: raw * spec.scale_factor(sample.n()),
        fingerprint: spec.fingerprint(sample.n()),
    })
}

/// IV-KS statistic over an instrument family: exact enumeration for boxes,
/// grid search otherwise.
pub fn iv_ks(
    sample: &Sample,
    model: &dyn MomentModel,
    theta: &[f64],
    spec: &StatisticSpec,
    family: &InstrumentFamily,
) -> Result<StatisticValue> {
    if spec.family != Family::IvKs {
        return Err(Error::UnsupportedSpec("spec.family must be iv_ks".into()));
    }
    spec.validate()?;
    if sample.d_x() != 1 {
        return Err(Error::UnsupportedSpec("iv_ks requires d_x = 1".into()));
    }
    let mut spec = spec.clone();
    spec.instruments = *family;
    let prepared = PreparedStatistic::new(spec)?;
    prepared.evaluate(sample, model, theta)
}

/// Kernel CvM statistic.
pub fn kern_cvm(
    sample: &Sample,
    model: &dyn MomentModel,
    theta: &[f64],
    spec: &StatisticSpec,
) -> Result<StatisticValue> {
    if spec.family != Family::KernCvm {
        return Err(Error::UnsupportedSpec("spec.family must be kern_cvm".into()));
    }
    PreparedStatistic::new(spec.clone())?.evaluate(sample, model, theta)
}

/// Kernel KS statistic.
pub fn kern_ks(
    sample: &Sample,
    model: &dyn MomentModel,
    theta: &[f64],
    spec: &StatisticSpec,
) -> Result<StatisticValue> {
    if spec.family != Family::KernKs {
        return Err(Error::UnsupportedSpec("spec.family must be kern_ks".into()));
    }
    PreparedStatistic::new(spec.clone())?.evaluate(sample, model, theta)
}
