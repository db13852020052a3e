//! Monte Carlo engine: power curves over local alternatives, rate
//! consistency experiments, and cross-statistic comparisons.
//!
//! Every replication draws its dataset from a ChaCha stream derived from
//! `(master seed, design, n, replication index)`, so results are identical
//! across thread counts and the same datasets serve every statistic and
//! every alternative within a replication (common random numbers). Power
//! replications and critical-value replications live on disjoint stream
//! families.

use rayon::prelude::*;

use crate::critval::{lf_critval_cached, CriticalValue, CritvalCache, LfDesign};
use crate::error::{Error, Result};
use crate::model::{boundary_theta1, median_reg_moment, simulate_missing_data, MissingDataDesign};
use crate::rates::{rate_exponent, RateSpec, WeightKind};
use crate::seed::{derive_rng, Stream};
use crate::stats::{
    BandwidthRule, PreparedStatistic, SampleSession, SigmaNRule, StatisticSpec, Weighting,
};
use crate::util::binomial_rate;

/// A full power experiment: designs, sample sizes, alternatives, statistics.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub design: MissingDataDesign,
    pub n_list: Vec<usize>,
    /// Offsets above the identified-set boundary, `θ = (θ̄₁ + a, 0)`.
    pub a_list: Vec<f64>,
    pub specs: Vec<StatisticSpec>,
    pub alpha: f64,
    pub n_reps: usize,
    /// Replications for each least-favorable critical value.
    pub critval_sims: usize,
    pub master_seed: u64,
    pub lf: LfDesign,
}

impl ExperimentPlan {
    /// Plan with the simulation defaults: `a ∈ {.1,…,.5}`, 5% level, 1000
    /// replications, 10⁴ critical-value simulations.
    pub fn new(design: MissingDataDesign, n_list: Vec<usize>, specs: Vec<StatisticSpec>) -> Self {
        ExperimentPlan {
            design,
            n_list,
            a_list: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            specs,
            alpha: 0.05,
            n_reps: 1000,
            critval_sims: 10_000,
            master_seed: 0,
            lf: LfDesign::standard(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::InvalidArgument("n list must be positive".into()));
        }
        if self.a_list.is_empty() || self.a_list.iter().any(|a| *a < 0.0) {
            return Err(Error::InvalidArgument(
                "alternatives a must be nonnegative".into(),
            ));
        }
        if self.specs.is_empty() {
            return Err(Error::InvalidArgument("no statistics requested".into()));
        }
        if self.n_reps == 0 {
            return Err(Error::InvalidArgument("n_reps must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
        }
        for spec in &self.specs {
            spec.validate()?;
        }
        Ok(())
    }
}

/// One cell of a power table.
#[derive(Debug, Clone)]
pub struct PowerCell {
    pub design_id: u8,
    pub spec: StatisticSpec,
    pub n: usize,
    pub a: f64,
    /// Rejection frequency.
    pub power: f64,
    /// Binomial standard error of the frequency.
    pub se: f64,
    /// Mean of the scaled statistic across replications.
    pub mean_scaled: f64,
    /// Critical value used for the decision.
    pub critval: f64,
    /// Per-replication rejection indicators (for paired comparisons).
    pub rejections: Vec<bool>,
}

/// Power table with deterministic row order (spec-major, then n, then a).
#[derive(Debug, Clone)]
pub struct PowerCurve {
    pub rows: Vec<PowerCell>,
}

/// Spec fields serialized into table columns.
pub fn spec_columns(spec: &StatisticSpec) -> (String, String, String, String, String) {
    let weighting = match spec.weighting {
        Weighting::Bounded => "bounded".to_string(),
        Weighting::TruncVar(_) => "trunc_var".to_string(),
        Weighting::Multiscale => "multiscale".to_string(),
    };
    let sigma = match spec.weighting {
        Weighting::TruncVar(rule) => rule.token(),
        Weighting::Multiscale => "logsq".to_string(),
        Weighting::Bounded => "-".to_string(),
    };
    let bandwidth = spec
        .bandwidth
        .map(|b| b.token())
        .unwrap_or_else(|| "-".to_string());
    let p = if spec.family.is_cvm() {
        format!("{}", spec.p)
    } else {
        "inf".to_string()
    };
    (spec.family.name().to_string(), weighting, p, bandwidth, sigma)
}

impl PowerCurve {
    /// CSV with columns
    /// `design,family,weighting,p,bandwidth_rule,sigma_n_rule,n,a,power,se,critval`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("design,family,weighting,p,bandwidth_rule,sigma_n_rule,n,a,power,se,critval\n");
        for cell in &self.rows {
            let (family, weighting, p, bandwidth, sigma) = spec_columns(&cell.spec);
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                cell.design_id,
                family,
                weighting,
                p,
                bandwidth,
                sigma,
                cell.n,
                cell.a,
                cell.power,
                cell.se,
                cell.critval
            ));
        }
        out
    }
}

/// Runs the power experiment: for each `(spec, n, a)`, the rejection
/// frequency of the test at `θ = (θ̄₁ + a, 0)` against the cached
/// least-favorable critical value.
pub fn run_power(plan: &ExperimentPlan, cache: Option<&CritvalCache>) -> Result<PowerCurve> {
    plan.validate()?;
    let theta1_bar = boundary_theta1(&plan.design)?;
    let model = median_reg_moment();
    let prepared: Vec<PreparedStatistic> = plan
        .specs
        .iter()
        .map(|s| PreparedStatistic::new(s.clone()))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &n in &plan.n_list {
        let critvals: Vec<CriticalValue> = plan
            .specs
            .iter()
            .map(|spec| {
                lf_critval_cached(
                    cache,
                    spec,
                    n,
                    plan.alpha,
                    plan.critval_sims,
                    plan.master_seed,
                    &plan.lf,
                )
            })
            .collect::<Result<_>>()?;

        // scaled[rep][spec][a]
        let scaled: Vec<Vec<Vec<f64>>> = (0..plan.n_reps)
            .into_par_iter()
            .map(|rep| -> Result<Vec<Vec<f64>>> {
                let mut rng = derive_rng(
                    plan.master_seed,
                    Stream::Power,
                    &[plan.design.design_id as u64, n as u64, rep as u64],
                );
                let sample = simulate_missing_data(&plan.design, n, &mut rng)?;
                let session = SampleSession::new(&sample, &model)?;
                let mut per_spec = Vec::with_capacity(prepared.len());
                for prep in &prepared {
                    let mut per_a = Vec::with_capacity(plan.a_list.len());
                    for &a in &plan.a_list {
                        let theta = [theta1_bar + a, 0.0];
                        per_a.push(session.evaluate(prep, &theta)?.scaled);
                    }
                    per_spec.push(per_a);
                }
                Ok(per_spec)
            })
            .collect::<Result<_>>()?;

        for (spec_ix, spec) in plan.specs.iter().enumerate() {
            for (a_ix, &a) in plan.a_list.iter().enumerate() {
                let cv = critvals[spec_ix].value;
                let rejections: Vec<bool> = scaled
                    .iter()
                    .map(|per_rep| per_rep[spec_ix][a_ix] > cv)
                    .collect();
                let count = rejections.iter().filter(|r| **r).count();
                let (power, se) = binomial_rate(count, plan.n_reps);
                let mean_scaled = scaled
                    .iter()
                    .map(|per_rep| per_rep[spec_ix][a_ix])
                    .sum::<f64>()
                    / plan.n_reps as f64;
                rows.push(PowerCell {
                    design_id: plan.design.design_id,
                    spec: spec.clone(),
                    n,
                    a,
                    power,
                    se,
                    mean_scaled,
                    critval: cv,
                    rejections,
                });
            }
        }
    }
    // Spec-major ordering for stable CSV output.
    rows.sort_by(|x, y| {
        let kx = (format!("{:?}", spec_columns(&x.spec)), x.n, x.a);
        let ky = (format!("{:?}", spec_columns(&y.spec)), y.n, y.a);
        kx.partial_cmp(&ky).unwrap()
    });
    Ok(PowerCurve { rows })
}

/// Mean and standard error of the scaled statistic at a fixed `θ` across
/// replications (no critical values involved).
pub fn mean_scaled_statistic(
    design: &MissingDataDesign,
    spec: &StatisticSpec,
    n: usize,
    theta: [f64; 2],
    n_reps: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let prepared = PreparedStatistic::new(spec.clone())?;
    let model = median_reg_moment();
    let values: Vec<f64> = (0..n_reps)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let mut rng = derive_rng(
                master_seed,
                Stream::Power,
                &[design.design_id as u64, n as u64, rep as u64],
            );
            let sample = simulate_missing_data(design, n, &mut rng)?;
            Ok(prepared.evaluate(&sample, &model, &theta)?.scaled)
        })
        .collect::<Result<_>>()?;
    let mean = values.iter().sum::<f64>() / n_reps as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (n_reps.saturating_sub(1).max(1)) as f64;
    Ok((mean, (var / n_reps as f64).sqrt()))
}

/// One row of a rate-consistency check.
#[derive(Debug, Clone)]
pub struct RateRow {
    pub n: usize,
    /// Local alternative `a_n = a_const · n^{-q}` actually tested.
    pub a_n: f64,
    pub power: f64,
    pub se: f64,
    pub critval: f64,
}

#[derive(Debug, Clone)]
pub struct RateCheck {
    pub spec: StatisticSpec,
    pub design_id: u8,
    pub a_const: f64,
    /// Exponent used to shrink the alternatives.
    pub q: f64,
    pub rows: Vec<RateRow>,
}

impl RateCheck {
    /// CSV with columns
    /// `design,family,weighting,p,bandwidth_rule,sigma_n_rule,a_const,q,n,a_n,power,se,critval`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "design,family,weighting,p,bandwidth_rule,sigma_n_rule,a_const,q,n,a_n,power,se,critval\n",
        );
        let (family, weighting, p, bandwidth, sigma) = spec_columns(&self.spec);
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.design_id,
                family,
                weighting,
                p,
                bandwidth,
                sigma,
                self.a_const,
                self.q,
                row.n,
                row.a_n,
                row.power,
                row.se,
                row.critval
            ));
        }
        out
    }
}

/// Smoothness γ of a design's boundary conditional mean, if the design has
/// a nonflat binding set.
pub fn design_gamma(design: &MissingDataDesign) -> Option<f64> {
    match design.design_id {
        2 => Some(1.0),
        3 => Some(2.0),
        _ => None,
    }
}

/// Rate query matching a statistic spec at smoothness `gamma` in one
/// covariate dimension.
pub fn rate_spec_for(spec: &StatisticSpec, gamma: f64) -> Result<RateSpec> {
    let weighting = match spec.weighting {
        Weighting::Bounded => WeightKind::Bounded,
        Weighting::TruncVar(_) | Weighting::Multiscale => WeightKind::Variance,
    };
    let s = match spec.bandwidth {
        None => None,
        Some(BandwidthRule::Fifth) => Some(1.0 / 5.0),
        Some(BandwidthRule::Third) => Some(1.0 / 3.0),
        Some(BandwidthRule::Half) => Some(1.0 / 2.0),
        Some(BandwidthRule::Fixed(_)) => {
            return Err(Error::UnsupportedSpec(
                "rate checks need a polynomial bandwidth rule".into(),
            ))
        }
    };
    Ok(RateSpec {
        family: spec.family,
        weighting: if spec.family.is_kernel() {
            WeightKind::Bounded
        } else {
            weighting
        },
        p: spec.p,
        d_x: 1,
        gamma,
        s,
    })
}

/// Evaluates power along the rate-matched local alternative
/// `θ̄₁ + a_const · n^{-q}`. A flat power profile in `n` supports the
/// exponent; a profile drifting toward the level or toward one signals a
/// wrong exponent. `q_override` substitutes a foreign exponent (for
/// deliberate-mismatch diagnostics).
#[allow(clippy::too_many_arguments)]
pub fn run_rate_check(
    spec: &StatisticSpec,
    design: &MissingDataDesign,
    a_const: f64,
    n_list: &[usize],
    n_reps: usize,
    alpha: f64,
    critval_sims: usize,
    master_seed: u64,
    q_override: Option<f64>,
    cache: Option<&CritvalCache>,
) -> Result<RateCheck> {
    let gamma = design_gamma(design).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "design {} has a flat binding set; rate checks need design 2 or 3",
            design.design_id
        ))
    })?;
    let q = match q_override {
        Some(q) => q,
        None => rate_exponent(&rate_spec_for(spec, gamma)?)?.q,
    };
    let lf = LfDesign::standard();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let a_n = a_const * (n as f64).powf(-q);
        let mut plan = ExperimentPlan::new(*design, vec![n], vec![spec.clone()]);
        plan.a_list = vec![a_n];
        plan.alpha = alpha;
        plan.n_reps = n_reps;
        plan.critval_sims = critval_sims;
        plan.master_seed = master_seed;
        plan.lf = lf;
        let curve = run_power(&plan, cache)?;
        let cell = &curve.rows[0];
        rows.push(RateRow {
            n,
            a_n,
            power: cell.power,
            se: cell.se,
            critval: cell.critval,
        });
    }
    Ok(RateCheck {
        spec: spec.clone(),
        design_id: design.design_id,
        a_const,
        q,
        rows,
    })
}

/// Paired comparison of two specs at one `(n, a)` cell.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub design_id: u8,
    pub n: usize,
    pub a: f64,
    pub spec_a: StatisticSpec,
    pub spec_b: StatisticSpec,
    pub power_a: f64,
    pub power_b: f64,
    /// `power_a − power_b`.
    pub diff: f64,
    /// Standard error of the difference using the per-replication pairing.
    pub paired_se: f64,
    /// Standard error ignoring the pairing.
    pub unpaired_se: f64,
}

/// Tabulates power differences between every ordered pair of specs in the
/// curve, with paired standard errors from the common-random-number
/// replications.
pub fn compare_families(curve: &PowerCurve) -> Vec<CompareRow> {
    let mut rows = Vec::new();
    for (ix_a, cell_a) in curve.rows.iter().enumerate() {
        for cell_b in curve.rows.iter().skip(ix_a + 1) {
            if cell_a.n != cell_b.n
                || cell_a.a != cell_b.a
                || cell_a.design_id != cell_b.design_id
                || spec_columns(&cell_a.spec) == spec_columns(&cell_b.spec)
            {
                continue;
            }
            let reps = cell_a.rejections.len() as f64;
            let diffs: Vec<f64> = cell_a
                .rejections
                .iter()
                .zip(&cell_b.rejections)
                .map(|(a, b)| (*a as i8 - *b as i8) as f64)
                .collect();
            let mean = diffs.iter().sum::<f64>() / reps;
            let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
                / (reps - 1.0).max(1.0);
            let paired_se = (var / reps).sqrt();
            let unpaired_se = (cell_a.se * cell_a.se + cell_b.se * cell_b.se).sqrt();
            rows.push(CompareRow {
                design_id: cell_a.design_id,
                n: cell_a.n,
                a: cell_a.a,
                spec_a: cell_a.spec.clone(),
                spec_b: cell_b.spec.clone(),
                power_a: cell_a.power,
                power_b: cell_b.power,
                diff: mean,
                paired_se,
                unpaired_se,
            });
        }
    }
    rows
}

/// CSV for comparison rows.
pub fn compare_table_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from(
        "design,n,a,family_a,weighting_a,family_b,weighting_b,power_a,power_b,diff,paired_se,unpaired_se\n",
    );
    for row in rows {
        let (fam_a, w_a, ..) = spec_columns(&row.spec_a);
        let (fam_b, w_b, ..) = spec_columns(&row.spec_b);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.design_id,
            row.n,
            row.a,
            fam_a,
            w_a,
            fam_b,
            w_b,
            row.power_a,
            row.power_b,
            row.diff,
            row.paired_se,
            row.unpaired_se
        ));
    }
    out
}

/// A compact six-statistic battery: unweighted and variance-weighted
/// instrument CvM (`p = 1`), unweighted and multiscale instrument KS, and
/// kernel CvM/KS, at one truncation rule and one bandwidth rule.
pub fn standard_battery(sigma_rule: SigmaNRule, bandwidth: BandwidthRule) -> Vec<StatisticSpec> {
    vec![
        StatisticSpec::iv_cvm(1.0, Weighting::Bounded),
        StatisticSpec::iv_cvm(1.0, Weighting::TruncVar(sigma_rule)),
        StatisticSpec::iv_ks(Weighting::Bounded),
        StatisticSpec::iv_ks(Weighting::Multiscale),
        StatisticSpec::kern_cvm(1.0, bandwidth),
        StatisticSpec::kern_ks(bandwidth),
    ]
}
