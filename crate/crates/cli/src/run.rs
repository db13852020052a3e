//! Subcommand execution and artifact emission.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use cmi_core::critval::{decide, lf_critval_cached, CritvalCache, Decision, LfDesign};
use cmi_core::harness::{
    compare_families, compare_table_csv, run_power, run_rate_check, spec_columns, ExperimentPlan,
};
use cmi_core::model::{median_reg_moment, simulate_missing_data, MissingDataDesign, Sample};
use cmi_core::rates::{rate_table_csv, RateSpec, WeightKind};
use cmi_core::seed::{derive_rng, Stream};
use cmi_core::stats::{BandwidthRule, Family, PreparedStatistic, SigmaNRule, StatisticSpec, Weighting};
use cmi_core::{Error, Result};

use crate::config::{Command, RunConfig};

pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

fn write_artifact(
    out_dir: &std::path::Path,
    name: &str,
    content: &str,
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, content)?;
    artifacts.push(path);
    Ok(())
}

fn cache_for(config: &RunConfig) -> CritvalCache {
    CritvalCache::from_env()
        .unwrap_or_else(|| CritvalCache::new(config.out_dir.join("critvals.csv")))
}

/// Executes the configured subcommand, writes its CSV artifacts plus a run
/// manifest, and returns the artifact list.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut artifacts = Vec::new();
    let summary = match config.command {
        Command::Rates => run_rates(config, &mut artifacts)?,
        Command::Critval => run_critval(config, &mut artifacts)?,
        Command::Power => run_power_cmd(config, &mut artifacts)?,
        Command::Test => run_test(config, &mut artifacts)?,
        Command::McReproduce => run_mc_reproduce(config, &mut artifacts)?,
    };

    let mut manifest = String::new();
    let _ = writeln!(manifest, "tool = cmi {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "command = {}", config.command.name());
    let _ = writeln!(manifest, "seed = {}", config.seed);
    let _ = writeln!(manifest, "threads = {}", config.threads);
    let _ = writeln!(manifest, "quick = {}", config.quick);
    let _ = writeln!(manifest, "design = {}", config.design);
    let _ = writeln!(manifest, "config = {config:?}");
    let _ = writeln!(manifest, "wall_time_s = {:.3}", started.elapsed().as_secs_f64());
    let _ = writeln!(manifest, "artifacts:");
    for artifact in &artifacts {
        let _ = writeln!(manifest, "  - {}", artifact.display());
    }
    std::fs::create_dir_all(&config.out_dir)?;
    let manifest_path = config.out_dir.join("run_manifest.txt");
    std::fs::write(&manifest_path, &manifest)?;
    artifacts.push(manifest_path);

    Ok(RunOutcome {
        artifacts,
        summary,
    })
}

fn run_rates(config: &RunConfig, artifacts: &mut Vec<PathBuf>) -> Result<String> {
    let mut specs = Vec::new();
    for &p in &config.rates.p {
        for &d_x in &config.rates.d_x {
            for &gamma in &config.rates.gamma {
                for family in [Family::IvCvm, Family::IvKs] {
                    for weighting in [WeightKind::Bounded, WeightKind::Variance] {
                        specs.push(RateSpec {
                            family,
                            weighting,
                            p,
                            d_x,
                            gamma,
                            s: None,
                        });
                    }
                }
                for family in [Family::KernCvm, Family::KernKs] {
                    specs.push(RateSpec {
                        family,
                        weighting: WeightKind::Bounded,
                        p,
                        d_x,
                        gamma,
                        s: None,
                    });
                }
            }
        }
    }
    let csv = rate_table_csv(&specs, &config.rates.n)?;
    write_artifact(&config.out_dir, "rates.csv", &csv, artifacts)?;
    Ok(format!(
        "{} rate rows over {} specs",
        csv.lines().count() - 1,
        specs.len()
    ))
}

fn run_critval(config: &RunConfig, artifacts: &mut Vec<PathBuf>) -> Result<String> {
    let cache = cache_for(config);
    let lf = LfDesign::standard();
    let mut csv = String::from("fingerprint,family,weighting,p,bandwidth_rule,sigma_n_rule,alpha,n,n_sims,seed,critval\n");
    let mut last = 0.0;
    for spec in &config.specs {
        for &n in &config.power.n {
            let cv = lf_critval_cached(
                Some(&cache),
                spec,
                n,
                config.power.alpha,
                config.power.critval_sims,
                config.seed,
                &lf,
            )?;
            let (family, weighting, p, bandwidth, sigma) = spec_columns(spec);
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{}",
                cv.fingerprint,
                family,
                weighting,
                p,
                bandwidth,
                sigma,
                cv.alpha,
                cv.n,
                cv.n_sims,
                cv.seed,
                cv.value
            );
            last = cv.value;
        }
    }
    write_artifact(&config.out_dir, "critval.csv", &csv, artifacts)?;
    Ok(format!("last critical value {last}"))
}

fn plan_from(config: &RunConfig, design: MissingDataDesign) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(design, config.power.n.clone(), config.specs.clone());
    plan.a_list = config.power.a.clone();
    plan.alpha = config.power.alpha;
    plan.n_reps = config.power.n_reps;
    plan.critval_sims = config.power.critval_sims;
    plan.master_seed = config.seed;
    plan
}

fn run_power_cmd(config: &RunConfig, artifacts: &mut Vec<PathBuf>) -> Result<String> {
    let cache = cache_for(config);
    let design = MissingDataDesign::design(config.design)?;
    let plan = plan_from(config, design);
    let curve = run_power(&plan, Some(&cache))?;
    write_artifact(&config.out_dir, "power_table.csv", &curve.to_csv(), artifacts)?;
    let mut summary = format!("{} power cells", curve.rows.len());
    if config.specs.len() > 1 {
        let rows = compare_families(&curve);
        write_artifact(
            &config.out_dir,
            "compare_table.csv",
            &compare_table_csv(&rows),
            artifacts,
        )?;
    }
    if let Some(rc) = &config.rate_check {
        let check = run_rate_check(
            &config.specs[0],
            &design,
            rc.a_const,
            &rc.n,
            config.power.n_reps,
            config.power.alpha,
            config.power.critval_sims,
            config.seed,
            rc.q_override,
            Some(&cache),
        )?;
        write_artifact(&config.out_dir, "rate_check.csv", &check.to_csv(), artifacts)?;
        let _ = write!(summary, ", rate check q = {}", check.q);
    }
    Ok(summary)
}

fn run_test(config: &RunConfig, artifacts: &mut Vec<PathBuf>) -> Result<String> {
    let design = MissingDataDesign::design(config.design)?;
    let sample: Sample = match &config.test.data {
        Some(path) => Sample::from_csv(&std::fs::read_to_string(path)?)?,
        None => {
            let mut rng = derive_rng(config.seed, Stream::Simulate, &[config.design as u64]);
            simulate_missing_data(&design, config.test.n, &mut rng)?
        }
    };
    let spec = &config.specs[0];
    let model = median_reg_moment();
    let prepared = PreparedStatistic::new(spec.clone())?;
    let value = prepared.evaluate(&sample, &model, &config.test.theta)?;
    let cache = cache_for(config);
    let cv = lf_critval_cached(
        Some(&cache),
        spec,
        sample.n(),
        config.test.alpha,
        config.test.critval_sims,
        config.seed,
        &LfDesign::standard(),
    )?;
    let decision = decide(&value, &cv)?;
    let verdict = match decision {
        Decision::Reject => "reject",
        Decision::Accept => "accept",
    };
    let (family, weighting, p, bandwidth, sigma) = spec_columns(spec);
    let mut csv = String::from(
        "family,weighting,p,bandwidth_rule,sigma_n_rule,n,theta1,theta2,raw,scaled,critval,alpha,decision\n",
    );
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        family,
        weighting,
        p,
        bandwidth,
        sigma,
        sample.n(),
        config.test.theta[0],
        config.test.theta[1],
        value.raw,
        value.scaled,
        cv.value,
        config.test.alpha,
        verdict
    );
    write_artifact(&config.out_dir, "test_result.csv", &csv, artifacts)?;
    Ok(format!(
        "{} at theta = ({}, {}): scaled statistic {:.6} vs critical value {:.6} -> {}",
        family, config.test.theta[0], config.test.theta[1], value.scaled, cv.value, verdict
    ))
}

fn run_mc_reproduce(config: &RunConfig, artifacts: &mut Vec<PathBuf>) -> Result<String> {
    let cache = cache_for(config);
    // The full study battery: unweighted instrument statistics, the
    // multiscale KS, truncated-variance CvM at all three truncation rules,
    // and kernel statistics at all three bandwidth rules.
    let mut battery = vec![
        StatisticSpec::iv_cvm(1.0, Weighting::Bounded),
        StatisticSpec::iv_ks(Weighting::Bounded),
        StatisticSpec::iv_ks(Weighting::Multiscale),
    ];
    for rule in [SigmaNRule::Fifth, SigmaNRule::Third, SigmaNRule::Half] {
        battery.push(StatisticSpec::iv_cvm(1.0, Weighting::TruncVar(rule)));
    }
    for rule in [BandwidthRule::Fifth, BandwidthRule::Third, BandwidthRule::Half] {
        battery.push(StatisticSpec::kern_cvm(1.0, rule));
        battery.push(StatisticSpec::kern_ks(rule));
    }
    if config.quick {
        for spec in &mut battery {
            spec.mu_resolution = (
                (spec.mu_resolution.0 / 10).max(10),
                (spec.mu_resolution.1 / 10).max(10),
            );
            spec.x_grid = (spec.x_grid / 10).max(52);
        }
    }
    let design = MissingDataDesign::design(config.design)?;
    let mut plan = plan_from(config, design);
    plan.specs = battery;
    let curve = run_power(&plan, Some(&cache))?;
    write_artifact(&config.out_dir, "power_table.csv", &curve.to_csv(), artifacts)?;
    let rows = compare_families(&curve);
    write_artifact(
        &config.out_dir,
        "compare_table.csv",
        &compare_table_csv(&rows),
        artifacts,
    )?;
    Ok(format!(
        "design {}: {} power cells, {} paired comparisons",
        config.design,
        curve.rows.len(),
        rows.len()
    ))
}

/// Exit code classification: 2 config, 3 numerical, 4 i/o.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Io(_) => 4,
        Error::Config(_) => 2,
        Error::EnlargeDomain { .. }
        | Error::InvalidBandwidth(_)
        | Error::NoDataInWindow(_)
        | Error::UnsupportedSpec(_)
        | Error::SpecMismatch { .. }
        | Error::DegenerateDesign(_)
        | Error::InvalidMeasure(_) => 3,
        Error::InvalidArgument(_) | Error::InvalidData(_) => 2,
    }
}
