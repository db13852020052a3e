//! Run configuration: TOML parsing with exhaustive validation.
//!
//! Validation is total — every module-level precondition is checked here,
//! and all violations are reported together rather than one at a time.

use std::path::PathBuf;

use cmi_core::stats::{BandwidthRule, Family, SigmaNRule, StatisticSpec, Weighting};
use toml::Value;

/// Subcommand selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Test,
    Critval,
    Power,
    Rates,
    McReproduce,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Test => "test",
            Command::Critval => "critval",
            Command::Power => "power",
            Command::Rates => "rates",
            Command::McReproduce => "mc-reproduce",
        }
    }

    fn parse(token: &str) -> Option<Command> {
        match token {
            "test" => Some(Command::Test),
            "critval" => Some(Command::Critval),
            "power" => Some(Command::Power),
            "rates" => Some(Command::Rates),
            "mc-reproduce" => Some(Command::McReproduce),
            _ => None,
        }
    }
}

/// Parameters of the `power` / `mc-reproduce` experiments.
#[derive(Debug, Clone)]
pub struct PowerSection {
    pub n: Vec<usize>,
    pub a: Vec<f64>,
    pub n_reps: usize,
    pub alpha: f64,
    pub critval_sims: usize,
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection {
            n: vec![500],
            a: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            n_reps: 1000,
            alpha: 0.05,
            critval_sims: 10_000,
        }
    }
}

/// Parameters of the one-shot `test` subcommand.
#[derive(Debug, Clone)]
pub struct TestSection {
    /// CSV sample to load; simulated from the design when absent.
    pub data: Option<PathBuf>,
    pub n: usize,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub critval_sims: usize,
}

impl Default for TestSection {
    fn default() -> Self {
        TestSection {
            data: None,
            n: 500,
            theta: vec![0.0, 0.0],
            alpha: 0.05,
            critval_sims: 10_000,
        }
    }
}

/// Grid for the `rates` subcommand.
#[derive(Debug, Clone)]
pub struct RatesSection {
    pub p: Vec<f64>,
    pub d_x: Vec<u32>,
    pub gamma: Vec<f64>,
    pub n: Vec<usize>,
}

impl Default for RatesSection {
    fn default() -> Self {
        RatesSection {
            p: vec![1.0, 2.0],
            d_x: vec![1],
            gamma: vec![1.0, 2.0],
            n: vec![250, 1000, 4000],
        }
    }
}

/// Optional rate-consistency experiment attached to a `power` run.
#[derive(Debug, Clone)]
pub struct RateCheckSection {
    pub a_const: f64,
    pub n: Vec<usize>,
    pub q_override: Option<f64>,
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub quick: bool,
    pub design: u8,
    pub specs: Vec<StatisticSpec>,
    pub power: PowerSection,
    pub test: TestSection,
    pub rates: RatesSection,
    pub rate_check: Option<RateCheckSection>,
}

impl RunConfig {
    /// Scales replication counts and grid resolutions down for CI runs.
    pub fn apply_quick(&mut self) {
        if !self.quick {
            return;
        }
        self.power.n_reps = (self.power.n_reps / 10).max(100);
        self.power.critval_sims = (self.power.critval_sims / 10).max(1000);
        self.test.critval_sims = (self.test.critval_sims / 10).max(1000);
        for spec in &mut self.specs {
            spec.mu_resolution = (
                (spec.mu_resolution.0 / 10).max(10),
                (spec.mu_resolution.1 / 10).max(10),
            );
            spec.x_grid = (spec.x_grid / 10).max(52);
        }
    }
}

/// Accumulates every validation problem before failing.
#[derive(Debug, Default)]
struct Errors(Vec<String>);

impl Errors {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }
}

fn expect_keys(table: &toml::Table, section: &str, allowed: &[&str], errors: &mut Errors) {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            errors.push(format!("unknown key `{key}` in [{section}]"));
        }
    }
}

fn get_f64(table: &toml::Table, key: &str, errors: &mut Errors) -> Option<f64> {
    match table.get(key) {
        None => None,
        Some(Value::Float(v)) => Some(*v),
        Some(Value::Integer(v)) => Some(*v as f64),
        Some(other) => {
            errors.push(format!("`{key}` must be a number, got {other}"));
            None
        }
    }
}

fn get_usize(table: &toml::Table, key: &str, errors: &mut Errors) -> Option<usize> {
    match table.get(key) {
        None => None,
        Some(Value::Integer(v)) if *v >= 0 => Some(*v as usize),
        Some(other) => {
            errors.push(format!("`{key}` must be a nonnegative integer, got {other}"));
            None
        }
    }
}

fn get_str<'t>(table: &'t toml::Table, key: &str, errors: &mut Errors) -> Option<&'t str> {
    match table.get(key) {
        None => None,
        Some(Value::String(s)) => Some(s.as_str()),
        Some(other) => {
            errors.push(format!("`{key}` must be a string, got {other}"));
            None
        }
    }
}

fn get_f64_list(table: &toml::Table, key: &str, errors: &mut Errors) -> Option<Vec<f64>> {
    match table.get(key) {
        None => None,
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::Float(v) => out.push(*v),
                    Value::Integer(v) => out.push(*v as f64),
                    other => {
                        errors.push(format!("`{key}` entries must be numbers, got {other}"));
                        return None;
                    }
                }
            }
            Some(out)
        }
        Some(other) => {
            errors.push(format!("`{key}` must be an array, got {other}"));
            None
        }
    }
}

fn get_usize_list(table: &toml::Table, key: &str, errors: &mut Errors) -> Option<Vec<usize>> {
    get_f64_list(table, key, errors).map(|vs| {
        vs.into_iter()
            .map(|v| if v >= 0.0 { v as usize } else { 0 })
            .collect()
    })
}

fn sigma_rule(token: &str, errors: &mut Errors) -> SigmaNRule {
    match token {
        "n15" => SigmaNRule::Fifth,
        "n13" => SigmaNRule::Third,
        "n12" => SigmaNRule::Half,
        other => {
            errors.push(format!(
                "sigma_n_rule must be one of n15|n13|n12, got `{other}`"
            ));
            SigmaNRule::Third
        }
    }
}

fn bandwidth_rule(token: &str, errors: &mut Errors) -> BandwidthRule {
    match token {
        "n15" => BandwidthRule::Fifth,
        "n13" => BandwidthRule::Third,
        "n12" => BandwidthRule::Half,
        other => {
            errors.push(format!(
                "bandwidth_rule must be one of n15|n13|n12, got `{other}`"
            ));
            BandwidthRule::Fifth
        }
    }
}

/// Parses one `[stats]`-shaped table into a statistic spec.
fn parse_spec(table: &toml::Table, section: &str, errors: &mut Errors) -> StatisticSpec {
    expect_keys(
        table,
        section,
        &[
            "family",
            "p",
            "weighting",
            "sigma_n_rule",
            "bandwidth_rule",
            "bandwidth",
            "x_grid",
        ],
        errors,
    );
    let family = match get_str(table, "family", errors) {
        Some("iv_cvm") => Family::IvCvm,
        Some("iv_ks") => Family::IvKs,
        Some("kern_cvm") => Family::KernCvm,
        Some("kern_ks") => Family::KernKs,
        Some(other) => {
            errors.push(format!(
                "family must be one of iv_cvm|iv_ks|kern_cvm|kern_ks, got `{other}`"
            ));
            Family::IvCvm
        }
        None => {
            errors.push(format!("missing required key `family` in [{section}]"));
            Family::IvCvm
        }
    };
    let p = get_f64(table, "p", errors).unwrap_or(1.0);
    if family.is_cvm() && (p.is_nan() || p < 1.0) {
        errors.push(format!("p must be ≥ 1, got {p}"));
    }
    let weighting = match get_str(table, "weighting", errors) {
        None | Some("bounded") => Weighting::Bounded,
        Some("trunc_var") => {
            let rule = get_str(table, "sigma_n_rule", errors)
                .map(|t| sigma_rule(t, errors))
                .unwrap_or(SigmaNRule::Third);
            Weighting::TruncVar(rule)
        }
        Some("multiscale") => Weighting::Multiscale,
        Some(other) => {
            errors.push(format!(
                "weighting must be one of bounded|trunc_var|multiscale, got `{other}`"
            ));
            Weighting::Bounded
        }
    };
    if family.is_kernel() && weighting != Weighting::Bounded {
        errors.push("kernel statistics only support the bounded weighting".to_string());
    }
    let bandwidth = if let Some(h) = get_f64(table, "bandwidth", errors) {
        if !(h > 0.0 && h < 1.0) {
            errors.push(format!("bandwidth in (0,1) required, got {h}"));
        }
        Some(BandwidthRule::Fixed(h))
    } else {
        get_str(table, "bandwidth_rule", errors).map(|t| bandwidth_rule(t, errors))
    };
    if family.is_kernel() && bandwidth.is_none() {
        errors.push("kernel statistics need `bandwidth_rule` or `bandwidth`".to_string());
    }

    let mut spec = match family {
        Family::IvCvm => StatisticSpec::iv_cvm(p, weighting),
        Family::IvKs => StatisticSpec::iv_ks(weighting),
        Family::KernCvm => {
            StatisticSpec::kern_cvm(p, bandwidth.unwrap_or(BandwidthRule::Fifth))
        }
        Family::KernKs => StatisticSpec::kern_ks(bandwidth.unwrap_or(BandwidthRule::Fifth)),
    };
    if let Some(x_grid) = get_usize(table, "x_grid", errors) {
        if x_grid == 0 {
            errors.push("x_grid must be positive".to_string());
        } else {
            spec.x_grid = x_grid;
        }
    }
    spec
}

const TOP_KEYS: &[&str] = &[
    "command",
    "seed",
    "threads",
    "out_dir",
    "quick",
    "design",
    "stats",
    "statistics",
    "instruments",
    "power",
    "test",
    "rates",
    "rate_check",
];

/// Parses and fully validates a configuration, returning either the config
/// or the complete list of validation errors.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<String>> {
    let root: toml::Table = match text.parse() {
        Ok(v) => v,
        Err(e) => return Err(vec![format!("TOML syntax error: {e}")]),
    };
    let mut errors = Errors::default();
    expect_keys(&root, "top level", TOP_KEYS, &mut errors);

    let command = match get_str(&root, "command", &mut errors) {
        Some(token) => match Command::parse(token) {
            Some(c) => c,
            None => {
                errors.push(format!(
                    "command must be one of test|critval|power|rates|mc-reproduce, got `{token}`"
                ));
                Command::Rates
            }
        },
        None => {
            errors.push("missing required key `command`".to_string());
            Command::Rates
        }
    };

    let seed = get_usize(&root, "seed", &mut errors).unwrap_or(0) as u64;
    let threads = get_usize(&root, "threads", &mut errors).unwrap_or(0);
    let out_dir = PathBuf::from(get_str(&root, "out_dir", &mut errors).unwrap_or("out"));
    let quick = match root.get("quick") {
        Some(Value::Boolean(b)) => *b,
        None => false,
        Some(other) => {
            errors.push(format!("`quick` must be a boolean, got {other}"));
            false
        }
    };

    let design = match root.get("design") {
        None => 1,
        Some(Value::Table(t)) => {
            expect_keys(t, "design", &["id"], &mut errors);
            match get_usize(t, "id", &mut errors) {
                Some(id @ 1..=3) => id as u8,
                Some(other) => {
                    errors.push(format!("design id must be 1, 2 or 3, got {other}"));
                    1
                }
                None => 1,
            }
        }
        Some(other) => {
            errors.push(format!("`design` must be a table, got {other}"));
            1
        }
    };

    // Instruments section adjusts the μ grid on every instrument statistic.
    let mut mu_resolution = (100usize, 100usize);
    if let Some(Value::Table(t)) = root.get("instruments") {
        expect_keys(t, "instruments", &["kind", "resolution"], &mut errors);
        if let Some(kind) = get_str(t, "kind", &mut errors) {
            if kind != "boxes_1d" {
                errors.push(format!(
                    "instruments.kind must be `boxes_1d` (kernel location-scale families are a library-level option), got `{kind}`"
                ));
            }
        }
        if let Some(res) = get_usize(t, "resolution", &mut errors) {
            if res < 2 {
                errors.push(format!("instruments.resolution must be at least 2, got {res}"));
            } else {
                mu_resolution = (res, res);
            }
        }
    } else if let Some(other) = root.get("instruments") {
        errors.push(format!("`instruments` must be a table, got {other}"));
    }

    // Statistics: either a single [stats] table or a [[statistics]] array.
    let mut specs = Vec::new();
    match (root.get("stats"), root.get("statistics")) {
        (Some(Value::Table(t)), None) => specs.push(parse_spec(t, "stats", &mut errors)),
        (None, Some(Value::Array(items))) => {
            for (ix, item) in items.iter().enumerate() {
                match item {
                    Value::Table(t) => {
                        specs.push(parse_spec(t, &format!("statistics[{ix}]"), &mut errors))
                    }
                    other => errors.push(format!(
                        "statistics entries must be tables, got {other}"
                    )),
                }
            }
        }
        (Some(_), Some(_)) => {
            errors.push("give either [stats] or [[statistics]], not both".to_string())
        }
        (Some(other), None) => errors.push(format!("`stats` must be a table, got {other}")),
        (None, Some(other)) => errors.push(format!("`statistics` must be an array, got {other}")),
        (None, None) => {}
    }
    for spec in &mut specs {
        if !spec.family.is_kernel() {
            spec.mu_resolution = mu_resolution;
        }
    }
    if specs.is_empty() && matches!(command, Command::Test | Command::Critval | Command::Power) {
        errors.push(format!(
            "subcommand `{}` needs a [stats] (or [[statistics]]) section",
            command.name()
        ));
    }

    let mut power = PowerSection::default();
    if let Some(Value::Table(t)) = root.get("power") {
        expect_keys(
            t,
            "power",
            &["n", "a", "n_reps", "alpha", "critval_sims"],
            &mut errors,
        );
        if let Some(n) = get_usize_list(t, "n", &mut errors) {
            if n.is_empty() || n.contains(&0) {
                errors.push("power.n must be a nonempty list of positive sizes".to_string());
            } else {
                power.n = n;
            }
        }
        if let Some(a) = get_f64_list(t, "a", &mut errors) {
            if a.iter().any(|v| *v < 0.0) {
                errors.push("power.a entries must be nonnegative".to_string());
            } else {
                power.a = a;
            }
        }
        if let Some(reps) = get_usize(t, "n_reps", &mut errors) {
            if reps < 100 {
                errors.push(format!("power.n_reps must be at least 100, got {reps}"));
            } else {
                power.n_reps = reps;
            }
        }
        if let Some(alpha) = get_f64(t, "alpha", &mut errors) {
            if !(alpha > 0.0 && alpha < 1.0) {
                errors.push(format!("power.alpha must lie in (0,1), got {alpha}"));
            } else {
                power.alpha = alpha;
            }
        }
        if let Some(sims) = get_usize(t, "critval_sims", &mut errors) {
            if sims < 1000 {
                errors.push(format!(
                    "power.critval_sims must be at least 1000, got {sims}"
                ));
            } else {
                power.critval_sims = sims;
            }
        }
    } else if let Some(other) = root.get("power") {
        errors.push(format!("`power` must be a table, got {other}"));
    }

    let mut test = TestSection::default();
    if let Some(Value::Table(t)) = root.get("test") {
        expect_keys(
            t,
            "test",
            &["data", "n", "theta", "alpha", "critval_sims"],
            &mut errors,
        );
        if let Some(path) = get_str(t, "data", &mut errors) {
            test.data = Some(PathBuf::from(path));
        }
        if let Some(n) = get_usize(t, "n", &mut errors) {
            if n == 0 {
                errors.push("test.n must be positive".to_string());
            } else {
                test.n = n;
            }
        }
        if let Some(theta) = get_f64_list(t, "theta", &mut errors) {
            if theta.len() != 2 {
                errors.push(format!(
                    "test.theta must have two entries, got {}",
                    theta.len()
                ));
            } else {
                test.theta = theta;
            }
        }
        if let Some(alpha) = get_f64(t, "alpha", &mut errors) {
            if !(alpha > 0.0 && alpha < 1.0) {
                errors.push(format!("test.alpha must lie in (0,1), got {alpha}"));
            } else {
                test.alpha = alpha;
            }
        }
        if let Some(sims) = get_usize(t, "critval_sims", &mut errors) {
            if sims < 1000 {
                errors.push(format!(
                    "test.critval_sims must be at least 1000, got {sims}"
                ));
            } else {
                test.critval_sims = sims;
            }
        }
    } else if let Some(other) = root.get("test") {
        errors.push(format!("`test` must be a table, got {other}"));
    }

    let mut rates = RatesSection::default();
    if let Some(Value::Table(t)) = root.get("rates") {
        expect_keys(t, "rates", &["p", "d_x", "gamma", "n"], &mut errors);
        if let Some(p) = get_f64_list(t, "p", &mut errors) {
            for v in &p {
                if v.is_nan() || *v < 1.0 {
                    errors.push(format!("rates.p entries must be ≥ 1, got {v}"));
                }
            }
            rates.p = p;
        }
        if let Some(d) = get_usize_list(t, "d_x", &mut errors) {
            if d.contains(&0) {
                errors.push("rates.d_x entries must be positive".to_string());
            } else {
                rates.d_x = d.into_iter().map(|v| v as u32).collect();
            }
        }
        if let Some(g) = get_f64_list(t, "gamma", &mut errors) {
            for v in &g {
                if !(*v > 0.0 && *v <= 2.0) {
                    errors.push(format!("rates.gamma entries must lie in (0,2], got {v}"));
                }
            }
            rates.gamma = g;
        }
        if let Some(n) = get_usize_list(t, "n", &mut errors) {
            if n.is_empty() || n.contains(&0) {
                errors.push("rates.n must be a nonempty list of positive sizes".to_string());
            } else {
                rates.n = n;
            }
        }
    } else if let Some(other) = root.get("rates") {
        errors.push(format!("`rates` must be a table, got {other}"));
    }

    let mut rate_check = None;
    if let Some(Value::Table(t)) = root.get("rate_check") {
        expect_keys(t, "rate_check", &["a_const", "n", "q_override"], &mut errors);
        let a_const = get_f64(t, "a_const", &mut errors).unwrap_or(1.0);
        if a_const < 0.0 {
            errors.push(format!("rate_check.a_const must be nonnegative, got {a_const}"));
        }
        let n = get_usize_list(t, "n", &mut errors).unwrap_or_else(|| vec![250, 1000, 4000]);
        if n.is_empty() || n.contains(&0) {
            errors.push("rate_check.n must be a nonempty list of positive sizes".to_string());
        }
        let q_override = get_f64(t, "q_override", &mut errors);
        if design == 1 {
            errors.push("rate_check needs design 2 or 3 (design 1 has a flat binding set)".to_string());
        }
        rate_check = Some(RateCheckSection {
            a_const,
            n,
            q_override,
        });
    } else if let Some(other) = root.get("rate_check") {
        errors.push(format!("`rate_check` must be a table, got {other}"));
    }

    // Spec-level validation as a final safety net.
    for spec in &specs {
        if let Err(e) = spec.validate() {
            errors.push(e.to_string());
        }
    }

    if errors.0.is_empty() {
        let mut config = RunConfig {
            command,
            seed,
            threads,
            out_dir,
            quick,
            design,
            specs,
            power,
            test,
            rates,
            rate_check,
        };
        config.apply_quick();
        Ok(config)
    } else {
        Err(errors.0)
    }
}
