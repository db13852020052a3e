//! `cmi` — tests for conditional moment inequality models.
//!
//! Subcommands: `test` (one decision on a dataset), `critval` (simulate and
//! cache least-favorable critical values), `power` (Monte Carlo power
//! curves), `rates` (local-power rate exponents), and `mc-reproduce` (the
//! full simulation-study battery on one design).
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 i/o failure.

mod config;
mod run;

use clap::{Args, Parser, Subcommand};

use config::{parse_config, Command as RunCommand, RunConfig};

#[derive(Parser)]
#[command(name = "cmi", version, about = "Conditional moment inequality testing")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Worker threads (0 = automatic; affects speed only, never results).
    #[arg(long)]
    threads: Option<usize>,
    /// Scale replication counts and grids down for smoke runs.
    #[arg(long)]
    quick: bool,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Test one parameter value on a dataset (loaded or simulated).
    Test(CommonArgs),
    /// Simulate least-favorable critical values into the cache.
    Critval(CommonArgs),
    /// Monte Carlo power curves over local alternatives.
    Power(CommonArgs),
    /// Local-power rate exponents as CSV.
    Rates(CommonArgs),
    /// Reproduce the simulation-study battery for one design.
    McReproduce {
        #[command(flatten)]
        common: CommonArgs,
        /// Simulation design (1, 2 or 3).
        #[arg(long)]
        design: Option<u8>,
    },
}

fn load_config(common: &CommonArgs, command: RunCommand) -> Result<RunConfig, Vec<String>> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?,
        None => format!("command = \"{}\"\n", command.name()),
    };
    let mut config = parse_config(&text)?;
    if config.command != command {
        return Err(vec![format!(
            "config declares command `{}` but `{}` was invoked",
            config.command.name(),
            command.name()
        )]);
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(threads) = common.threads {
        config.threads = threads;
    }
    if common.quick && !config.quick {
        config.quick = true;
        config.apply_quick();
    }
    Ok(config)
}

fn main() {
    let cli = Cli::parse();
    let (common, command, design_flag) = match &cli.command {
        CliCommand::Test(c) => (c.clone(), RunCommand::Test, None),
        CliCommand::Critval(c) => (c.clone(), RunCommand::Critval, None),
        CliCommand::Power(c) => (c.clone(), RunCommand::Power, None),
        CliCommand::Rates(c) => (c.clone(), RunCommand::Rates, None),
        CliCommand::McReproduce { common, design } => {
            (common.clone(), RunCommand::McReproduce, *design)
        }
    };

    let mut config = match load_config(&common, command) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("configuration invalid ({} problem(s)):", errors.len());
            for e in &errors {
                eprintln!("  - {e}");
            }
            std::process::exit(2);
        }
    };
    if let Some(design) = design_flag {
        if !(1..=3).contains(&design) {
            eprintln!("configuration invalid: --design must be 1, 2 or 3");
            std::process::exit(2);
        }
        config.design = design;
    }

    if config.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
        {
            eprintln!("warning: could not pin thread count: {e}");
        }
    }

    match run::run(&config) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for artifact in &outcome.artifacts {
                println!("wrote {}", artifact.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(run::exit_code_for(&e));
        }
    }
}
