//! `modalshift`: generate instances and run policy experiments, writing CSV.
//!
//! Exit codes: 0 success, 1 usage or runtime error, 2 infeasible budget or
//! lower level, 3 property violation.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::{ExperimentConfig, SolverChoice};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "modalshift",
    version,
    about = "Road-tax and scheduled-line subsidy experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write generated instances as JSON.
    Gen(Common),
    /// Base versus optimal policy per instance family.
    Compare(Common),
    /// Scatteredness or frequency sweep.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        sweep: Option<config::SweepKind>,
    },
    /// Budget/subsidy trade-off frontier.
    Pareto(Common),
    /// Check the policy propositions on finite lower levels.
    Verify(Common),
    /// Case study on a location pool with a rail network.
    Berlin {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        network: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    solver: Option<SolverChoice>,
    /// Authority budget in money units.
    #[arg(long)]
    budget: Option<f64>,
    /// Partial subsidy for `compare`; subsidy of the transfer check for `verify`.
    #[arg(long)]
    subsidy: Option<f64>,
    /// Bisection budget tolerance.
    #[arg(long)]
    eps: Option<f64>,
    /// ALNS iterations.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Infeasible(String),
    Violation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Runtime(_) => 1,
            CliError::Infeasible(_) => 2,
            CliError::Violation(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Violation(m) => write!(f, "property violation: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn resolve(c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.scenarios {
        cfg.scenarios = v;
    }
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    if let Some(v) = c.solver {
        cfg.solver = v;
    }
    if let Some(v) = c.budget {
        cfg.budget = v;
    }
    if let Some(v) = c.subsidy {
        cfg.subsidy = Some(v);
    }
    if let Some(v) = c.eps {
        cfg.bisection.epsilon = Some(v);
    }
    if let Some(v) = c.max_iter {
        cfg.alns.max_iterations = v;
    }
    if cfg.scenarios < 1 {
        return Err(CliError::Usage("--scenarios must be >= 1".into()));
    }
    if !(cfg.budget >= 0.0) {
        return Err(CliError::Usage("--budget must be >= 0".into()));
    }
    if let Some(s) = cfg.subsidy {
        if !(0.0..=1.0).contains(&s) {
            return Err(CliError::Usage("--subsidy must lie in [0, 1]".into()));
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(c) => commands::gen(&resolve(&c)?),
        Command::Compare(c) => commands::compare(&resolve(&c)?),
        Command::Sensitivity { common, sweep } => {
            let mut cfg = resolve(&common)?;
            if let Some(s) = sweep {
                if s != cfg.sensitivity.sweep {
                    cfg.sensitivity = config::SensitivityBlock {
                        sweep: s,
                        values: match s {
                            config::SweepKind::Frequency => (1..=10).map(f64::from).collect(),
                            config::SweepKind::Scatteredness => (0..=6).map(|i| f64::from(i) * 0.2).collect(),
                        },
                    };
                }
            }
            commands::sensitivity(&cfg)
        }
        Command::Pareto(c) => commands::pareto(&resolve(&c)?),
        Command::Verify(c) => {
            let mut cfg = resolve(&c)?;
            if let Some(s) = cfg.subsidy {
                cfg.verify.p5_subsidy = s;
            }
            commands::verify(&cfg)
        }
        Command::Berlin { common, pool, network } => {
            let mut cfg = resolve(&common)?;
            if pool.is_some() {
                cfg.berlin.pool = pool;
            }
            if network.is_some() {
                cfg.berlin.network = network;
            }
            commands::berlin(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
