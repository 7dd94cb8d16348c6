use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use dlc_cli::{run, Command, RunOptions, ScenarioConfig};

/// Kinetic duplication-loss-copy models: solvers, simulations and checks.
#[derive(Debug, Parser)]
#[command(name = "dlc", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// Scenario file (TOML). Built-in defaults are used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override a config value, e.g. `--set solver.dt=0.005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory (takes precedence over the config and DLC_OUTPUT_DIR).
    #[arg(short, long)]
    output_dir: Option<PathBuf>,

    /// Shorthand for `--set mc.agents=N`.
    #[arg(long)]
    agents: Option<usize>,

    /// Shorthand for `--set mc.seed=S`.
    #[arg(long)]
    seed: Option<u64>,

    /// Shorthand for `--set solver.t_end=T`.
    #[arg(long)]
    t_end: Option<f64>,

    /// Criteria for `verify` (default: all). Repeatable.
    #[arg(long = "criterion", value_name = "ID")]
    criteria: Vec<u32>,
}

fn main() -> ExitCode {
    match try_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> Result<bool> {
    let cli = Cli::parse();
    let mut overrides = cli.overrides;
    if let Some(n) = cli.agents {
        overrides.push(format!("mc.agents={n}"));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("mc.seed={s}"));
    }
    if let Some(t) = cli.t_end {
        overrides.push(format!("solver.t_end={t:?}"));
    }
    let config = match &cli.config {
        Some(path) => ScenarioConfig::load(path, &overrides)?,
        None => ScenarioConfig::parse("", &overrides)?,
    };
    let opts = RunOptions {
        config,
        output_dir: cli.output_dir,
        criteria: cli.criteria,
    };
    let report = run(cli.command, &opts)?;
    for line in &report.messages {
        println!("{line}");
    }
    Ok(report.success)
}
