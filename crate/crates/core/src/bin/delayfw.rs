use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use delayfw::config::parse_config;
use delayfw::experiment::{default_output_dir, run_experiment, run_sweep, SweepAxis};
use delayfw::{selftest, Error};

#[derive(Parser)]
#[command(name = "delayfw", version, about = "Delayed-feedback online Frank-Wolfe simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config and DELAYFW_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one or two dotted config keys.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, required = true)]
        vary: Vec<String>,
        /// Comma-separated values, one list per --vary.
        #[arg(long, required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e),
            _ => Failure::Runtime(e),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(default_output_dir);
            let report = run_experiment(&cfg, &out)?;
            for o in &report.outcomes {
                println!("seed {}: total loss {:.6}, regret {:.6}", o.seed, o.total_loss, o.final_regret);
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep { config, vary, values, out } => {
            if vary.len() != values.len() {
                return Err(Failure::Config(Error::Config("each --vary needs one --values".into())));
            }
            let cfg = load(&config)?;
            let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(default_output_dir);
            let base = serde_json::to_value(&cfg).map_err(|e| Error::Config(e.to_string()))?;
            let axes = vary.iter().zip(&values).map(|(k, v)| SweepAxis::parse(k, v)).collect::<Result<Vec<_>, _>>()?;
            let report = run_sweep(&base, &axes, &out)?;
            for cell in &report.cells {
                println!("{}: mean total loss {:.6}", cell.label, cell.mean_total_loss());
            }
            println!("wrote {}", out.display());
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("ok: {:?} mode, T = {}, {} seed(s)", cfg.mode, cfg.horizon, cfg.seeds.len());
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{} checks, {failed} failed", checks.len());
            if failed > 0 {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load(path: &PathBuf) -> Result<delayfw::ExperimentConfig, Failure> {
    parse_config(path).map_err(|e| match e {
        Error::Io { .. } => Failure::Config(e),
        other => other.into(),
    })
}
