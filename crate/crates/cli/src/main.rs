use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use logwell::config::{GammaSelection, RunConfig};
use logwell::pipeline;

/// Multi-bump solutions of the logarithmic Schrödinger equation in deepening wells.
#[derive(Debug, Parser)]
#[command(name = "logwell", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a configuration, then print its canonical form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full pipeline; exits nonzero unless every verdict passes.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: `out` from the config, else runs/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for independent selections.
        #[arg(long)]
        workers: Option<usize>,
        /// `all` or a 0/1 mask with one flag per well, e.g. `10`.
        #[arg(long)]
        gamma: Option<String>,
    },
    /// Summarize a run directory and write its plot-ready CSV.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("invalid configuration {}", path.display()))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            print!("{}", cfg.echo());
            Ok(true)
        }
        Command::Run { config, out, workers, gamma } => {
            let mut cfg = load(&config)?;
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(g) = gamma {
                cfg.gamma = GammaSelection::parse(&g, cfg.wells.len())?;
            }
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| Path::new("runs").join(&cfg.scenario));
            cfg.validate()?;
            let outcome = pipeline::run(&cfg, &dir).with_context(|| format!("run failed; partial artifacts in {}", dir.display()))?;
            for v in &outcome.verdicts {
                println!("{:<18} {:<4} margin {:e}  {}", v.name, if v.pass { "pass" } else { "FAIL" }, v.margin, v.detail);
            }
            println!("artifacts in {}", dir.display());
            Ok(outcome.passed())
        }
        Command::Report { out } => {
            if !out.is_dir() {
                bail!("run directory {} does not exist", out.display());
            }
            let report = pipeline::report(&out)?;
            print!("{}", report.table);
            println!("plot data in {}", out.join(pipeline::REPORT_FILE).display());
            Ok(true)
        }
    }
}
