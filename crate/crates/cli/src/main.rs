use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use compromise_cli::{emit_plot_data, load_report, resume_aggregation, run_experiment, ExperimentConfig, RhoRule};

#[derive(Parser)]
#[command(name = "compromise", about = "Replicated compromise-decision experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replications and aggregation for every cell, then write the report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Parent of the `<config hash>` result directory (default `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute aggregation and statistics from a stored run.
    Resume {
        /// The `<out>/<config hash>` directory.
        #[arg(long)]
        record: PathBuf,
        /// Prox weight override: `fixed:V`, `n:K` or `n2:K`.
        #[arg(long)]
        rho: Option<RhoRule>,
        /// Where to write the recomputed report (default `<record>/resumed`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rewrite the report and plot data from the stored cell outcomes.
    Report {
        #[arg(long)]
        record: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` when some cell failed.
fn run(cli: Cli) -> Result<bool> {
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if out.is_some() {
                cfg.out = out;
            }
            let base = config.parent().map(PathBuf::from).unwrap_or_default();
            let outcome = run_experiment(&cfg, &base)?;
            outcome.report.write(&outcome.dir)?;
            emit_plot_data(&outcome.report, &outcome.dir)?;
            println!("{}", outcome.dir.display());
            outcome
        }
        Command::Resume { record, rho, out } => {
            let outcome = resume_aggregation(&record, rho)?;
            let dir = out.unwrap_or_else(|| record.join("resumed"));
            outcome.report.write(&dir)?;
            emit_plot_data(&outcome.report, &dir)?;
            println!("{}", dir.display());
            outcome
        }
        Command::Report { record } => {
            let outcome = load_report(&record)?;
            outcome.report.write(&record)?;
            emit_plot_data(&outcome.report, &record)?;
            println!("{}", record.display());
            outcome
        }
    };
    for (n, m, rep, msg) in &outcome.failures {
        eprintln!("cell n={n} m={m} rep={rep} failed: {msg}");
    }
    Ok(outcome.failures.is_empty())
}
