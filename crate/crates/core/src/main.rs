//! Command-line harness: run experiments, summarize/plot records, and run
//! the verification-oracle battery.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ipsur::error::Error;
use ipsur::harness::{
    plots::emit_plots,
    summary::{load_summary_csv, save_summary_csv, summarize},
    ExperimentConfig, ExperimentRecord,
};

#[derive(Parser)]
#[command(
    name = "ipsur",
    about = "Sequential design of GP surrogates for Bayesian inverse problems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) a replicated experiment from a JSON config.
    Run {
        config: PathBuf,
    },
    /// Reduce a record CSV to per-iteration means and 95% CIs.
    Summarize {
        record: PathBuf,
        /// Output CSV path (defaults to summary.csv next to the record).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Render metric charts (SVG) from a summary CSV.
    Plot {
        summary: PathBuf,
        /// Output directory for the charts.
        #[arg(short, long)]
        outdir: PathBuf,
    },
    /// Run a verification-oracle suite: gp | design | inverse | mcmc |
    /// metrics | testbeds | all.
    Oracle {
        suite: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let record = ipsur::harness::run_experiment(&cfg)?;
            let summary = summarize(&record);
            let summary_path = cfg.outdir.join("summary.csv");
            save_summary_csv(&summary, &summary_path)?;
            println!(
                "record: {}\nsummary: {}",
                cfg.outdir.join("record.csv").display(),
                summary_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize { record, output } => {
            let rec = ExperimentRecord::load_csv(&record)?;
            if rec.rows.is_empty() {
                return Err(Error::Config("record contains no rows".into()));
            }
            let out = output.unwrap_or_else(|| {
                record
                    .parent()
                    .unwrap_or_else(|| std::path::Path::new("."))
                    .join("summary.csv")
            });
            save_summary_csv(&summarize(&rec), &out)?;
            println!("summary: {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { summary, outdir } => {
            let rows = load_summary_csv(&summary)?;
            let written = emit_plots(&rows, &outdir)?;
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { suite } => {
            let checks = ipsur::oracles::run_suite(&suite)?;
            let mut failed = 0;
            for c in &checks {
                println!("{} {} — {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
                if !c.pass {
                    failed += 1;
                }
            }
            println!("{} checks, {} failed", checks.len(), failed);
            if failed > 0 {
                Ok(ExitCode::from(3))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}
