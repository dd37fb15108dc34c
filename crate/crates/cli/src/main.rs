//! `mfgid`: run, generate and batch potential-identification experiments.
//!
//! Exit codes: 0 converged, 2 reported non-convergence, 1 error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfgid_cli::{batch, expand, run_batch, run_experiment, write_summary, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "mfgid", version, about = "Ambient-potential identification for 1D mean-field games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the mode in the config file.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a twin measurement from the configured true potential.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every config matching a glob and write `summary.csv`.
    Batch {
        #[arg(long)]
        configs: String,
        /// Root directory for per-config outputs and the summary.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

fn single(config: &Path, mode: Option<Mode>, out: Option<&Path>) -> anyhow::Result<i32> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    let dir = cfg.resolve_output(out);
    let report = run_experiment(&cfg, &dir)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3e}"));
    println!(
        "{} [{}]: {} after {} iterations, {} HJB/FP solves, meas rel err {}, q rel err {}, {:.2}s -> {}",
        report.name,
        report.mode,
        report.status,
        report.outer_iters,
        report.hjb_fp_solves,
        fmt(report.meas_rel_err),
        fmt(report.q_rel_err),
        report.seconds,
        report.output_dir.display()
    );
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, mode, out } => single(&config, mode, out.as_deref()),
        Command::Generate { config, out } => single(&config, Some(Mode::GenerateMeasurement), out.as_deref()),
        Command::Batch { configs, out } => (|| {
            let paths = expand(&configs)?;
            let entries = run_batch(&paths, Some(&out));
            for e in &entries {
                if let Err(msg) = &e.result {
                    eprintln!("{}: {msg}", e.config.display());
                }
            }
            std::fs::create_dir_all(&out)?;
            let summary = out.join("summary.csv");
            write_summary(&summary, &entries)?;
            println!("{} configs, summary in {}", entries.len(), summary.display());
            Ok(batch::exit_code(&entries))
        })(),
    };
    match code {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
