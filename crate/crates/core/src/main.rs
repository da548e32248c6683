use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use saew::harness::calibrate::{run_calibration, write_calibration};
use saew::harness::plots::emit_plots;
use saew::harness::summary::summarize;
use saew::harness::{run_experiment, write_runs, Algorithm, ExperimentConfig};
use saew::Result;

#[derive(Parser)]
#[command(name = "saew", version, about = "Sparse accelerated exponential weights experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment and write per-seed CSVs plus summaries.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add bound columns to accelerated runs.
        #[arg(long)]
        trace_bounds: bool,
    },
    /// Aggregate the seed_<n>.csv files of a directory into summary.csv.
    Summarize { dir: PathBuf },
    /// Write gnuplot scripts for a directory.
    Plots { dir: PathBuf },
    /// Run the parameter-free calibration procedure.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Clipping range.
        #[arg(long = "Y")]
        y: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Cap on total candidate steps.
        #[arg(long)]
        budget: Option<u64>,
    },
}

fn load(config: &Path, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(out) = out {
        cfg.out = out;
    }
    Ok(cfg)
}

fn calibrate(cfg: &ExperimentConfig) -> Result<()> {
    let runs = run_calibration(cfg)?;
    write_calibration(cfg, &cfg.out, &runs)?;
    println!("wrote {} calibration runs to {}", runs.len(), cfg.out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            trace_bounds,
        } => {
            let mut cfg = load(&config, out)?;
            cfg.trace_bounds |= trace_bounds;
            if cfg.algorithm == Algorithm::Calibrate {
                return calibrate(&cfg);
            }
            let records = run_experiment(&cfg)?;
            write_runs(&cfg, &cfg.out, &records)?;
            summarize(&cfg.out)?;
            println!("wrote {} runs to {}", records.len(), cfg.out.display());
        }
        Command::Summarize { dir } => {
            let s = summarize(&dir)?;
            println!("summarized {} runs in {}", s.seeds.len(), dir.display());
        }
        Command::Plots { dir } => {
            for p in emit_plots(&dir)? {
                println!("{}", p.display());
            }
        }
        Command::Calibrate {
            config,
            out,
            y,
            delta,
            budget,
        } => {
            let mut text = std::fs::read_to_string(&config)?;
            // Flag overrides go through the config parser so they are validated alike.
            for (k, v) in [
                ("Y", y.map(|v| v.to_string())),
                ("delta", delta.map(|v| v.to_string())),
                ("budget", budget.map(|v| v.to_string())),
            ] {
                if let Some(v) = v {
                    text = text
                        .lines()
                        .filter(|l| l.split('=').next().map(str::trim) != Some(k))
                        .collect::<Vec<_>>()
                        .join("\n");
                    text.push_str(&format!("\n{k} = {v}\n"));
                }
            }
            let mut cfg = ExperimentConfig::from_ini_str(&text)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            calibrate(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
