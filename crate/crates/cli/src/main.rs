use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tsmia::config::ExperimentConfig;
use tsmia::pipeline::{cmd_run, cmd_synth, render_table};
use tsmia::report::cmd_report;

/// Membership-inference audits of time-series forecasters.
#[derive(Parser)]
#[command(name = "tsmia", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic population as CSV.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the audit for every seed and write the report bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Appended to the configured seeds; repeat for several.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for shadow training and signal computation.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Recompute metrics from a bundle and print the summary table.
    Report {
        bundle: PathBuf,
        /// Where to write the CSV export; defaults to `<bundle>/report.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { config, out } => {
            let cfg = load(&config)?;
            cmd_synth(&cfg, &out)?;
        }
        Command::Run {
            config,
            seeds,
            out,
            jobs,
        } => {
            let mut cfg = load(&config)?;
            for s in seeds {
                if !cfg.seeds.contains(&s) {
                    cfg.seeds.push(s);
                }
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .context("configuring the thread pool")?;
            }
            let summary = cmd_run(&cfg)?;
            print!("{}", render_table(&summary));
        }
        Command::Report { bundle, csv } => {
            let (table, export) = cmd_report(&bundle)?;
            let path = csv.unwrap_or_else(|| bundle.join("report.csv"));
            fs::write(&path, export).with_context(|| format!("writing {}", path.display()))?;
            print!("{table}");
        }
    }
    Ok(())
}
