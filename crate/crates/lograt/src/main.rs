//! `lograt`: rank element pairs along a geochemical transect by the curvature
//! of their smoothed log-ratios, and locate candidate mineralization zones.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lograt::commands;
use lograt::config::RunConfig;

#[derive(Parser)]
#[command(name = "lograt", version, about)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true, default_value = "lograt.toml")]
    config: PathBuf,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Restrict the run to one named material.
    #[arg(long, global = true)]
    material: Option<String>,

    /// Rank-table depth; overrides the configured top_k.
    #[arg(long, global = true)]
    top_k: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the per-element smooths and write summaries and diagnostics.
    Fit,
    /// Compute c-value matrices, ranked pair lists and frequency tables.
    Rank,
    /// Render scaled c-value heatmaps (per material and accumulated).
    Heatmap,
    /// Locate exceedance intervals of a log-ratio pair.
    Detect {
        /// Element pair, e.g. Co/Al; defaults to the top-ranked pair.
        #[arg(long)]
        pair: Option<String>,
    },
    /// Generate a synthetic dataset from the [synth] config section.
    Synth {
        /// Override the configured generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the full pipeline: fit, rank, heatmap, detect and score curves.
    Report,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(&cli.config)?;
    commands::apply_overrides(&mut cfg, cli.top_k);
    let material = cli.material.as_deref();
    match &cli.command {
        Command::Fit => commands::cmd_fit(&cfg, material, &cli.out),
        Command::Rank => commands::cmd_rank(&cfg, material, &cli.out),
        Command::Heatmap => commands::cmd_heatmap(&cfg, material, &cli.out),
        Command::Detect { pair } => commands::cmd_detect(&cfg, material, pair.as_deref(), &cli.out),
        Command::Synth { seed } => commands::cmd_synth(&cfg, *seed, &cli.out),
        Command::Report => commands::cmd_report(&cfg, material, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
