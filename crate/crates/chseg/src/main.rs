//! Command-line front end: subcommand parsing, config layering, thread-pool
//! setup, and exit-code mapping (0 ok, 2 input/config error, 3 numerical
//! failure). `--section.key=value` arguments are split off before clap runs
//! and applied as config overrides with the highest precedence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chseg::config::{partition_overrides, PipelineConfig};
use chseg::pipeline;
use chseg::Result;

#[derive(Parser)]
#[command(
    name = "chseg",
    about = "Unsupervised 3D liver-lesion segmentation via phase separation",
    after_help = "Any --section.key=value argument overrides the matching \
                  config entry, e.g. --solver.steps=100 --histseg.eps_soft=0.02."
)]
struct Cli {
    /// JSON config file (defaults <- file <- --section.key=value overrides)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for artifacts
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Progress logging on standard error
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: preprocess, evolve, histogram split, lesion masks
    Segment {
        /// Input scan (.rvol or .nii)
        volume: Option<PathBuf>,
        /// Organ mask (.rvol or .nii)
        mask: Option<PathBuf>,
    },
    /// Evolve an existing phase-field volume and record the energy trace
    Solve {
        /// Input phase field (.rvol)
        volume: Option<PathBuf>,
    },
    /// Generate a synthetic phantom with ground truth from a JSON spec
    Phantom {
        /// Phantom spec (.json)
        spec: PathBuf,
    },
    /// Score a predicted mask against ground truth inside a region
    Metrics {
        /// Predicted mask (.rvol or .nii)
        pred: PathBuf,
        /// Ground-truth mask
        gt: PathBuf,
        /// Evaluation region (organ mask)
        region: PathBuf,
    },
    /// Print the intensity histogram of a volume inside a mask
    Histogram {
        /// Input volume (.rvol or .nii)
        volume: PathBuf,
        /// Mask (.rvol or .nii)
        mask: PathBuf,
    },
}

fn run(cli: Cli, overrides: &[String]) -> Result<()> {
    if let Some(n) = cli.threads {
        // ignore a second initialization (e.g. in tests): the pool is global
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), overrides)?;
    if let Some(out) = cli.out {
        cfg.io.out_dir = Some(out);
    }
    match cli.command {
        Command::Segment { volume, mask } => {
            if let Some(v) = volume {
                cfg.io.volume = Some(v);
            }
            if let Some(m) = mask {
                cfg.io.mask = Some(m);
            }
            pipeline::cmd_segment(&cfg, cli.verbose)
        }
        Command::Solve { volume } => {
            if let Some(v) = volume {
                cfg.io.volume = Some(v);
            }
            pipeline::cmd_solve(&cfg, cli.verbose)
        }
        Command::Phantom { spec } => pipeline::cmd_phantom(&cfg, &spec, cli.verbose),
        Command::Metrics { pred, gt, region } => pipeline::cmd_metrics(&cfg, &pred, &gt, &region),
        Command::Histogram { volume, mask } => pipeline::cmd_histogram(&cfg, &volume, &mask),
    }
}

fn main() -> ExitCode {
    let (rest, overrides) = partition_overrides(std::env::args());
    let cli = Cli::parse_from(rest);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
