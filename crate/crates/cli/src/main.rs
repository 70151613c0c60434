//! `vlcpos run`: sweeps the receiver over the floor grid and writes error
//! maps for ACO-OFDM and OOK positioning.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use vlcpos_core::cache::IrCache;
use vlcpos_core::harness::{emit_results, Experiment, ExperimentConfig, Modulation};

#[derive(Parser)]
#[command(name = "vlcpos", version, about = "Indoor VLC positioning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the grid experiment.
    Run(RunArgs),
    /// Print the default configuration as JSON.
    DefaultConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModArg {
    Ofdm,
    Ook,
    Both,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    modulation: Option<ModArg>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
    bounces: Option<u8>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write the OFDM training and data frames.
    #[arg(long)]
    dump_frames: bool,
    /// Impulse-response cache file, created if missing.
    #[arg(long)]
    cache: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = args.modulation {
        cfg.modulations = match m {
            ModArg::Ofdm => vec![Modulation::Ofdm],
            ModArg::Ook => vec![Modulation::Ook],
            ModArg::Both => vec![Modulation::Ofdm, Modulation::Ook],
        };
    }
    if let Some(b) = args.bounces {
        cfg.max_bounces = b as usize;
    }
    if let Some(s) = args.grid_step {
        cfg.grid_step = s;
    }
    if let Some(s) = args.seed {
        cfg.rng_seed = s;
    }
    cfg.validate()?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        bail!("--workers must be >= 1");
    }

    let started = Instant::now();
    let mut exp = Experiment::new(&cfg)?;
    if let Some(path) = &args.cache {
        let cache = IrCache::open(path, exp.scene_hash())?;
        eprintln!("cache: {} entries from {}", cache.len(), path.display());
        exp = exp.with_cache(cache);
    }
    let result = exp.run_grid(workers)?;
    std::fs::create_dir_all(&args.out)?;
    let written = emit_results(&result.maps, Some(&result.metadata), &args.out)?;
    std::fs::write(args.out.join("config.json"), cfg.to_json())?;
    if args.dump_frames {
        exp.dump_frames(&args.out.join("frames"))?;
    }
    if let (Some(path), Some(cache)) = (&args.cache, exp.cache()) {
        cache.save(path)?;
    }

    for map in &result.maps {
        let s = &map.summary;
        println!(
            "{:<4} rms {:.4} m  inside-LEDs {:.4} m  corner {:.4} m  edge {:.4} m  centre {:.2e} m",
            map.modulation, s.rms_whole, s.rms_rect, s.corner_err, s.edge_err, s.center_err
        );
    }
    eprintln!(
        "{} points x {} modulations in {:.1?}; wrote {}",
        result.metadata.grid_shape.0 * result.metadata.grid_shape.1,
        result.maps.len(),
        started.elapsed(),
        written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::DefaultConfig => {
            println!("{}", ExperimentConfig::default().to_json());
            Ok(())
        }
    }
}
