use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dude_mec::baselines::SchemeId;
use dude_mec::harness::{emit_outputs, run_experiment, ExperimentConfig};

/// Runs Monte-Carlo drops of the association and resource allocation schemes
/// and writes summary tables.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated scheme list, e.g. CUDA,SPA-SM-OPA.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<SchemeId>>,
    #[arg(long)]
    drops: Option<usize>,
    /// Comma-separated SBS counts to sweep.
    #[arg(long, value_delimiter = ',')]
    sweep_sbs: Option<Vec<usize>>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write SVG charts.
    #[arg(long)]
    plots: bool,
}

fn run(args: Args) -> dude_mec::Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.schemes {
        cfg.schemes = s;
    }
    if let Some(d) = args.drops {
        cfg.n_drops = d;
    }
    if let Some(s) = args.sweep_sbs {
        cfg.sweep_sbs = Some(s);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(out) = args.out {
        cfg.output_dir = Some(out);
    }
    let dir = cfg.output_dir.clone().ok_or_else(|| {
        dude_mec::Error::Config("no output directory: pass --out or set output_dir".into())
    })?;
    cfg.validate()?;

    let results = run_experiment(&cfg)?;
    for path in emit_outputs(&cfg, &results, &dir, args.plots)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
