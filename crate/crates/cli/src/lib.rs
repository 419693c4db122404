//! Command-line front end: configuration, run directories, plots and the
//! aggregate report.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod svg;

use commands::Ctx;
use config::{Command, RunConfig};
use error::Result;
use manifest::RunDir;
use std::path::PathBuf;

/// Options that come from the command line rather than the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed_offset: u64,
}

/// Executes `cfg` and returns the run directory. The manifest is written
/// even when the command fails, with `complete: false`.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<PathBuf> {
    cfg.validate()?;
    let root = opts
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| commands::default_out_dir(cfg));
    let threads = opts
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);
    let ctx = Ctx {
        threads,
        seed_offset: opts.seed_offset,
    };
    let mut dir = RunDir::create(root.clone(), cfg, opts.seed_offset, threads)?;
    log::info!("{} -> {}", cfg.command.name(), root.display());
    let outcome = match cfg.command {
        Command::Sample => commands::sample(cfg, &ctx, &mut dir),
        Command::Fekete => commands::fekete_cmd(cfg, &ctx, &mut dir),
        Command::Kernel => commands::kernel(cfg, &ctx, &mut dir),
        Command::Concentrate => commands::concentrate(cfg, &ctx, &mut dir),
        Command::Verify => commands::verify(cfg, &ctx, &mut dir),
        Command::Stats => commands::stats_cmd(cfg, &ctx, &mut dir),
        Command::Report => report::report(cfg, &ctx, &mut dir),
    };
    dir.finish(&outcome)?;
    outcome.map(|()| root)
}
