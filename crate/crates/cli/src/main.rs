use clap::{Parser, Subcommand};
use coulomb_cli::config::{Command, RunConfig};
use coulomb_cli::{run, RunOptions};
use std::path::PathBuf;

/// Coulomb gas sampling, kernels, concentration operators and statistics.
#[derive(Parser)]
#[command(name = "coulomb", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory (default: $COULOMB_OUT_DIR or ./runs, plus command and config hash).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Added to every seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    #[command(subcommand)]
    action: Option<Action>,
}

#[derive(Subcommand)]
enum Action {
    /// Run the command named in --config (the default).
    Run,
    /// Aggregate run directories into one report.
    Report { runs: Vec<PathBuf> },
    /// Print a starter configuration.
    Init {
        #[arg(value_enum)]
        command: Command,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = RunOptions {
        out: cli.out,
        threads: cli.threads,
        seed_offset: cli.seed_offset,
    };
    let cfg = match cli.action.unwrap_or(Action::Run) {
        Action::Init { command } => {
            print!("{}", RunConfig::template(command).emit());
            return;
        }
        Action::Report { runs } => {
            let mut cfg = RunConfig::template(Command::Report);
            cfg.inputs = Some(runs);
            Ok(cfg)
        }
        Action::Run => match &cli.config {
            Some(p) => RunConfig::load(p),
            None => {
                eprintln!("error: --config <path> is required");
                std::process::exit(2);
            }
        },
    };
    let result = cfg.and_then(|c| run(&c, &opts));
    match result {
        Ok(dir) => println!("{}", dir.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
