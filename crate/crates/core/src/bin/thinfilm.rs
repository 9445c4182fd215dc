use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

use thinfilm::cli::{dispatch, output_dir, ExitStatus};
use thinfilm::config::{parse_config, Experiment, RunConfig};

/// Stochastic thin-film simulator and verifiers.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    /// Experiment to run; overrides `experiment` in the config file.
    command: Option<Experiment>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Only log errors.
    #[arg(long)]
    quiet: bool,
}

fn load(args: &Args) -> Result<RunConfig, String> {
    let mut cfg = match (&args.config, args.command) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        (None, Some(cmd)) => RunConfig::new(cmd),
        (None, None) => return Err("either a command or --config is required".into()),
    };
    if let Some(cmd) = args.command {
        cfg.experiment = cmd;
    }
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::error!("thread pool: {e}");
            return ExitCode::from(ExitStatus::ConfigError.code() as u8);
        }
    }
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(ExitStatus::ConfigError.code() as u8);
        }
    };
    let out = output_dir(&cfg, args.out.as_deref());
    let status = match dispatch(&cfg, &out) {
        Ok(o) => {
            let line = format!("{}: {:?} ({})", cfg.experiment, o.status, o.summary);
            if o.status == ExitStatus::Pass {
                log::info!("{line}");
            } else {
                log::error!("{line}");
            }
            log::info!("{} files in {}", o.manifest.files.len() + 1, out.display());
            o.status
        }
        Err(e) => {
            log::error!("{e}");
            e.status()
        }
    };
    ExitCode::from(status.code() as u8)
}
