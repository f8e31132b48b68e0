use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ptwork::cli::{self, RunConfig};

#[derive(Parser)]
#[command(name = "ptwork", version, about = "Work statistics of a driven spin-boson model from process tensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Override a config key, e.g. `--set numerics.dtau=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Threads for the counting-field sweep.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the process tensor and store it in the cache.
    BuildPt(Common),
    /// Sample the characteristic function.
    Wcf(Common),
    /// Reconstruct the work distribution.
    Wpd {
        #[command(flatten)]
        common: Common,
        /// Use samples from an earlier `wcf` run instead of recomputing.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Mean and variance of the work.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Reduced system state along the drive.
    Dynamics(Common),
    /// Fidelity, coherence and work moments for the listed protocols.
    Sweep(Common),
}

fn load(c: &Common) -> ptwork::Result<RunConfig> {
    let mut overrides = c.overrides.clone();
    if let Some(d) = &c.cache_dir {
        overrides.push(format!("run.cache_dir=\"{}\"", d.display()));
    }
    if let Some(d) = &c.out_dir {
        overrides.push(format!("run.out_dir=\"{}\"", d.display()));
    }
    if let Some(w) = c.workers {
        overrides.push(format!("run.workers={w}"));
    }
    let cfg = RunConfig::load(&c.config, &overrides)?;
    if let Some(w) = cfg.run.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| ptwork::Error::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn run(command: Command) -> ptwork::Result<cli::Outcome> {
    match command {
        Command::BuildPt(c) => cli::cmd_build_pt(&load(&c)?),
        Command::Wcf(c) => cli::cmd_wcf(&load(&c)?),
        Command::Wpd { common, from } => cli::cmd_wpd(&load(&common)?, from.as_deref()),
        Command::Moments { common, from } => cli::cmd_moments(&load(&common)?, from.as_deref()),
        Command::Dynamics(c) => cli::cmd_dynamics(&load(&c)?),
        Command::Sweep(c) => cli::cmd_sweep(&load(&c)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(out) => {
            for p in &out.data {
                println!("{}", p.display());
            }
            println!("{}", out.manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
