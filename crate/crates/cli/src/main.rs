use std::path::PathBuf;
use std::process::ExitCode;

use castopt::pipeline::{set_jobs, OptimizeMode, Pipeline, PipelineError, Preset, RunConfig, Stage, StageOutcome};
use clap::{Args, Parser, Subcommand};

/// Surrogate-assisted optimization of casting boundary temperatures.
#[derive(Debug, Parser)]
#[command(name = "castopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file overriding the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base settings: `desk` (small, minutes) or `paper` (full scale).
    #[arg(long, global = true, default_value = "paper")]
    preset: String,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the voxel geometry and its wall-domain decomposition.
    Geometry,
    /// Sample designs and run the thermal and microstructure models.
    Dataset,
    /// Train the three surrogate networks.
    Train,
    /// Run the optimizers on the surrogates.
    Optimize {
        /// Restrict to one mode; repeatable. Default: all.
        #[arg(long)]
        mode: Vec<String>,
    },
    /// Rank exported fronts by Jacobian norm.
    Sensitivity,
    /// Write gnuplot-ready data files.
    Plots,
    /// Run every stage.
    All,
}

impl Command {
    fn target(&self) -> Stage {
        match self {
            Self::Geometry => Stage::Geometry,
            Self::Dataset => Stage::Dataset,
            Self::Train => Stage::Train,
            Self::Optimize { .. } => Stage::Optimize,
            Self::Sensitivity => Stage::Sensitivity,
            Self::Plots | Self::All => Stage::Plots,
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let c = &cli.common;
    let base = RunConfig::preset(c.preset.parse::<Preset>()?);
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path, &base)?,
        None => base,
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = c.jobs {
        if jobs == 0 {
            return Err(PipelineError::Config("--jobs must be positive".into()));
        }
        set_jobs(jobs)?;
    }
    let mut pipeline = Pipeline::new(cfg, &c.out)?;
    if let Command::Optimize { mode } = &cli.command {
        if !mode.is_empty() {
            let modes = mode
                .iter()
                .map(|m| m.parse())
                .collect::<Result<Vec<OptimizeMode>, _>>()?;
            pipeline = pipeline.with_modes(&modes);
        }
    }
    let target = cli.command.target();
    for stage in Stage::ALL.into_iter().filter(|&s| s <= target) {
        let outcome = pipeline.run(stage)?;
        if outcome == StageOutcome::Skipped {
            log::debug!("{stage} skipped");
        }
    }
    log::info!("outputs in {}", pipeline.dir().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
