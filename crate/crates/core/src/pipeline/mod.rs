//! Staged, resumable runs: geometry, dataset, training, optimization,
//! sensitivity ranking and plot data, all under one run directory.
//!
//! Each stage records the hash of its inputs (its slice of the config and
//! the hashes of the upstream outputs it reads) in `manifest.json` and is
//! skipped while that hash and its outputs are unchanged.

mod config;
mod manifest;
mod stages;
mod table;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{
    hex, stage_seed, BoundSettings, EvolveSettings, GeometrySettings, Preset, RunConfig, SensitivitySettings,
    TrainSettings,
};
pub use manifest::{file_hash, hash_parts, Manifest, StageEntry, MANIFEST_FILE};
pub use stages::{stable_optimum_report, OBJECTIVE_PAIRS};
pub use table::{read_table, Table};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage failed: {0}")]
    Stage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit status: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            _ => 2,
        }
    }
}

macro_rules! stage_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                Self::Stage(e.to_string())
            }
        }
    )*};
}

stage_error_from!(
    crate::geometry::GeometryError,
    crate::solver::SolverError,
    crate::surrogate::SurrogateError,
    crate::evolve::EvolveError,
    crate::sensitivity::SensitivityError
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Geometry,
    Dataset,
    Train,
    Optimize,
    Sensitivity,
    Plots,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Geometry,
        Stage::Dataset,
        Stage::Train,
        Stage::Optimize,
        Stage::Sensitivity,
        Stage::Plots,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Geometry => "geometry",
            Self::Dataset => "dataset",
            Self::Train => "train",
            Self::Optimize => "optimize",
            Self::Sensitivity => "sensitivity",
            Self::Plots => "plots",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Self::Geometry => &[],
            Self::Dataset => &[Stage::Geometry],
            Self::Train => &[Stage::Dataset],
            Self::Optimize => &[Stage::Train],
            Self::Sensitivity => &[Stage::Train, Stage::Optimize],
            Self::Plots => &[Stage::Optimize, Stage::Sensitivity],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which optimizations the optimize stage performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OptimizeMode {
    /// Single-objective GA against the two-input sweeps.
    Single,
    /// Objective pairs: NSGA-II against the sweep Pareto sets, then over the
    /// full design space.
    Bi,
    /// All three objectives over the full design space.
    Tri,
}

impl OptimizeMode {
    pub const ALL: [OptimizeMode; 3] = [OptimizeMode::Single, OptimizeMode::Bi, OptimizeMode::Tri];

    pub fn name(self) -> &'static str {
        match self {
            Self::Single => "single",
            Self::Bi => "bi",
            Self::Tri => "tri",
        }
    }
}

impl std::str::FromStr for OptimizeMode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown optimize mode `{s}` (expected single, bi or tri)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    Skipped,
}

/// A configured run directory.
#[derive(Debug)]
pub struct Pipeline {
    cfg: RunConfig,
    dir: PathBuf,
    config_hash: String,
    modes: Vec<OptimizeMode>,
    manifest: Manifest,
}

impl Pipeline {
    /// Validates `cfg`, creates `dir` and writes the resolved config there.
    pub fn new(cfg: RunConfig, dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let config_hash = cfg.hash();
        let mut manifest = Manifest::load(&dir)?;
        manifest.config_hash = config_hash.clone();
        std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
        Ok(Self {
            cfg,
            dir,
            config_hash,
            modes: OptimizeMode::ALL.to_vec(),
            manifest,
        })
    }

    pub fn with_modes(mut self, modes: &[OptimizeMode]) -> Self {
        let mut m = modes.to_vec();
        m.sort();
        m.dedup();
        self.modes = m;
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Runs every stage in order.
    pub fn run_all(&mut self) -> Result<Vec<(Stage, StageOutcome)>, PipelineError> {
        Stage::ALL.into_iter().map(|s| self.run(s).map(|o| (s, o))).collect()
    }

    /// Runs `stage` unless the manifest shows it is current.
    pub fn run(&mut self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        let inputs_hash = self.inputs_hash(stage)?;
        if self.manifest.is_current(&self.dir, stage.name(), &inputs_hash) {
            log::info!("{stage}: up to date");
            return Ok(StageOutcome::Skipped);
        }
        log::info!("{stage}: running");
        let start = Instant::now();
        self.manifest.stages.remove(stage.name());
        self.manifest.save(&self.dir)?;
        let outputs = match stage {
            Stage::Geometry => self.geometry_stage()?,
            Stage::Dataset => self.dataset_stage()?,
            Stage::Train => self.train_stage()?,
            Stage::Optimize => self.optimize_stage()?,
            Stage::Sensitivity => self.sensitivity_stage()?,
            Stage::Plots => self.plots_stage()?,
        };
        let mut hashes = std::collections::BTreeMap::new();
        for rel in outputs {
            let h = file_hash(&self.dir.join(&rel))?;
            hashes.insert(rel, h);
        }
        let wall_clock_s = start.elapsed().as_secs_f64();
        log::info!("{stage}: done in {wall_clock_s:.1} s");
        self.manifest.stages.insert(
            stage.name().to_string(),
            StageEntry {
                inputs_hash,
                outputs: hashes,
                complete: true,
                wall_clock_s,
            },
        );
        self.manifest.save(&self.dir)?;
        Ok(StageOutcome::Ran)
    }

    fn inputs_hash(&self, stage: Stage) -> Result<String, PipelineError> {
        let slice = self.config_slice(stage);
        let mut upstream = Vec::new();
        for &u in stage.upstream() {
            let outs = self
                .manifest
                .output_hashes(u.name())
                .ok_or_else(|| PipelineError::Stage(format!("{stage} needs the {u} stage to have run")))?;
            upstream.push(serde_json::to_string(outs).expect("hash map serialises"));
        }
        let mut parts: Vec<(&str, &[u8])> = vec![("stage", stage.name().as_bytes()), ("config", slice.as_bytes())];
        for (u, s) in stage.upstream().iter().zip(&upstream) {
            parts.push((u.name(), s.as_bytes()));
        }
        Ok(hash_parts(parts))
    }

    /// The parts of the config a stage reads, serialised.
    fn config_slice(&self, stage: Stage) -> String {
        let c = &self.cfg;
        let seed = stage_seed(c.seed, stage.name());
        let json = |v: serde_json::Value| v.to_string();
        match stage {
            Stage::Geometry => {
                let file = c.geometry.path.as_ref().and_then(|p| file_hash(p).ok());
                json(serde_json::json!({ "seed": seed, "geometry": c.geometry, "file": file }))
            }
            Stage::Dataset => json(serde_json::json!({
                "seed": seed,
                "material": c.material,
                "solver": c.solver,
                "micro": c.micro,
                "bounds": c.bounds,
                "samples": c.samples,
                "max_failure_fraction": c.max_failure_fraction,
            })),
            Stage::Train => json(serde_json::json!({ "seed": seed, "train": c.train })),
            Stage::Optimize => json(serde_json::json!({
                "seed": seed,
                "sweep_points": c.sweep_points,
                "ga": c.ga,
                "verify": c.verify,
                "bi": c.bi,
                "tri": c.tri,
                "modes": self.modes.iter().map(|m| m.name()).collect::<Vec<_>>(),
            })),
            Stage::Sensitivity => json(serde_json::json!({ "sensitivity": c.sensitivity })),
            Stage::Plots => json(serde_json::json!({ "sweep_points": c.sweep_points })),
        }
    }

    /// First line of every table this run writes.
    fn stamp(&self) -> String {
        format!("# seed={} config_hash={}\n", self.cfg.seed, self.config_hash)
    }

    /// Writes `content` to `rel` under the run directory and returns `rel`.
    fn write(&self, rel: &str, content: &str) -> Result<String, PipelineError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, content)?;
        Ok(rel.to_string())
    }

    fn write_stamped(&self, rel: &str, body: &str) -> Result<String, PipelineError> {
        self.write(rel, &(self.stamp() + body))
    }

    /// Recorded outputs of a completed stage.
    fn outputs_of(&self, stage: Stage) -> Vec<String> {
        self.manifest
            .output_hashes(stage.name())
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }
}

/// Sets the worker count of the global thread pool; call once, before any
/// parallel work.
pub fn set_jobs(jobs: usize) -> Result<(), PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| PipelineError::Config(format!("cannot size thread pool: {e}")))
}
