use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::design::Bounds;
use crate::evolve::GaConfig;
use crate::geometry::L_BRACKET_SPACING;
use crate::material::MaterialProperties;
use crate::microstructure::MicroConstants;
use crate::sensitivity::{DEFAULT_STEP, HISTOGRAM_BINS};
use crate::solver::SolverConfig;
use crate::surrogate::{SplitSizes, TrainConfig};

/// Named starting points for a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Small sample counts and optimizer sizes for a laptop.
    Desk,
    /// The full sample counts and optimizer sizes.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => Err(PipelineError::Config(format!(
                "unknown preset `{other}` (expected desk or paper)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySettings {
    /// Voxel file; the bundled L-bracket when absent.
    pub path: Option<PathBuf>,
    /// Cell edge of the bundled L-bracket, m.
    pub spacing: f64,
    pub domains: usize,
}

impl Default for GeometrySettings {
    fn default() -> Self {
        Self {
            path: None,
            spacing: L_BRACKET_SPACING,
            domains: crate::design::DEFAULT_DOMAINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSettings {
    pub t_init: [f64; 2],
    pub t_wall: [f64; 2],
}

impl Default for BoundSettings {
    fn default() -> Self {
        Self {
            t_init: [900.0, 1100.0],
            t_wall: [500.0, 700.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub solidification_time: TrainConfig,
    pub max_grain: TrainConfig,
    pub min_yield: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            solidification_time: TrainConfig::solidification_time(),
            max_grain: TrainConfig::max_grain(),
            min_yield: TrainConfig::min_yield(),
        }
    }
}

impl TrainSettings {
    pub fn for_objective(&self, k: usize) -> &TrainConfig {
        [&self.solidification_time, &self.max_grain, &self.min_yield][k]
    }
}

/// Population, generations and operator probabilities of one optimizer run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveSettings {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        Self::sized(25, 50)
    }
}

impl EvolveSettings {
    pub fn sized(population: usize, generations: usize) -> Self {
        Self {
            population,
            generations,
            crossover_prob: 0.8,
            mutation_prob: 0.1,
        }
    }

    pub fn ga_config(&self, seed: u64) -> GaConfig {
        GaConfig {
            crossover_prob: self.crossover_prob,
            mutation_prob: self.mutation_prob,
            ..GaConfig::new(self.population, self.generations).with_seed(seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySettings {
    /// Finite-difference step in normalised input units.
    pub step: f64,
    pub bins: usize,
}

impl Default for SensitivitySettings {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            bins: HISTOGRAM_BINS,
        }
    }
}

/// Everything a run depends on. Output location and thread count are not
/// part of it, so equal configs give equal outputs anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: GeometrySettings,
    pub material: MaterialProperties<f64>,
    pub solver: SolverConfig<f64>,
    pub micro: MicroConstants<f64>,
    pub bounds: BoundSettings,
    pub samples: SplitSizes,
    /// Largest tolerated fraction of failed solver runs.
    pub max_failure_fraction: f64,
    pub train: TrainSettings,
    /// Points per axis of the two-input sweeps.
    pub sweep_points: usize,
    /// Single-objective GA on the two-input reductions.
    pub ga: EvolveSettings,
    /// NSGA-II on the two-input reductions, checked against the sweep.
    pub verify: EvolveSettings,
    /// NSGA-II on objective pairs over the full design space.
    pub bi: EvolveSettings,
    /// NSGA-II on all three objectives over the full design space.
    pub tri: EvolveSettings,
    pub sensitivity: SensitivitySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        let (samples, bi, tri) = match p {
            Preset::Paper => (
                SplitSizes::default(),
                EvolveSettings::sized(500, 5000),
                EvolveSettings::sized(2000, 250),
            ),
            Preset::Desk => (
                SplitSizes {
                    train: 100,
                    validation: 30,
                    test: 30,
                },
                EvolveSettings::sized(200, 200),
                EvolveSettings::sized(400, 100),
            ),
        };
        Self {
            seed: 0,
            geometry: GeometrySettings::default(),
            material: MaterialProperties::default(),
            solver: SolverConfig::default(),
            micro: MicroConstants::default(),
            bounds: BoundSettings::default(),
            samples,
            max_failure_fraction: 0.01,
            train: TrainSettings::default(),
            sweep_points: crate::oracle::GRID_POINTS,
            ga: EvolveSettings::sized(25, 50),
            verify: EvolveSettings::sized(1000, 50),
            bi,
            tri,
            sensitivity: SensitivitySettings::default(),
        }
    }

    /// Parses TOML; keys left out take the values of `base`.
    pub fn from_toml(text: &str, base: &RunConfig) -> Result<Self, PipelineError> {
        let overrides: toml::Table = text
            .parse()
            .map_err(|e| PipelineError::Config(format!("config: {e}")))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| PipelineError::Config(e.to_string()))?;
        merge(&mut merged, overrides);
        let cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: &RunConfig) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn design_bounds(&self) -> Bounds {
        Bounds::casting_with(
            self.geometry.domains,
            (self.bounds.t_init[0], self.bounds.t_init[1]),
            (self.bounds.t_wall[0], self.bounds.t_wall[1]),
        )
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if let Some(p) = &self.geometry.path {
            if !p.is_file() {
                return bad(format!("geometry file {} does not exist", p.display()));
            }
        }
        if !(self.geometry.spacing > 0.0) || self.geometry.domains == 0 {
            return bad("geometry spacing and domain count must be positive".into());
        }
        for (name, [lo, hi]) in [("t_init", self.bounds.t_init), ("t_wall", self.bounds.t_wall)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("bounds.{name} must be ordered, got [{lo}, {hi}]"));
            }
        }
        if self.samples.train == 0 || self.samples.validation == 0 || self.samples.test == 0 {
            return bad("sample counts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return bad("max_failure_fraction must lie in [0, 1]".into());
        }
        if self.sweep_points < 2 {
            return bad("sweep_points must be at least 2".into());
        }
        self.material
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.micro
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for k in 0..3 {
            self.train
                .for_objective(k)
                .validate()
                .map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        for (name, s) in [
            ("ga", &self.ga),
            ("verify", &self.verify),
            ("bi", &self.bi),
            ("tri", &self.tri),
        ] {
            s.ga_config(0)
                .validate()
                .map_err(|e| PipelineError::Config(format!("{name}: {e}")))?;
        }
        if !(self.sensitivity.step > 0.0 && self.sensitivity.step < 0.5) || self.sensitivity.bins == 0 {
            return bad("sensitivity step must lie in (0, 0.5) and bins be positive".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical serialisation plus the geometry file.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_toml().as_bytes());
        if let Some(p) = &self.geometry.path {
            if let Ok(bytes) = std::fs::read(p) {
                h.update(&bytes);
            }
        }
        hex(&h.finalize())
    }
}

/// Independent seed for one stage, derived from the run seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let desk = RunConfig::preset(Preset::Desk);
        assert_eq!(
            (desk.samples.train, desk.samples.validation, desk.samples.test),
            (100, 30, 30)
        );
        let paper = RunConfig::preset(Preset::Paper);
        assert_eq!(
            (paper.samples.train, paper.samples.validation, paper.samples.test),
            (500, 200, 200)
        );
        assert_eq!((paper.bi.population, paper.bi.generations), (500, 5000));
        assert_eq!((paper.tri.population, paper.tri.generations), (2000, 250));
        assert_eq!((paper.verify.population, paper.verify.generations), (1000, 50));
        assert_eq!(
            (paper.ga.population, paper.ga.generations, paper.ga.crossover_prob),
            (25, 50, 0.8)
        );
        assert!(desk.validate().is_ok() && paper.validate().is_ok());
        assert_eq!(desk.design_bounds(), Bounds::casting(10));
    }

    #[test]
    fn toml_overrides_merge_into_base() {
        let base = RunConfig::preset(Preset::Desk);
        let text = "seed = 9\n[samples]\ntrain = 12\n[train.max_grain]\nepochs = 7\n[material]\nlatent_heat = 3.9e5\n";
        let cfg = RunConfig::from_toml(text, &base).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.samples.train, 12);
        assert_eq!(cfg.samples.test, 30);
        assert_eq!(cfg.train.max_grain.epochs, 7);
        assert_eq!(cfg.train.max_grain.neurons, 75);
        assert_eq!(cfg.material.latent_heat, 3.9e5);
        assert_eq!(
            RunConfig::from_toml(&cfg.to_toml(), &RunConfig::default()).unwrap(),
            cfg
        );
    }

    #[test]
    fn bad_configs_rejected() {
        let base = RunConfig::preset(Preset::Desk);
        assert!(RunConfig::from_toml("bogus = 1", &base).is_err());
        assert!(RunConfig::from_toml("[samples]\ntrain = -1", &base).is_err());
        let mut c = base.clone();
        c.bounds.t_wall = [700.0, 500.0];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.geometry.path = Some("/nonexistent/geometry.txt".into());
        assert!(c.validate().is_err());
        let mut c = base;
        c.samples.test = 0;
        assert!(c.validate().is_err());
        assert!("huge".parse::<Preset>().is_err());
    }

    #[test]
    fn hashes_and_seeds() {
        let a = RunConfig::preset(Preset::Desk);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        assert_eq!(stage_seed(7, "train"), stage_seed(7, "train"));
        assert_ne!(stage_seed(7, "train"), stage_seed(7, "dataset"));
        assert_ne!(stage_seed(7, "train"), stage_seed(8, "train"));
    }
}
