//! Per-objective neural-network surrogates of the solver.
//!
//! Inputs are scaled to `[0, 1]` from the design bounds and each objective is
//! scaled to `[0, 1]` from its training split, so networks see unit-range
//! data regardless of the objective's magnitude.

mod dataset;
mod lhs;
mod mlp;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{input_header, Dataset, Samples, SplitSizes};
pub use lhs::{column_occupancy, lhs_sample};
pub use mlp::{Dense, Mlp};
pub use train::{mse, train, Adam, TrainConfig, TrainReport};

use crate::design::{Bounds, DesignPoint};
use crate::microstructure::ObjectiveTriple;
use crate::rng;

pub const MODEL_FORMAT: &str = "castopt-surrogate";
pub const MODEL_VERSION: u32 = 1;

pub const OBJECTIVE_NAMES: [&str; 3] = ["solidification_time", "max_grain", "min_yield"];

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("expected {expected} inputs, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("empty or mismatched training data")]
    EmptyData,
    #[error("design outside bounds: {0:?}")]
    OutOfBounds(Vec<f64>),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A trained network with the scalings that map physical units to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub objective: String,
    pub config: TrainConfig,
    pub bounds: Bounds,
    pub out_min: f64,
    pub out_max: f64,
    pub net: Mlp<f64>,
}

impl SurrogateModel {
    fn out_range(&self) -> f64 {
        let r = self.out_max - self.out_min;
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn normalize_output(&self, y: f64) -> f64 {
        (y - self.out_min) / self.out_range()
    }

    pub fn denormalize_output(&self, u: f64) -> f64 {
        self.out_min + u * self.out_range()
    }

    /// Prediction in physical units; `x` is not bounds-checked.
    pub fn predict(&self, x: &[f64]) -> Result<f64, SurrogateError> {
        if x.len() != self.bounds.dim() {
            return Err(SurrogateError::Dimension {
                expected: self.bounds.dim(),
                got: x.len(),
            });
        }
        Ok(self.denormalize_output(self.net.forward(&self.bounds.normalize(x))?))
    }

    /// Derivative of the prediction with respect to physical inputs.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        let g = self.net.gradient(&self.bounds.normalize(x))?;
        Ok(g.iter()
            .enumerate()
            .map(|(d, gi)| gi * self.out_range() / (self.bounds.hi[d] - self.bounds.lo[d]))
            .collect())
    }

    /// Mean of `|pred - true| / |true|` over `samples`, in percent.
    pub fn percent_error(&self, samples: &Samples, k: usize) -> Result<f64, SurrogateError> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for (x, y) in samples.inputs.iter().zip(&samples.outputs) {
            acc += ((self.predict(x)? - y[k]) / y[k]).abs();
        }
        Ok(acc / samples.len() as f64 * 100.0)
    }
}

/// Trains the network for objective `k` of `data`.
pub fn fit_objective(
    data: &Dataset,
    k: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(SurrogateModel, TrainReport), SurrogateError> {
    data.validate()?;
    let y_train = data.train.column(k);
    let out_min = y_train.iter().copied().fold(f64::INFINITY, f64::min);
    let out_max = y_train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut model = SurrogateModel {
        objective: OBJECTIVE_NAMES
            .get(k)
            .map_or_else(|| format!("objective_{k}"), |s| s.to_string()),
        config: cfg.clone(),
        bounds: data.bounds.clone(),
        out_min,
        out_max,
        net: Mlp::glorot(&cfg.layer_sizes(data.bounds.dim()), &mut rng::derive(seed, 0)),
    };
    let xs = |s: &Samples| s.inputs.iter().map(|x| data.bounds.normalize(x)).collect::<Vec<_>>();
    let ys = |s: &Samples| {
        s.column(k)
            .into_iter()
            .map(|y| model.normalize_output(y))
            .collect::<Vec<_>>()
    };
    let (x_tr, y_tr) = (xs(&data.train), ys(&data.train));
    let (x_va, y_va) = (xs(&data.validation), ys(&data.validation));
    let report = train(&mut model.net, &x_tr, &y_tr, &x_va, &y_va, cfg, seed)?;
    Ok((model, report))
}

/// One network per objective, in `f1, f2, f3` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSet {
    pub format: String,
    pub version: u32,
    pub models: Vec<SurrogateModel>,
}

impl SurrogateSet {
    pub fn new(models: Vec<SurrogateModel>) -> Self {
        assert_eq!(models.len(), 3, "one model per objective");
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            models,
        }
    }

    pub fn bounds(&self) -> &Bounds {
        &self.models[0].bounds
    }

    /// Objective values at a physical design vector, without bounds check.
    pub fn predict_vec(&self, x: &[f64]) -> Result<[f64; 3], SurrogateError> {
        Ok([
            self.models[0].predict(x)?,
            self.models[1].predict(x)?,
            self.models[2].predict(x)?,
        ])
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<[f64; 3]>, SurrogateError> {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.predict_vec(x)).collect()
    }

    pub fn to_json(&self) -> Result<String, SurrogateError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SurrogateError> {
        let set: Self = serde_json::from_str(text)?;
        if set.format != MODEL_FORMAT || set.version != MODEL_VERSION {
            return Err(SurrogateError::Format(format!(
                "unsupported model file {} v{}",
                set.format, set.version
            )));
        }
        if set.models.len() != 3 {
            return Err(SurrogateError::Format("expected three models".into()));
        }
        for m in &set.models {
            let sizes_ok = m.net.is_consistent()
                && m.net.n_inputs() == m.bounds.dim()
                && m.net.sizes() == m.config.layer_sizes(m.bounds.dim());
            if !sizes_ok || !m.net.is_finite() {
                return Err(SurrogateError::Format(format!(
                    "model {} does not match its config",
                    m.objective
                )));
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), SurrogateError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurrogateError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Surrogate objective values of a design inside the training bounds.
pub fn predict_objectives(nets: &SurrogateSet, design: &DesignPoint) -> Result<ObjectiveTriple<f64>, SurrogateError> {
    let x = design.to_vec();
    if x.len() != nets.bounds().dim() {
        return Err(SurrogateError::Dimension {
            expected: nets.bounds().dim(),
            got: x.len(),
        });
    }
    if !nets.bounds().contains(&x) {
        return Err(SurrogateError::OutOfBounds(x));
    }
    Ok(ObjectiveTriple::from_array(nets.predict_vec(&x)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_set() -> (Dataset, SurrogateSet) {
        let b = Bounds::casting(2);
        let sizes = SplitSizes {
            train: 40,
            validation: 10,
            test: 10,
        };
        let f = |x: &[f64]| Ok::<_, ()>([1.0 + x[0] / 1000.0, 20.0 + x[1] / 100.0, -130.0 - x[2] / 100.0]);
        let ds = Dataset::generate(&b, sizes, 3, f).unwrap();
        let cfg = TrainConfig {
            hidden_layers: 1,
            neurons: 4,
            epochs: 5,
            ..TrainConfig::default()
        };
        let models = (0..3)
            .map(|k| fit_objective(&ds, k, &cfg, k as u64).unwrap().0)
            .collect();
        (ds, SurrogateSet::new(models))
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (_, set) = toy_set();
        let back = SurrogateSet::from_json(&set.to_json().unwrap()).unwrap();
        assert_eq!(back, set);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        set.save(&p).unwrap();
        assert_eq!(SurrogateSet::load(&p).unwrap(), set);
    }

    #[test]
    fn json_rejects_tampering() {
        let (_, set) = toy_set();
        let mut bad = set.clone();
        bad.version = 99;
        assert!(SurrogateSet::from_json(&bad.to_json().unwrap()).is_err());
        let mut bad = set.clone();
        bad.models[1].net.layers[0].b.pop();
        assert!(SurrogateSet::from_json(&bad.to_json().unwrap()).is_err());
        let mut bad = set;
        bad.models[0].config.neurons = 5;
        assert!(SurrogateSet::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn predict_checks_bounds_and_batches_match() {
        let (ds, set) = toy_set();
        let d = DesignPoint::new(1200.0, vec![600.0, 600.0]);
        assert!(matches!(
            predict_objectives(&set, &d),
            Err(SurrogateError::OutOfBounds(_))
        ));
        let d = DesignPoint::new(1000.0, vec![600.0]);
        assert!(matches!(
            predict_objectives(&set, &d),
            Err(SurrogateError::Dimension { .. })
        ));
        let batch = set.predict_batch(&ds.test.inputs).unwrap();
        for (x, b) in ds.test.inputs.iter().zip(&batch) {
            let one = predict_objectives(&set, &DesignPoint::from_slice(x)).unwrap();
            assert_eq!(one.to_array(), *b);
        }
    }

    #[test]
    fn output_scaling_round_trip() {
        let (_, set) = toy_set();
        let m = &set.models[2];
        for y in [-140.0, -131.5, -120.0] {
            assert!((m.denormalize_output(m.normalize_output(y)) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn physical_gradient_scaling() {
        let (_, set) = toy_set();
        let m = &set.models[0];
        let x = [1000.0, 550.0, 650.0];
        let g = m.gradient(&x).unwrap();
        for d in 0..3 {
            let h = 1e-3;
            let mut p = x;
            p[d] += h;
            let mut q = x;
            q[d] -= h;
            let fd = (m.predict(&p).unwrap() - m.predict(&q).unwrap()) / (2.0 * h);
            assert!((fd - g[d]).abs() <= 1e-6 * g[d].abs().max(1e-9), "{d}: {fd} {}", g[d]);
        }
    }
}
