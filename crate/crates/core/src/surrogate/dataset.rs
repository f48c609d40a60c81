use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lhs::lhs_sample;
use super::SurrogateError;
use crate::design::Bounds;

/// Input rows and the three objective values of each row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Samples {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<[f64; 3]>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.outputs.iter().map(|o| o[k]).collect()
    }

    /// CSV with one column per input, then `f1,f2,f3`.
    pub fn to_csv(&self) -> String {
        let dim = self.inputs.first().map_or(0, Vec::len);
        let mut out = input_header(dim);
        out.push_str(",f1,f2,f3\n");
        for (x, y) in self.inputs.iter().zip(&self.outputs) {
            let cols: Vec<String> = x.iter().chain(y).map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cols.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, SurrogateError> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| SurrogateError::Format("missing header".into()))?;
        let width = header.split(',').count();
        if width < 4 {
            return Err(SurrogateError::Format("need inputs and three objectives".into()));
        }
        let mut s = Samples::default();
        for (n, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| SurrogateError::Format(format!("row {}: {e}", n + 1)))?;
            if vals.len() != width {
                return Err(SurrogateError::Format(format!(
                    "row {} has {} columns, expected {width}",
                    n + 1,
                    vals.len()
                )));
            }
            let split = width - 3;
            s.inputs.push(vals[..split].to_vec());
            s.outputs.push([vals[split], vals[split + 1], vals[split + 2]]);
        }
        Ok(s)
    }
}

/// `t_init,t_wall_0,...` for a design of dimension `dim`.
pub fn input_header(dim: usize) -> String {
    let mut cols = vec!["t_init".to_string()];
    cols.extend((0..dim.saturating_sub(1)).map(|d| format!("t_wall_{d}")));
    cols.join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 500,
            validation: 200,
            test: 200,
        }
    }
}

/// Training, validation and test samples drawn as three independent Latin
/// hypercubes over the same bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub bounds: Bounds,
    pub train: Samples,
    pub validation: Samples,
    pub test: Samples,
}

impl Dataset {
    /// Input designs of the three splits, before any evaluation.
    pub fn design(bounds: &Bounds, sizes: SplitSizes, seed: u64) -> [Vec<Vec<f64>>; 3] {
        let sub = |k: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k);
        [
            lhs_sample(sizes.train.max(1), bounds, sub(1)),
            lhs_sample(sizes.validation.max(1), bounds, sub(2)),
            lhs_sample(sizes.test.max(1), bounds, sub(3)),
        ]
    }

    /// Evaluates every design row in parallel. The first failing row (in
    /// split order) is reported with its global index.
    pub fn generate<E, F>(bounds: &Bounds, sizes: SplitSizes, seed: u64, eval: F) -> Result<Self, (usize, E)>
    where
        E: Send,
        F: Fn(&[f64]) -> Result<[f64; 3], E> + Sync,
    {
        let [tr, va, te] = Self::design(bounds, sizes, seed);
        let run = |inputs: Vec<Vec<f64>>, offset: usize| -> Result<Samples, (usize, E)> {
            let outputs: Vec<Result<[f64; 3], E>> = inputs.par_iter().map(|x| eval(x)).collect();
            let mut s = Samples {
                inputs,
                outputs: Vec::with_capacity(outputs.len()),
            };
            for (n, o) in outputs.into_iter().enumerate() {
                s.outputs.push(o.map_err(|e| (offset + n, e))?);
            }
            Ok(s)
        };
        let (n_tr, n_va) = (tr.len(), va.len());
        Ok(Self {
            bounds: bounds.clone(),
            train: run(tr, 0)?,
            validation: run(va, n_tr)?,
            test: run(te, n_tr + n_va)?,
        })
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        for s in [&self.train, &self.validation, &self.test] {
            if s.inputs.len() != s.outputs.len() {
                return Err(SurrogateError::Format("inputs and outputs differ in length".into()));
            }
            if let Some(x) = s.inputs.iter().find(|x| !self.bounds.contains(x)) {
                return Err(SurrogateError::OutOfBounds(x.clone()));
            }
        }
        if self.train.is_empty() {
            return Err(SurrogateError::EmptyData);
        }
        Ok(())
    }

    pub fn write_csv(&self, dir: &Path, header: &str) -> std::io::Result<()> {
        for (name, s) in self.splits() {
            std::fs::write(
                dir.join(format!("dataset_{name}.csv")),
                format!("{header}{}", s.to_csv()),
            )?;
        }
        Ok(())
    }

    pub fn read_csv(dir: &Path, bounds: Bounds) -> Result<Self, SurrogateError> {
        let read = |name: &str| -> Result<Samples, SurrogateError> {
            let text = std::fs::read_to_string(dir.join(format!("dataset_{name}.csv")))?;
            Samples::from_csv(&text)
        };
        let ds = Self {
            bounds,
            train: read("train")?,
            validation: read("validation")?,
            test: read("test")?,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn splits(&self) -> [(&'static str, &Samples); 3] {
        [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ]
    }
}
