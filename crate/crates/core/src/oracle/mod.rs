//! Brute-force reference answers on two-input reductions of the design space.
//!
//! A reduction maps a 2-vector onto the full design vector, so a dense grid
//! over two temperatures can be evaluated through any objective function and
//! used to check what the optimizers return.

mod pareto;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use pareto::{brute_pareto, compare_front, compare_front_in, hypervolume, FrontComparison};

use crate::design::Bounds;

/// Points per axis of the reference sweep.
pub const GRID_POINTS: usize = 200;

/// Fixed initial temperature of the split-wall reduction.
pub const SPLIT_T_INIT: f64 = 1000.0;

/// How two swept temperatures populate a full design vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Reduction {
    /// `(T_init, T_wall)` with every wall domain at `T_wall`.
    Uniform,
    /// `(T_wall_a, T_wall_b)`: the first half of the domains at `a`, the
    /// rest at `b`, with a fixed `T_init`.
    Split { t_init: f64 },
}

impl Reduction {
    pub fn split() -> Self {
        Self::Split { t_init: SPLIT_T_INIT }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Split { .. } => "split",
        }
    }

    pub fn axis_names(&self) -> [&'static str; 2] {
        match self {
            Self::Uniform => ["t_init", "t_wall"],
            Self::Split { .. } => ["t_wall_a", "t_wall_b"],
        }
    }

    /// Ranges of the two swept inputs taken from full-design bounds.
    pub fn bounds(&self, full: &Bounds) -> Bounds {
        let wall = (full.lo[1], full.hi[1]);
        match self {
            Self::Uniform => Bounds::new(vec![full.lo[0], wall.0], vec![full.hi[0], wall.1]),
            Self::Split { .. } => Bounds::new(vec![wall.0, wall.0], vec![wall.1, wall.1]),
        }
    }

    /// Full design vector for `n_domains` wall domains.
    pub fn expand(&self, x: [f64; 2], n_domains: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + n_domains);
        match *self {
            Self::Uniform => {
                v.push(x[0]);
                v.extend(std::iter::repeat_n(x[1], n_domains));
            }
            Self::Split { t_init } => {
                let first = n_domains.div_ceil(2);
                v.push(t_init);
                v.extend(std::iter::repeat_n(x[0], first));
                v.extend(std::iter::repeat_n(x[1], n_domains - first));
            }
        }
        v
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Objective values on a tensor grid; point `(i, j)` has index `i * x2.len() + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub reduction: Reduction,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub objectives: Vec<Vec<f64>>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let n2 = self.x2.len();
        [self.x1[idx / n2], self.x2[idx % n2]]
    }

    /// Values of objective `k` in grid order.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.objectives.iter().map(|o| o[k]).collect()
    }

    /// Objective vectors restricted to the listed columns.
    pub fn project(&self, cols: &[usize]) -> Vec<Vec<f64>> {
        self.objectives
            .iter()
            .map(|o| cols.iter().map(|&k| o[k]).collect())
            .collect()
    }

    /// `x1,x2,<objectives>` with one row per grid point.
    pub fn to_csv(&self, objective_names: &[&str]) -> String {
        let [a, b] = self.reduction.axis_names();
        let mut out = format!("{a},{b},{}\n", objective_names.join(","));
        for (idx, o) in self.objectives.iter().enumerate() {
            let [p, q] = self.point(idx);
            let vals: Vec<String> = o.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{p},{q},{}", vals.join(","));
        }
        out
    }
}

/// Evaluates `f` on an `n x n` grid over the reduction's ranges of `full`.
pub fn sweep<F, E>(f: F, reduction: Reduction, full: &Bounds, n: usize) -> Result<SweepGrid, E>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, E> + Sync,
    E: Send,
{
    let rb = reduction.bounds(full);
    let x1 = linspace(rb.lo[0], rb.hi[0], n);
    let x2 = linspace(rb.lo[1], rb.hi[1], n);
    let domains = full.dim() - 1;
    let objectives = (0..n * n)
        .into_par_iter()
        .map(|idx| f(&reduction.expand([x1[idx / n], x2[idx % n]], domains)))
        .collect::<Result<Vec<_>, E>>()?;
    Ok(SweepGrid {
        reduction,
        x1,
        x2,
        objectives,
    })
}

/// Grid index, inputs and value of the smallest objective `k`; the lowest
/// index wins ties.
pub fn sweep_min(grid: &SweepGrid, k: usize) -> (usize, [f64; 2], f64) {
    let mut best = 0;
    for (i, o) in grid.objectives.iter().enumerate() {
        if o[k] < grid.objectives[best][k] {
            best = i;
        }
    }
    (best, grid.point(best), grid.objectives[best][k])
}
