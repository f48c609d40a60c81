//! Real-coded elitist GA and NSGA-II over box-bounded designs.
//!
//! Both loops draw their initial population by Latin hypercube sampling,
//! breed one child per tournament pair with uniform crossover and uniform
//! resampling mutation, and evaluate a generation in parallel.

mod ops;
mod sort;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ops::{crowded_cmp, mutate, select_by_crowding, select_by_fitness, tournament_select, uniform_crossover};
pub use sort::{crowding_distance, dominates, fast_nondominated_sort, fronts_from_ranks, rank_and_crowd};

use crate::design::Bounds;
use crate::rng;
use crate::surrogate::lhs_sample;

#[derive(Debug, Error, PartialEq)]
pub enum EvolveError {
    #[error("tournament needs at least 4 individuals, population is {0}")]
    PopulationTooSmall(usize),
    #[error("invalid GA config: {0}")]
    Config(String),
    #[error("objective returned a non-finite value for individual {index} in generation {generation}")]
    NonFinite { generation: usize, index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub seed: u64,
    pub elitism: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self::new(25, 50)
    }
}

impl GaConfig {
    /// Crossover 0.8, mutation 0.1, elitism on, seed 0.
    pub fn new(population: usize, generations: usize) -> Self {
        Self {
            population,
            generations,
            crossover_prob: 0.8,
            mutation_prob: 0.1,
            seed: 0,
            elitism: true,
        }
    }

    /// The higher crossover rate quoted alongside the GA description.
    pub fn high_crossover(population: usize, generations: usize) -> Self {
        Self {
            crossover_prob: 0.9,
            ..Self::new(population, generations)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        if self.population < 4 {
            return Err(EvolveError::PopulationTooSmall(self.population));
        }
        for (name, p) in [("crossover", self.crossover_prob), ("mutation", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvolveError::Config(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A design with its objective values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub fitness: Vec<f64>,
}

fn evaluate<F>(pop: &[Vec<f64>], f: &F, generation: usize, offset: usize) -> Result<Vec<Vec<f64>>, EvolveError>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let out: Vec<Vec<f64>> = pop.par_iter().map(|g| f(g)).collect();
    for (i, o) in out.iter().enumerate() {
        if o.is_empty() || o.iter().any(|v| !v.is_finite()) {
            return Err(EvolveError::NonFinite {
                generation,
                index: offset + i,
            });
        }
    }
    Ok(out)
}

fn breed(a: &[f64], b: &[f64], bounds: &Bounds, cfg: &GaConfig, r: &mut rng::Rng) -> Vec<f64> {
    let mut child = uniform_crossover(a, b, cfg.crossover_prob, r);
    mutate(&mut child, bounds, cfg.mutation_prob, r);
    child
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Individual,
    /// Best fitness of the initial population and of every generation.
    pub history: Vec<f64>,
    pub population: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
}

impl GaResult {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("generation,best_fitness\n");
        for (g, v) in self.history.iter().enumerate() {
            let _ = writeln!(out, "{g},{v}");
        }
        out
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

/// Elitist single-objective GA minimising `f` over `bounds`.
pub fn ga_minimize<F>(f: F, bounds: &Bounds, cfg: &GaConfig) -> Result<GaResult, EvolveError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let n = cfg.population;
    let wrapped = |x: &[f64]| vec![f(x)];
    let mut r = rng::derive(cfg.seed, 0);
    let mut pop = lhs_sample(n, bounds, cfg.seed);
    let mut fit: Vec<f64> = evaluate(&pop, &wrapped, 0, 0)?.into_iter().map(|v| v[0]).collect();
    let mut best = argmin(&fit);
    let mut overall = Individual {
        genes: pop[best].clone(),
        fitness: vec![fit[best]],
    };
    let mut history = vec![fit[best]];

    for generation in 1..=cfg.generations {
        let mut next = Vec::with_capacity(n);
        let mut next_fit = Vec::with_capacity(n);
        if cfg.elitism {
            next.push(pop[best].clone());
            next_fit.push(fit[best]);
        }
        let kept = next.len();
        while next.len() < n {
            let (a, b) = select_by_fitness(&fit, &mut r)?;
            next.push(breed(&pop[a], &pop[b], bounds, cfg, &mut r));
        }
        next_fit.extend(
            evaluate(&next[kept..], &wrapped, generation, kept)?
                .into_iter()
                .map(|v| v[0]),
        );
        pop = next;
        fit = next_fit;
        best = argmin(&fit);
        if fit[best] < overall.fitness[0] {
            overall = Individual {
                genes: pop[best].clone(),
                fitness: vec![fit[best]],
            };
        }
        history.push(fit[best]);
    }
    Ok(GaResult {
        best: overall,
        history,
        population: pop,
        fitness: fit,
    })
}

/// Mutually non-dominated designs and their objective values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Front {
    pub genes: Vec<Vec<f64>>,
    pub objectives: Vec<Vec<f64>>,
    pub crowding: Vec<f64>,
}

impl Front {
    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    /// Exhaustive pairwise check.
    pub fn is_nondominated(&self) -> bool {
        let o = &self.objectives;
        (0..o.len()).all(|i| (0..o.len()).all(|j| i == j || !dominates(&o[i], &o[j])))
    }

    /// Gene columns, objective columns, `rank`, `crowding`.
    pub fn to_csv(&self, gene_header: &str, objective_names: &[&str]) -> String {
        let mut out = format!("{gene_header},{},rank,crowding\n", objective_names.join(","));
        for i in 0..self.len() {
            let cols: Vec<String> = self.genes[i]
                .iter()
                .chain(&self.objectives[i])
                .map(|v| v.to_string())
                .collect();
            let _ = writeln!(out, "{},0,{}", cols.join(","), self.crowding[i]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsgaResult {
    pub front: Front,
    pub population: Vec<Vec<f64>>,
    pub objectives: Vec<Vec<f64>>,
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
    /// Size of the first front after initialisation and each generation.
    pub front_sizes: Vec<usize>,
}

impl NsgaResult {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("generation,front_size\n");
        for (g, v) in self.front_sizes.iter().enumerate() {
            let _ = writeln!(out, "{g},{v}");
        }
        out
    }
}

/// Keeps the `n` best of `objs` by (rank, larger crowding, index).
fn survivors(objs: &[Vec<f64>], n: usize) -> Vec<usize> {
    let (rank, crowd) = rank_and_crowd(objs);
    let mut order: Vec<usize> = (0..objs.len()).collect();
    order.sort_by(|&a, &b| crowded_cmp(&rank, &crowd, a, b).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// NSGA-II with (mu + lambda) survival, minimising every component of `f`.
pub fn nsga2<F>(f: F, bounds: &Bounds, cfg: &GaConfig) -> Result<NsgaResult, EvolveError>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    cfg.validate()?;
    let n = cfg.population;
    let mut r = rng::derive(cfg.seed, 0);
    let mut pop = lhs_sample(n, bounds, cfg.seed);
    let mut objs = evaluate(&pop, &f, 0, 0)?;
    let m = objs[0].len();
    if m < 2 || objs.iter().any(|o| o.len() != m) {
        return Err(EvolveError::Config(format!(
            "NSGA-II needs a fixed objective count >= 2, got {m}"
        )));
    }
    let (mut rank, mut crowd) = rank_and_crowd(&objs);
    let mut front_sizes = vec![rank.iter().filter(|&&x| x == 0).count()];

    for generation in 1..=cfg.generations {
        let mut children = Vec::with_capacity(n);
        while children.len() < n {
            let (a, b) = select_by_crowding(&rank, &crowd, &mut r)?;
            children.push(breed(&pop[a], &pop[b], bounds, cfg, &mut r));
        }
        let child_objs = evaluate(&children, &f, generation, n)?;
        if child_objs.iter().any(|o| o.len() != m) {
            return Err(EvolveError::Config("objective count changed".into()));
        }
        pop.extend(children);
        objs.extend(child_objs);
        let keep = survivors(&objs, n);
        pop = keep.iter().map(|&i| pop[i].clone()).collect();
        objs = keep.iter().map(|&i| objs[i].clone()).collect();
        (rank, crowd) = rank_and_crowd(&objs);
        front_sizes.push(rank.iter().filter(|&&x| x == 0).count());
    }

    let mut front = Front {
        genes: Vec::new(),
        objectives: Vec::new(),
        crowding: Vec::new(),
    };
    for i in (0..n).filter(|&i| rank[i] == 0) {
        if !front.genes.contains(&pop[i]) {
            front.genes.push(pop[i].clone());
            front.objectives.push(objs[i].clone());
        }
    }
    let refs: Vec<&[f64]> = front.objectives.iter().map(Vec::as_slice).collect();
    front.crowding = crowding_distance(&refs);
    Ok(NsgaResult {
        front,
        population: pop,
        objectives: objs,
        rank,
        crowding: crowd,
        front_sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_minimum() {
        // uniform-resample mutation refines slowly, so the bar is a majority
        // of seeds in two dimensions rather than every seed
        let b = Bounds::uniform(2, -1.0, 3.0);
        let c = [0.5, 1.2];
        let f = |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut hits = 0;
        for seed in 0..20 {
            let res = ga_minimize(f, &b, &GaConfig::new(25, 50).with_seed(seed)).unwrap();
            hits += res.best.genes.iter().zip(&c).all(|(g, t)| ((g - t) / 4.0).abs() < 1e-2) as usize;
            assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(res.history.len(), 51);
        }
        assert!(hits >= 14, "{hits}/20 seeds reached the minimum");
    }

    #[test]
    fn constant_objective_has_flat_history() {
        let b = Bounds::uniform(3, 0.0, 1.0);
        let res = ga_minimize(|_| 2.5, &b, &GaConfig::new(8, 10)).unwrap();
        assert!(res.history.iter().all(|&h| h == 2.5));
    }

    #[test]
    fn ga_errors() {
        let b = Bounds::uniform(2, 0.0, 1.0);
        assert!(matches!(
            ga_minimize(|_| 1.0, &b, &GaConfig::new(3, 5)),
            Err(EvolveError::PopulationTooSmall(3))
        ));
        let cfg = GaConfig {
            mutation_prob: 1.5,
            ..GaConfig::new(8, 5)
        };
        assert!(matches!(ga_minimize(|_| 1.0, &b, &cfg), Err(EvolveError::Config(_))));
        let r = ga_minimize(|x| if x[0] > 0.5 { f64::NAN } else { 0.0 }, &b, &GaConfig::new(8, 5));
        assert!(matches!(r, Err(EvolveError::NonFinite { .. })));
    }

    #[test]
    fn ga_is_deterministic_and_in_bounds() {
        let b = Bounds::casting(10);
        let f = |x: &[f64]| x.iter().map(|v| (v - 700.0).abs()).sum::<f64>();
        let cfg = GaConfig::new(12, 15).with_seed(9);
        let a = ga_minimize(f, &b, &cfg).unwrap();
        assert_eq!(a, ga_minimize(f, &b, &cfg).unwrap());
        assert!(a.population.iter().all(|g| b.contains(g)));
    }

    #[test]
    fn correlated_objectives_collapse() {
        let b = Bounds::uniform(2, 0.0, 1.0);
        let f = |x: &[f64]| {
            let v = (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2);
            vec![v, v]
        };
        let res = nsga2(f, &b, &GaConfig::new(40, 30).with_seed(1)).unwrap();
        assert_eq!(res.front.len(), 1);
        assert!(res.front.objectives[0][0] < 1e-3);
    }

    #[test]
    fn convex_front_is_nondominated_and_spread() {
        // f1 = x, f2 = 1 - sqrt(x) on x in [0, 1] with a penalty on y
        let b = Bounds::uniform(2, 0.0, 1.0);
        let f = |x: &[f64]| vec![x[0], 1.0 - x[0].sqrt() + x[1]];
        let cfg = GaConfig::new(60, 40).with_seed(5);
        let res = nsga2(f, &b, &cfg).unwrap();
        assert!(res.front.is_nondominated());
        assert!(res.front.len() > 20);
        assert!(res.front.genes.iter().all(|g| g[1] < 0.05));
        let xs: Vec<f64> = res.front.genes.iter().map(|g| g[0]).collect();
        assert!(xs.iter().cloned().fold(1.0, f64::min) < 0.05);
        assert!(xs.iter().cloned().fold(0.0, f64::max) > 0.95);
        assert_eq!(res, nsga2(f, &b, &cfg).unwrap());
        let csv = res.front.to_csv("a,b", &["f1", "f2"]);
        assert!(csv.starts_with("a,b,f1,f2,rank,crowding\n"));
        assert_eq!(csv.lines().count(), res.front.len() + 1);
    }

    #[test]
    fn nsga_needs_two_objectives() {
        let b = Bounds::uniform(2, 0.0, 1.0);
        assert!(matches!(
            nsga2(|x: &[f64]| vec![x[0]], &b, &GaConfig::new(8, 2)),
            Err(EvolveError::Config(_))
        ));
    }
}
