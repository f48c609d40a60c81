//! Local sensitivity of optimal designs: the L1 norm of the objective
//! Jacobian, taken in normalised input and output units so that no single
//! objective's magnitude dominates.

use std::convert::Infallible;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::surrogate::{SurrogateError, SurrogateSet};

/// Finite-difference step in normalised input units.
pub const DEFAULT_STEP: f64 = 0.01;

/// Bins of the emitted norm histogram.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("non-finite objective value at input {0:?}")]
    NonFinite(Vec<f64>),
    #[error("step {0} must lie in (0, 0.5)")]
    Step(f64),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

impl From<Infallible> for SensitivityError {
    fn from(e: Infallible) -> Self {
        match e {}
    }
}

/// Jacobian of an m-vector function at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jacobian {
    /// `entries[i][j] = d f_i / d x_j`.
    pub entries: Vec<Vec<f64>>,
    /// Inputs where the point sat within one step of a bound and a
    /// one-sided difference was used.
    pub one_sided: Vec<bool>,
}

impl Jacobian {
    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().flatten().map(|v| v.abs()).sum()
    }
}

/// Central-difference Jacobian of `f` at `u` in the unit box; inputs within
/// `h` of 0 or 1 use forward or backward differences with the same step.
pub fn jacobian_central<F, E>(f: F, u: &[f64], h: f64) -> Result<Jacobian, SensitivityError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, E>,
    SensitivityError: From<E>,
{
    if !(h > 0.0 && h < 0.5) {
        return Err(SensitivityError::Step(h));
    }
    let eval = |x: &[f64]| -> Result<Vec<f64>, SensitivityError> {
        let y = f(x)?;
        if y.iter().all(|v| v.is_finite()) {
            Ok(y)
        } else {
            Err(SensitivityError::NonFinite(x.to_vec()))
        }
    };
    let n = u.len();
    let mut centre = None;
    let mut cols = Vec::with_capacity(n);
    let mut one_sided = vec![false; n];
    for j in 0..n {
        let mut up = u.to_vec();
        let mut down = u.to_vec();
        let (col, width) = if u[j] + h > 1.0 {
            one_sided[j] = true;
            down[j] -= h;
            let c = centre.get_or_insert(eval(u)?).clone();
            (diff(&c, &eval(&down)?), h)
        } else if u[j] - h < 0.0 {
            one_sided[j] = true;
            up[j] += h;
            let c = centre.get_or_insert(eval(u)?).clone();
            (diff(&eval(&up)?, &c), h)
        } else {
            up[j] += h;
            down[j] -= h;
            (diff(&eval(&up)?, &eval(&down)?), 2.0 * h)
        };
        cols.push(col.into_iter().map(|d| d / width).collect::<Vec<f64>>());
    }
    let m = cols.first().map_or(0, Vec::len);
    let entries = (0..m).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    Ok(Jacobian { entries, one_sided })
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Surrogate objectives `cols` as a map from the unit box to normalised
/// outputs.
pub fn normalized_objectives<'a>(
    nets: &'a SurrogateSet,
    cols: &'a [usize],
) -> impl Fn(&[f64]) -> Result<Vec<f64>, SurrogateError> + Sync + 'a {
    move |u: &[f64]| cols.iter().map(|&k| nets.models[k].net.forward(u)).collect()
}

/// One ranked design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord {
    /// Position in the input list.
    pub index: usize,
    pub design: Vec<f64>,
    pub objectives: Vec<f64>,
    pub jacobian: Jacobian,
    pub l1_norm: f64,
}

/// Records for every design, sorted ascending by norm; equal norms keep
/// input order. `f` maps normalised inputs to normalised outputs.
pub fn rank_designs<F, E>(
    designs: &[Vec<f64>],
    objectives: &[Vec<f64>],
    normalize: impl Fn(&[f64]) -> Vec<f64> + Sync,
    f: F,
    h: f64,
) -> Result<Vec<SensitivityRecord>, SensitivityError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, E> + Sync,
    E: Send,
    SensitivityError: From<E>,
{
    let mut records = designs
        .par_iter()
        .zip(objectives)
        .enumerate()
        .map(|(index, (x, o))| {
            let jacobian = jacobian_central(&f, &normalize(x), h)?;
            Ok(SensitivityRecord {
                index,
                design: x.clone(),
                objectives: o.clone(),
                l1_norm: jacobian.l1_norm(),
                jacobian,
            })
        })
        .collect::<Result<Vec<_>, SensitivityError>>()?;
    records.sort_by(|a, b| a.l1_norm.total_cmp(&b.l1_norm));
    Ok(records)
}

/// Ranks front designs with the surrogate networks of objectives `cols`.
pub fn rank_front(
    designs: &[Vec<f64>],
    objectives: &[Vec<f64>],
    nets: &SurrogateSet,
    cols: &[usize],
    h: f64,
) -> Result<Vec<SensitivityRecord>, SensitivityError> {
    let bounds = nets.bounds();
    rank_designs(
        designs,
        objectives,
        |x| bounds.normalize(x),
        normalized_objectives(nets, cols),
        h,
    )
}

/// The record with the smallest norm; the earliest wins ties.
pub fn stable_optimum(records: &[SensitivityRecord]) -> Option<&SensitivityRecord> {
    let mut best = records.first()?;
    for r in records {
        if r.l1_norm < best.l1_norm {
            best = r;
        }
    }
    Some(best)
}

/// Design columns, objective columns, `l1_norm`, `rank`, `one_sided_flags`.
pub fn ranking_csv(records: &[SensitivityRecord], design_header: &str, objective_names: &[&str]) -> String {
    let mut out = format!(
        "{design_header},{},l1_norm,rank,one_sided_flags\n",
        objective_names.join(",")
    );
    for (rank, r) in records.iter().enumerate() {
        let vals: Vec<String> = r.design.iter().chain(&r.objectives).map(|v| v.to_string()).collect();
        let flags: String = r
            .jacobian
            .one_sided
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect();
        let _ = writeln!(out, "{},{},{rank},{flags}", vals.join(","), r.l1_norm);
    }
    out
}

/// Equal-width bins spanning `[min, max]` of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// The last bin is closed on the right so the maximum is counted.
    pub fn new(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return Self {
                edges: Vec::new(),
                counts: Vec::new(),
            };
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|b| lo + width * b as f64).collect();
        edges.push(hi);
        let mut counts = vec![0; bins];
        for &v in values {
            let b = if width > 0.0 { ((v - lo) / width) as usize } else { 0 };
            counts[b.min(bins - 1)] += 1;
        }
        Self { edges, counts }
    }

    /// `lo,hi,count` per bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lo,hi,count\n");
        for (b, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{c}", self.edges[b], self.edges[b + 1]);
        }
        out
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Mass concentrated at low values: the median lies below the midpoint of
/// the range.
pub fn is_left_skewed(values: &[f64]) -> bool {
    let Some(med) = median(values) else {
        return false;
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    med < 0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::surrogate::Mlp;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn ok(f: impl Fn(&[f64]) -> Vec<f64>) -> impl Fn(&[f64]) -> Result<Vec<f64>, Infallible> {
        move |x| Ok(f(x))
    }

    fn affine(a: &[Vec<f64>], b: &[f64]) -> impl Fn(&[f64]) -> Vec<f64> {
        let (a, b) = (a.to_vec(), b.to_vec());
        move |x| {
            a.iter()
                .zip(&b)
                .map(|(row, bi)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bi)
                .collect()
        }
    }

    fn records_with_norms(norms: &[f64]) -> Vec<SensitivityRecord> {
        norms
            .iter()
            .enumerate()
            .map(|(index, &l1_norm)| SensitivityRecord {
                index,
                design: vec![index as f64],
                objectives: vec![0.0],
                jacobian: Jacobian {
                    entries: vec![vec![l1_norm]],
                    one_sided: vec![false],
                },
                l1_norm,
            })
            .collect()
    }

    #[test]
    fn affine_maps_are_exact() {
        let mut r = rng::seeded(31);
        for _ in 0..20 {
            let a: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..11).map(|_| r.random_range(-5.0..5.0)).collect())
                .collect();
            let b = [1.0, -2.0, 0.5];
            // includes inputs on and near the bounds
            let mut u: Vec<f64> = (0..11).map(|_| r.random()).collect();
            u[0] = 0.0;
            u[1] = 1.0;
            u[2] = 0.995;
            let j = jacobian_central(ok(affine(&a, &b)), &u, DEFAULT_STEP).unwrap();
            for (row, exact) in j.entries.iter().zip(&a) {
                for (x, y) in row.iter().zip(exact) {
                    assert!((x - y).abs() < 1e-10, "{x} {y}");
                }
            }
            assert!(j.one_sided[0] && j.one_sided[1] && j.one_sided[2]);
            let l1: f64 = a.iter().flatten().map(|v| v.abs()).sum();
            assert!((j.l1_norm() - l1).abs() < 1e-9);
        }
    }

    #[test]
    fn stationary_point_has_zero_jacobian() {
        let f = ok(|x: &[f64]| vec![x.iter().map(|v| (v - 0.5) * (v - 0.5)).sum()]);
        let j = jacobian_central(f, &[0.5; 11], DEFAULT_STEP).unwrap();
        assert!(j.entries[0].iter().all(|&v| v == 0.0));
        assert_eq!(j.l1_norm(), 0.0);
    }

    #[test]
    fn second_order_convergence() {
        let f = |x: &[f64]| vec![(2.0 * x[0]).sin() * x[1].exp(), x[0] * x[0] * x[1].cos()];
        let exact = |x: &[f64]| {
            vec![
                vec![2.0 * (2.0 * x[0]).cos() * x[1].exp(), (2.0 * x[0]).sin() * x[1].exp()],
                vec![2.0 * x[0] * x[1].cos(), -x[0] * x[0] * x[1].sin()],
            ]
        };
        let u = [0.37, 0.61];
        let err = |h: f64| {
            let j = jacobian_central(ok(f), &u, h).unwrap();
            let e = exact(&u);
            (0..2)
                .flat_map(|i| (0..2).map(move |k| (i, k)))
                .map(|(i, k)| (j.entries[i][k] - e[i][k]).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(0.02) / err(0.01)).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn trained_net_matches_backprop() {
        let mut r = rng::seeded(32);
        let net: Mlp<f64> = Mlp::glorot(&[11, 20, 20, 1], &mut r);
        let f = |u: &[f64]| net.forward(u).map(|y| vec![y]);
        let h = 1e-6;
        let mut checked = 0;
        for _ in 0..200 {
            let u: Vec<f64> = (0..11).map(|_| r.random_range(0.05..0.95)).collect();
            if net.min_abs_preactivation(&u).unwrap() < 1e-3 {
                continue;
            }
            let j = jacobian_central(f, &u, h).unwrap();
            let g = net.gradient(&u).unwrap();
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (a, b) in j.entries[0].iter().zip(&g) {
                assert!((a - b).abs() <= 1e-5 * scale, "{a} {b}");
            }
            checked += 1;
        }
        assert!(checked > 150);
    }

    #[test]
    fn errors() {
        let bad = ok(|_: &[f64]| vec![f64::NAN]);
        assert!(matches!(
            jacobian_central(bad, &[0.5], 0.01),
            Err(SensitivityError::NonFinite(_))
        ));
        assert!(matches!(
            jacobian_central(ok(|x: &[f64]| x.to_vec()), &[0.5], 0.0),
            Err(SensitivityError::Step(_))
        ));
    }

    #[test]
    fn ranking_cases() {
        let f = ok(affine(&[vec![1.0, -2.0]], &[0.0]));
        let designs = vec![vec![0.3, 0.4]];
        let recs = rank_designs(&designs, &[vec![1.0]], |x| x.to_vec(), &f, DEFAULT_STEP).unwrap();
        assert_eq!(recs[0].index, 0);

        // constant Jacobian: equal norms, input order kept
        let designs: Vec<Vec<f64>> = (0..8).map(|i| vec![0.1 * i as f64 + 0.1, 0.5]).collect();
        let objs = vec![vec![0.0]; 8];
        let recs = rank_designs(&designs, &objs, |x| x.to_vec(), &f, DEFAULT_STEP).unwrap();
        assert_eq!(
            recs.iter().map(|r| r.index).collect::<Vec<_>>(),
            (0..8).collect::<Vec<_>>()
        );
        let csv = ranking_csv(&recs, "a,b", &["f"]);
        assert!(csv.starts_with("a,b,f,l1_norm,rank,one_sided_flags\n"));
        assert_eq!(csv.lines().count(), 9);
    }

    #[test]
    fn optimum_tie_rules() {
        assert_eq!(stable_optimum(&records_with_norms(&[3.0, 1.0, 2.0])).unwrap().index, 1);
        assert_eq!(stable_optimum(&records_with_norms(&[2.0; 4])).unwrap().index, 0);
        assert!(stable_optimum(&[]).is_none());
    }

    #[test]
    fn common_scale_keeps_order() {
        let mut r = rng::seeded(33);
        let a: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        // a nonlinear term so designs get different norms
        let base = move |x: &[f64]| {
            let lin = affine(&a, &[0.0, 0.0])(x);
            vec![lin[0] + x[0] * x[1] * 3.0, lin[1] + x[2] * x[2]]
        };
        let designs: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| r.random_range(0.1..0.9)).collect())
            .collect();
        let objs = vec![vec![0.0, 0.0]; 30];
        let plain = rank_designs(&designs, &objs, |x| x.to_vec(), ok(&base), DEFAULT_STEP).unwrap();
        let scaled = rank_designs(
            &designs,
            &objs,
            |x| x.to_vec(),
            ok(|x: &[f64]| base(x).iter().map(|v| 4.0 * v).collect()),
            DEFAULT_STEP,
        )
        .unwrap();
        for (p, s) in plain.iter().zip(&scaled) {
            assert_eq!(p.index, s.index);
            assert!((4.0 * p.l1_norm - s.l1_norm).abs() < 1e-9 * s.l1_norm.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn optimum_invariant_under_permutation(
            norms in prop::collection::vec(0.0..10.0f64, 1..40),
            seed in any::<u64>(),
        ) {
            let recs = records_with_norms(&norms);
            let mut shuffled = recs.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut rng::seeded(seed));
            let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(stable_optimum(&shuffled).unwrap().l1_norm, min);
            prop_assert!(recs.iter().all(|r| stable_optimum(&shuffled).unwrap().l1_norm <= r.l1_norm));
        }

        #[test]
        fn histogram_covers_range(values in prop::collection::vec(-5.0..5.0f64, 1..200), bins in 1usize..30) {
            let h = Histogram::new(&values, bins);
            prop_assert_eq!(h.counts.iter().sum::<usize>(), values.len());
            prop_assert_eq!(h.edges.len(), h.counts.len() + 1);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(h.edges[0], lo);
            prop_assert_eq!(*h.edges.last().unwrap(), hi);
        }
    }

    #[test]
    fn skew_check() {
        assert!(is_left_skewed(&[1.0, 1.1, 1.2, 1.3, 5.0, 9.0]));
        assert!(!is_left_skewed(&[1.0, 8.0, 8.5, 9.0]));
        assert!(!is_left_skewed(&[]));
        assert_eq!(median(&[3.0, 1.0, 2.0, 4.0]), Some(2.5));
    }
}
