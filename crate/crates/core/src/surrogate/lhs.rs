use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::design::Bounds;
use crate::rng;

/// Latin hypercube sample of `n` points: every column has exactly one point
/// in each of its `n` equal-width bins.
pub fn lhs_sample(n: usize, bounds: &Bounds, seed: u64) -> Vec<Vec<f64>> {
    assert!(n >= 1, "need at least one sample");
    assert!(bounds.is_valid(), "invalid bounds");
    let mut r = rng::seeded(seed);
    let dim = bounds.dim();
    let mut out = vec![vec![0.0; dim]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        perm.shuffle(&mut r);
        let (lo, hi) = (bounds.lo[d], bounds.hi[d]);
        for (row, &bin) in out.iter_mut().zip(&perm) {
            let u = (bin as f64 + r.random::<f64>()) / n as f64;
            row[d] = (lo + u * (hi - lo)).min(hi);
        }
    }
    out
}

/// Bin occupancy of column `d` over `n` equal bins.
pub fn column_occupancy(samples: &[Vec<f64>], bounds: &Bounds, d: usize) -> Vec<usize> {
    let n = samples.len();
    let mut counts = vec![0; n];
    let width = bounds.hi[d] - bounds.lo[d];
    for s in samples {
        let u = (s[d] - bounds.lo[d]) / width;
        let bin = ((u * n as f64).floor() as usize).min(n - 1);
        counts[bin] += 1;
    }
    counts
}
