use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng as _;

use super::EvolveError;
use crate::design::Bounds;
use crate::rng::Rng;

/// Draws four distinct individuals and returns the best two, best first.
/// `cmp(a, b) == Less` means `a` is fitter; ties keep draw order.
pub fn tournament_select(
    n: usize,
    rng: &mut Rng,
    cmp: impl Fn(usize, usize) -> Ordering,
) -> Result<(usize, usize), EvolveError> {
    if n < 4 {
        return Err(EvolveError::PopulationTooSmall(n));
    }
    let mut drawn: Vec<usize> = index::sample(rng, n, 4).into_vec();
    drawn.sort_by(|&a, &b| cmp(a, b));
    Ok((drawn[0], drawn[1]))
}

/// Tournament on scalar fitness (lower is better).
pub fn select_by_fitness(fitness: &[f64], rng: &mut Rng) -> Result<(usize, usize), EvolveError> {
    tournament_select(fitness.len(), rng, |a, b| fitness[a].total_cmp(&fitness[b]))
}

/// Crowded comparison: lower rank wins, then larger crowding distance.
pub fn crowded_cmp(rank: &[usize], crowding: &[f64], a: usize, b: usize) -> Ordering {
    rank[a].cmp(&rank[b]).then_with(|| crowding[b].total_cmp(&crowding[a]))
}

pub fn select_by_crowding(rank: &[usize], crowding: &[f64], rng: &mut Rng) -> Result<(usize, usize), EvolveError> {
    tournament_select(rank.len(), rng, |a, b| crowded_cmp(rank, crowding, a, b))
}

/// With probability `pc` each gene comes from either parent with equal
/// chance; otherwise the child copies `p1`.
pub fn uniform_crossover(p1: &[f64], p2: &[f64], pc: f64, rng: &mut Rng) -> Vec<f64> {
    if !(rng.random::<f64>() < pc) {
        return p1.to_vec();
    }
    p1.iter()
        .zip(p2)
        .map(|(&a, &b)| if rng.random::<bool>() { a } else { b })
        .collect()
}

/// Resamples each gene uniformly inside its bounds with probability `pm`.
pub fn mutate(genes: &mut [f64], bounds: &Bounds, pm: f64, rng: &mut Rng) {
    for (d, g) in genes.iter_mut().enumerate() {
        if rng.random::<f64>() < pm {
            let u: f64 = rng.random();
            *g = (bounds.lo[d] + u * (bounds.hi[d] - bounds.lo[d])).min(bounds.hi[d]);
        }
    }
}
