use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolve::dominates;

/// Indices of the non-dominated members of `objs`, ascending.
///
/// Each point is checked against every candidate dominator; sorting by the
/// first objective only prunes candidates that cannot dominate.
pub fn brute_pareto(objs: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..objs.len()).collect();
    order.sort_by(|&a, &b| objs[a][0].total_cmp(&objs[b][0]).then(a.cmp(&b)));
    let first: Vec<f64> = order.iter().map(|&i| objs[i][0]).collect();
    (0..objs.len())
        .into_par_iter()
        .filter(|&i| {
            // candidates with first objective <= ours
            let end = first.partition_point(|&v| v <= objs[i][0]);
            order[..end].iter().all(|&j| !dominates(&objs[j], &objs[i]))
        })
        .collect()
}

/// Volume dominated by `points` and bounded by `reference` (minimisation).
/// Points not strictly better than the reference in every objective add
/// nothing.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let pts: Vec<&[f64]> = points
        .iter()
        .map(Vec::as_slice)
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a < r))
        .collect();
    slice_volume(pts, reference)
}

/// Exact volume: sweep-line in two objectives, slabs along the last
/// objective above that.
fn slice_volume(mut pts: Vec<&[f64]>, r: &[f64]) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    let m = r.len();
    if m == 1 {
        return r[0] - pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    }
    if m == 2 {
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let mut area = 0.0;
        let mut ceiling = r[1];
        for p in pts {
            if p[1] < ceiling {
                area += (r[0] - p[0]) * (ceiling - p[1]);
                ceiling = p[1];
            }
        }
        return area;
    }
    let last = m - 1;
    pts.sort_by(|a, b| a[last].total_cmp(&b[last]));
    let mut vol = 0.0;
    for i in 0..pts.len() {
        let top = pts.get(i + 1).map_or(r[last], |p| p[last]);
        let depth = top - pts[i][last];
        if depth > 0.0 {
            let below: Vec<&[f64]> = pts[..=i].iter().map(|p| &p[..last]).collect();
            vol += depth * slice_volume(below, &r[..last]);
        }
    }
    vol
}

/// How closely an optimizer front reproduces a reference front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontComparison {
    pub n_front: usize,
    pub n_reference: usize,
    /// Reference point in objective units: per-objective maximum over both
    /// fronts plus 5% of the normalising range.
    pub reference_point: Vec<f64>,
    /// Hypervolumes in normalised objectives.
    pub hv_front: f64,
    pub hv_reference: f64,
    /// `|hv_front - hv_reference| / hv_reference`; absent when either front
    /// has a single point.
    pub hv_diff: Option<f64>,
    /// Largest normalised distance from a front point to its nearest
    /// reference point.
    pub max_nearest_dist: f64,
}

impl FrontComparison {
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n_front = {}", self.n_front);
        let _ = writeln!(out, "n_reference = {}", self.n_reference);
        let _ = writeln!(out, "hv_front = {}", self.hv_front);
        let _ = writeln!(out, "hv_reference = {}", self.hv_reference);
        match self.hv_diff {
            Some(d) => writeln!(out, "hv_diff = {d}"),
            None => writeln!(out, "hv_diff = none"),
        }
        .ok();
        let _ = writeln!(out, "max_nearest_dist = {}", self.max_nearest_dist);
        out
    }
}

const REFERENCE_MARGIN: f64 = 0.05;

/// Compares `front` against `reference` after min-max normalising both with
/// their joint ranges. Returns `None` if either is empty or the objective
/// counts differ.
pub fn compare_front(front: &[Vec<f64>], reference: &[Vec<f64>]) -> Option<FrontComparison> {
    let m = front.first()?.len();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for p in front.iter().chain(reference).filter(|p| p.len() == m) {
        for k in 0..m {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    compare_front_in(front, reference, &lo, &hi)
}

/// As [`compare_front`], but normalising each objective by the given range
/// (typically the range over the whole sweep grid), so that fronts which
/// collapse to a point are still measured in meaningful units. The
/// reference point is the per-objective maximum over both fronts plus 5% of
/// that range.
pub fn compare_front_in(front: &[Vec<f64>], reference: &[Vec<f64>], lo: &[f64], hi: &[f64]) -> Option<FrontComparison> {
    let m = front.first()?.len();
    if reference.is_empty() || lo.len() != m || hi.len() != m || front.iter().chain(reference).any(|p| p.len() != m) {
        return None;
    }
    let span: Vec<f64> = lo
        .iter()
        .zip(hi)
        .map(|(l, h)| if h > l { h - l } else { 1.0 })
        .collect();
    let top: Vec<f64> = (0..m)
        .map(|k| {
            front
                .iter()
                .chain(reference)
                .map(|p| p[k])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let norm = |p: &Vec<f64>| (0..m).map(|k| (p[k] - lo[k]) / span[k]).collect::<Vec<f64>>();
    let a: Vec<Vec<f64>> = front.iter().map(norm).collect();
    let b: Vec<Vec<f64>> = reference.iter().map(norm).collect();
    let r_norm: Vec<f64> = (0..m).map(|k| (top[k] - lo[k]) / span[k] + REFERENCE_MARGIN).collect();
    let hv_front = hypervolume(&a, &r_norm);
    let hv_reference = hypervolume(&b, &r_norm);
    let hv_diff = (front.len() > 1 && reference.len() > 1 && hv_reference > 0.0)
        .then(|| (hv_front - hv_reference).abs() / hv_reference);
    let max_nearest_dist = a
        .par_iter()
        .map(|p| {
            b.iter()
                .map(|q| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .reduce(|| 0.0, f64::max);
    Some(FrontComparison {
        n_front: front.len(),
        n_reference: reference.len(),
        reference_point: (0..m).map(|k| top[k] + REFERENCE_MARGIN * span[k]).collect(),
        hv_front,
        hv_reference,
        hv_diff,
        max_nearest_dist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// Every point against every other, scanned from the end.
    fn pairwise_reversed(objs: &[Vec<f64>]) -> Vec<usize> {
        let mut keep: Vec<usize> = (0..objs.len())
            .rev()
            .filter(|&i| (0..objs.len()).rev().all(|j| !dominates(&objs[j], &objs[i])))
            .collect();
        keep.reverse();
        keep
    }

    /// Union volume of the boxes `[p, r]` by inclusion-exclusion.
    fn inclusion_exclusion(points: &[Vec<f64>], r: &[f64]) -> f64 {
        let n = points.len();
        let mut vol = 0.0;
        for mask in 1u32..(1 << n) {
            let mut corner = vec![f64::NEG_INFINITY; r.len()];
            for (i, p) in points.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    for k in 0..r.len() {
                        corner[k] = corner[k].max(p[k]);
                    }
                }
            }
            let boxv: f64 = corner.iter().zip(r).map(|(c, r)| (r - c).max(0.0)).product();
            vol += if mask.count_ones() % 2 == 1 { boxv } else { -boxv };
        }
        vol
    }

    #[test]
    fn pareto_cases() {
        let same = vec![vec![1.0, 2.0]; 6];
        assert_eq!(brute_pareto(&same), (0..6).collect::<Vec<_>>());
        let conflict: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, -(i as f64)]).collect();
        assert_eq!(brute_pareto(&conflict).len(), 30);

        let mut r = rng::seeded(21);
        for _ in 0..50 {
            // 10 x 10 grid of random objective pairs with repeated values
            let objs: Vec<Vec<f64>> = (0..100)
                .map(|_| vec![r.random_range(0..12) as f64, r.random_range(0..12) as f64])
                .collect();
            assert_eq!(brute_pareto(&objs), pairwise_reversed(&objs));
        }
    }

    #[test]
    fn pareto_audit() {
        let mut r = rng::seeded(22);
        let objs: Vec<Vec<f64>> = (0..3000).map(|_| (0..3).map(|_| r.random::<f64>()).collect()).collect();
        let front = brute_pareto(&objs);
        for &i in &front {
            assert!(front.iter().all(|&j| !dominates(&objs[j], &objs[i])));
        }
        for i in (0..objs.len()).filter(|i| front.binary_search(i).is_err()) {
            assert!(
                front.iter().any(|&j| dominates(&objs[j], &objs[i])),
                "{i} not dominated"
            );
        }
    }

    #[test]
    fn hypervolume_by_hand() {
        let r = [4.0, 4.0];
        assert_eq!(hypervolume(&[vec![1.0, 1.0]], &r), 9.0);
        let stairs = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0]];
        assert_eq!(hypervolume(&stairs, &r), 3.0 + 2.0 + 1.0);
        assert_eq!(hypervolume(&[vec![5.0, 0.0]], &r), 0.0);
        let cube = hypervolume(&[vec![0.0, 0.0, 0.0]], &[1.0, 2.0, 3.0]);
        assert_eq!(cube, 6.0);
    }

    #[test]
    fn removing_a_point_loses_its_exclusive_area() {
        let front: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, (19 - i) as f64 + 0.1 * (i % 3) as f64])
            .collect();
        let front: Vec<Vec<f64>> = brute_pareto(&front).into_iter().map(|i| front[i].clone()).collect();
        let r = [25.0, 25.0];
        let full = hypervolume(&front, &r);
        for drop in 1..front.len() - 1 {
            let mut rest = front.clone();
            rest.remove(drop);
            // the removed point's box minus its overlap with its neighbours
            let (p, prev, next) = (&front[drop], &front[drop - 1], &front[drop + 1]);
            let exclusive = (next[0] - p[0]) * (prev[1] - p[1]);
            assert!((full - hypervolume(&rest, &r) - exclusive).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn slicing_matches_inclusion_exclusion(
            pts in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 3), 1..10),
        ) {
            let r = [1.1, 1.2, 1.05];
            let a = hypervolume(&pts, &r);
            let b = inclusion_exclusion(&pts, &r);
            prop_assert!((a - b).abs() < 1e-12, "{a} {b}");
            let flat: Vec<Vec<f64>> = pts.iter().map(|p| p[..2].to_vec()).collect();
            prop_assert!((hypervolume(&flat, &r[..2]) - inclusion_exclusion(&flat, &r[..2])).abs() < 1e-12);
        }

        #[test]
        fn adding_a_point_never_shrinks(
            pts in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 3), 1..40),
            extra in prop::collection::vec(0.0..1.0f64, 3),
        ) {
            let r = [1.0, 1.0, 1.0];
            let before = hypervolume(&pts, &r);
            let mut more = pts.clone();
            more.push(extra);
            prop_assert!(hypervolume(&more, &r) >= before - 1e-15);
        }
    }

    #[test]
    fn comparison_metrics() {
        let front: Vec<Vec<f64>> = (0..11).map(|i| vec![i as f64, (10 - i) as f64]).collect();
        let c = compare_front(&front, &front).unwrap();
        assert_eq!(c.hv_diff, Some(0.0));
        assert_eq!(c.max_nearest_dist, 0.0);
        assert_eq!(c.reference_point, vec![10.5, 10.5]);

        let shifted: Vec<Vec<f64>> = front.iter().map(|p| vec![p[0] + 1.0, p[1]]).collect();
        let c = compare_front(&shifted, &front).unwrap();
        assert!(c.hv_diff.unwrap() > 0.0);
        assert!((c.max_nearest_dist - 1.0 / 11.0).abs() < 1e-12);

        let c = compare_front(&[vec![3.0, 7.0]], &front).unwrap();
        assert_eq!(c.hv_diff, None);
        assert_eq!(c.max_nearest_dist, 0.0);
        assert!(c.to_report().contains("hv_diff = none"));
        assert!(compare_front(&[], &front).is_none());
        assert!(compare_front(&[vec![1.0]], &front).is_none());

        // A collapsed reference measured on a wider range.
        let c = compare_front_in(
            &[vec![1.0, 1.0], vec![1.5, 1.0]],
            &[vec![1.0, 1.0]],
            &[0.0, 0.0],
            &[10.0, 10.0],
        )
        .unwrap();
        assert_eq!(c.hv_diff, None);
        assert!((c.max_nearest_dist - 0.05).abs() < 1e-12);
        assert_eq!(c.reference_point, vec![2.0, 1.5]);
        assert!(compare_front_in(&[vec![1.0, 1.0]], &[vec![1.0, 1.0]], &[0.0], &[1.0]).is_none());
    }
}
