use rand::Rng as _;

use super::{BoundaryFace, GeometryError};
use crate::rng;

pub const MAX_KMEANS_ITERS: usize = 300;

/// Independent k-means++ restarts; the lowest-inertia run wins.
pub const KMEANS_RESTARTS: usize = 10;

/// Result of a k-means run on 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f64; 3]>,
    /// Inertia after each Lloyd iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

/// Boundary faces grouped into wall-temperature domains.
#[derive(Debug, Clone, PartialEq)]
pub struct WallDecomposition {
    pub n_domains: usize,
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f64; 3]>,
    pub inertia: f64,
}

impl WallDecomposition {
    /// Copies `faces` with their domain ids filled in.
    pub fn label(&self, faces: &[BoundaryFace]) -> Vec<BoundaryFace> {
        faces
            .iter()
            .zip(&self.assignment)
            .map(|(f, &d)| BoundaryFace { domain: d, ..*f })
            .collect()
    }

    pub fn domain_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_domains];
        for &d in &self.assignment {
            sizes[d] += 1;
        }
        sizes
    }

    /// CSV with header `face_index,cell_i,cell_j,cell_k,normal,cx,cy,cz,domain_id`.
    pub fn to_csv(&self, faces: &[BoundaryFace]) -> String {
        let mut out = String::from("face_index,cell_i,cell_j,cell_k,normal,cx,cy,cz,domain_id\n");
        for (n, (f, d)) in faces.iter().zip(&self.assignment).enumerate() {
            out.push_str(&format!(
                "{n},{},{},{},{},{},{},{},{d}\n",
                f.cell[0], f.cell[1], f.cell[2], f.normal, f.centroid[0], f.centroid[1], f.centroid[2]
            ));
        }
        out
    }
}

/// Clusters face centroids into `n_domains` spatial domains.
pub fn decompose_wall(faces: &[BoundaryFace], n_domains: usize, seed: u64) -> Result<WallDecomposition, GeometryError> {
    if n_domains == 0 || faces.len() < n_domains {
        return Err(GeometryError::TooFewFaces {
            faces: faces.len(),
            domains: n_domains,
        });
    }
    let points: Vec<[f64; 3]> = faces.iter().map(|f| f.centroid).collect();
    let fit = kmeans_restarts(&points, n_domains, seed, MAX_KMEANS_ITERS, KMEANS_RESTARTS);
    Ok(WallDecomposition {
        n_domains,
        inertia: fit.inertia(),
        assignment: fit.assignment,
        centroids: fit.centroids,
    })
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn nearest(p: &[f64; 3], centroids: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[[f64; 3]], k: usize, rng: &mut rng::Rng) -> Vec<[f64; 3]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all points coincide with chosen centroids
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
    }
    centroids
}

fn update_centroids(points: &[[f64; 3]], assignment: &mut [usize], centroids: &mut [[f64; 3]]) {
    let k = centroids.len();
    let mut sums = vec![[0.0f64; 3]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment.iter()) {
        for d in 0..3 {
            sums[a][d] += p[d];
        }
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            centroids[c] = [sums[c][0] / n, sums[c][1] / n, sums[c][2] / n];
        }
    }
    // empty clusters take the point farthest from its centroid
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = points
            .iter()
            .enumerate()
            .filter(|(i, _)| counts[assignment[*i]] > 1)
            .map(|(i, p)| (i, dist2(p, &centroids[assignment[i]])))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        if let Some((far, _)) = far {
            counts[assignment[far]] -= 1;
            counts[c] = 1;
            assignment[far] = c;
            centroids[c] = points[far];
        }
    }
}

/// k-means++ seeding followed by Lloyd iterations until no assignment
/// changes or `max_iters` is reached. Empty clusters are moved onto the
/// point farthest from its current centroid.
pub fn kmeans(points: &[[f64; 3]], k: usize, seed: u64, max_iters: usize) -> KMeansFit {
    assert!(k >= 1 && points.len() >= k, "need at least k points");
    let mut rng = rng::seeded(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut inertia_history = Vec::new();
    let mut iterations = 0;

    let mut changed = true;
    while changed && iterations < max_iters {
        update_centroids(points, &mut assignment, &mut centroids);
        inertia_history.push(
            points
                .iter()
                .zip(&assignment)
                .map(|(p, &a)| dist2(p, &centroids[a]))
                .sum(),
        );
        iterations += 1;

        changed = false;
        for (p, a) in points.iter().zip(assignment.iter_mut()) {
            let (best, best_d) = nearest(p, &centroids);
            // keep the current cluster on exact ties
            if best != *a && best_d < dist2(p, &centroids[*a]) {
                *a = best;
                changed = true;
            }
        }
    }
    if changed {
        // iteration cap hit mid-flight: restore non-empty clusters
        update_centroids(points, &mut assignment, &mut centroids);
    }

    KMeansFit {
        assignment,
        centroids,
        inertia_history,
        iterations,
    }
}

/// Best of `restarts` runs of [`kmeans`], each seeded from its own stream of
/// `seed`. Ties keep the earliest run.
pub fn kmeans_restarts(points: &[[f64; 3]], k: usize, seed: u64, max_iters: usize, restarts: usize) -> KMeansFit {
    let mut best: Option<KMeansFit> = None;
    for run in 0..restarts.max(1) {
        let run_seed = rng::derive(seed, run as u64).random::<u64>();
        let fit = kmeans(points, k, run_seed, max_iters);
        if best.as_ref().is_none_or(|b| fit.inertia() < b.inertia()) {
            best = Some(fit);
        }
    }
    best.expect("at least one run")
}
