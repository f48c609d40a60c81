//! Design vectors: initial melt temperature followed by one temperature per
//! wall domain.

use serde::{Deserialize, Serialize};

/// Number of wall domains used by the default decomposition.
pub const DEFAULT_DOMAINS: usize = 10;

/// A candidate thermal design `(T_init, T_wall[0..n])` in kelvin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub t_init: f64,
    pub t_wall: Vec<f64>,
}

impl DesignPoint {
    pub fn new(t_init: f64, t_wall: Vec<f64>) -> Self {
        Self { t_init, t_wall }
    }

    /// Uniform wall temperature on `n_domains` domains.
    pub fn uniform(t_init: f64, t_wall: f64, n_domains: usize) -> Self {
        Self::new(t_init, vec![t_wall; n_domains])
    }

    /// Interprets `x[0]` as `T_init` and the rest as wall temperatures.
    pub fn from_slice(x: &[f64]) -> Self {
        assert!(!x.is_empty(), "design vector must contain T_init");
        Self::new(x[0], x[1..].to_vec())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.t_wall.len());
        v.push(self.t_init);
        v.extend_from_slice(&self.t_wall);
        v
    }

    pub fn dim(&self) -> usize {
        1 + self.t_wall.len()
    }
}

/// Axis-aligned box bounds on a design vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "bounds dimension mismatch");
        Self { lo, hi }
    }

    /// `900 <= T_init <= 1100`, `500 <= T_wall <= 700` for each domain.
    pub fn casting(n_domains: usize) -> Self {
        Self::casting_with(n_domains, (900.0, 1100.0), (500.0, 700.0))
    }

    pub fn casting_with(n_domains: usize, init: (f64, f64), wall: (f64, f64)) -> Self {
        let mut lo = vec![init.0];
        let mut hi = vec![init.1];
        lo.extend(std::iter::repeat_n(wall.0, n_domains));
        hi.extend(std::iter::repeat_n(wall.1, n_domains));
        Self::new(lo, hi)
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_valid(&self) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .all(|(l, h)| l.is_finite() && h.is_finite() && l < h)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| (v - l) / (h - l))
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (l, h))| l + v * (h - l))
            .collect()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (v, (l, h)) in x.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn casting_bounds_layout() {
        let b = Bounds::casting(10);
        assert_eq!(b.dim(), 11);
        assert_eq!(b.lo[0], 900.0);
        assert_eq!(b.hi[10], 700.0);
        assert!(b.is_valid());
    }

    #[test]
    fn normalize_round_trip() {
        let b = Bounds::casting(10);
        let x: Vec<f64> = (0..11).map(|i| b.lo[i] + 13.7 * i as f64).collect();
        let back = b.denormalize(&b.normalize(&x));
        for (a, c) in x.iter().zip(&back) {
            assert!((a - c).abs() <= 1e-12 * a.abs());
        }
    }

    #[test]
    fn design_vector_round_trip() {
        let d = DesignPoint::uniform(950.0, 600.0, 10);
        assert_eq!(d.dim(), 11);
        assert_eq!(DesignPoint::from_slice(&d.to_vec()), d);
    }
}
