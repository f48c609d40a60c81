//! Empirical microstructure laws and reduction to scalar objectives.
//!
//! SDAS follows a power law in the mean cooling rate, yield strength a
//! Hall-Petch style law in SDAS, and grain size comes from integrating the
//! invariant-size growth model over each cell's solid-fraction history.
//!
//! Growth is integrated on `s = r^2`, where `ds/dt = lambda_s^2 D_s` does not
//! depend on `r`; the midpoint rule then evaluates `lambda_s` at the mean
//! solid fraction of each solver step.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::material::MaterialProperties;
use crate::scalar::Real;
use crate::solver::{SolveObserver, SolveRecord, SolverConfig, SolverError, ThermalBc, ThermalField, ThermalModel};

#[derive(Debug, Error, PartialEq)]
pub enum MicroError {
    #[error("cooling rate must be positive, got {0}")]
    CoolingRate(f64),
    #[error("SDAS must be positive, got {0}")]
    Sdas(f64),
    #[error("invalid microstructure constants: {0}")]
    Constants(String),
    #[error("empty cell set")]
    Empty,
    #[error("field length mismatch: {0} vs {1}")]
    Mismatch(usize, usize),
    #[error("solid-fraction history not ordered at sample {0}")]
    History(usize),
}

/// Constants of the SDAS, yield and grain-growth laws. `d_s` and `r0` are SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MicroConstants<T: Real> {
    pub a_lambda: T,
    pub b_lambda: T,
    /// MPa·μm^(1/2)
    pub a_sigma: T,
    /// MPa
    pub b_sigma: T,
    /// m²/s
    pub d_s: T,
    /// wt%
    pub c0: T,
    /// m
    pub r0: T,
}

impl<T: Real> Default for MicroConstants<T> {
    fn default() -> Self {
        Self {
            a_lambda: T::lit(44.6),
            b_lambda: T::lit(-0.359),
            a_sigma: T::lit(59.0),
            b_sigma: T::lit(120.3),
            d_s: T::lit(3e-9),
            c0: T::lit(7.0),
            r0: T::lit(1e-6),
        }
    }
}

impl<T: Real> MicroConstants<T> {
    pub fn validate(&self) -> Result<(), MicroError> {
        let bad = |what: &str| Err(MicroError::Constants(what.to_string()));
        if !(self.a_lambda > T::zero()) {
            return bad("a_lambda must be positive");
        }
        if !(self.b_lambda < T::zero()) {
            return bad("b_lambda must be negative");
        }
        if !(self.a_sigma > T::zero()) {
            return bad("a_sigma must be positive");
        }
        if !self.b_sigma.is_finite() {
            return bad("b_sigma must be finite");
        }
        // zero diffusivity is allowed: it freezes grain size at r0
        if !(self.d_s >= T::zero()) || !self.d_s.is_finite() {
            return bad("d_s must be non-negative");
        }
        if !(self.c0 > T::zero()) {
            return bad("c0 must be positive");
        }
        if !(self.r0 > T::zero()) {
            return bad("r0 must be positive");
        }
        Ok(())
    }
}

/// Secondary dendrite arm spacing in μm for a cooling rate in K/s.
pub fn sdas<T: Real>(cooling_rate: T, c: &MicroConstants<T>) -> Result<T, MicroError> {
    if !(cooling_rate > T::zero()) || !cooling_rate.is_finite() {
        return Err(MicroError::CoolingRate(cooling_rate.to_f64_lossy()));
    }
    Ok(c.a_lambda * cooling_rate.powf(c.b_lambda))
}

/// 0.2% yield strength in MPa for an SDAS in μm.
pub fn yield_strength<T: Real>(sdas_um: T, c: &MicroConstants<T>) -> Result<T, MicroError> {
    if !(sdas_um > T::zero()) || !sdas_um.is_finite() {
        return Err(MicroError::Sdas(sdas_um.to_f64_lossy()));
    }
    Ok(c.a_sigma / sdas_um.sqrt() + c.b_sigma)
}

/// Interface state of the growth model at one solid fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrainState<T: Real> {
    /// Grain radius, μm.
    pub r: T,
    /// Invariant-size parameter; 0 where the model has no real root.
    pub lambda_s: T,
    pub s: T,
    pub c_l: T,
    pub c_s: T,
    /// The square root in the invariant-size formula had a negative argument.
    pub clamped: bool,
}

/// `S = 2(C_s - C_0)/(C_s - C_l)` in a form that stays finite as `f_s -> 1`.
pub fn supersaturation<T: Real>(fs: T, kp: T) -> T {
    let two = T::lit(2.0);
    two * (kp - (T::one() - fs).powf(T::one() - kp)) / (kp - T::one())
}

/// Invariant-size root for `S`, or `None` when `S^2/(4 pi) - S < 0`.
pub fn lambda_s<T: Real>(s: T) -> Option<T> {
    let pi = T::lit(std::f64::consts::PI);
    let radicand = s * s / (T::lit(4.0) * pi) - s;
    if radicand < T::zero() {
        return None;
    }
    let lam = -s / (T::lit(2.0) * pi.sqrt()) + radicand.sqrt();
    Some(lam.max(T::zero()))
}

/// Growth-model state at solid fraction `fs` for a grain of radius `r_um`.
pub fn grain_state<T: Real>(fs: T, r_um: T, kp: T, c: &MicroConstants<T>) -> GrainState<T> {
    let c_l = c.c0 * (T::one() - fs).powf(kp - T::one());
    let c_s = kp * c_l;
    let s = supersaturation(fs, kp);
    let root = lambda_s(s);
    GrainState {
        r: r_um,
        lambda_s: root.unwrap_or(T::zero()),
        s,
        c_l,
        c_s,
        clamped: root.is_none(),
    }
}

/// Squared grain radius advanced by `ds/dt = lambda^2 D_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusIntegrator<T: Real> {
    r2: T,
    d_s: T,
}

impl<T: Real> RadiusIntegrator<T> {
    pub fn new(r0: T, d_s: T) -> Self {
        Self { r2: r0 * r0, d_s }
    }

    /// One step of length `dt` with `lambda` taken at the step midpoint.
    pub fn advance(&mut self, dt: T, lambda_mid: T) {
        self.r2 += dt * lambda_mid * lambda_mid * self.d_s;
    }

    /// Radius in metres.
    pub fn radius(&self) -> T {
        self.r2.sqrt()
    }
}

/// Final grain size of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrainOutcome<T: Real> {
    /// μm
    pub size: T,
    /// Steps during which the invariant-size root was clamped to zero.
    pub clamped_steps: usize,
}

/// Per-cell grain-growth integration fed one solver step at a time.
#[derive(Debug, Clone)]
pub struct GrainIntegrator<T: Real> {
    kp: T,
    fs_done: T,
    radius: Vec<RadiusIntegrator<T>>,
    clamped: Vec<usize>,
    prev_fs: Vec<T>,
    prev_time: Option<T>,
}

impl<T: Real> GrainIntegrator<T> {
    pub fn new(cells: usize, kp: T, fs_done: T, consts: MicroConstants<T>) -> Self {
        Self {
            radius: vec![RadiusIntegrator::new(consts.r0, consts.d_s); cells],
            clamped: vec![0; cells],
            prev_fs: vec![T::zero(); cells],
            prev_time: None,
            kp,
            fs_done,
        }
    }

    /// Feeds the solid fractions at time `t`. The first call only records
    /// the starting state.
    pub fn push(&mut self, t: T, fs: &[T]) {
        assert_eq!(fs.len(), self.radius.len(), "cell count mismatch");
        let Some(t_prev) = self.prev_time.replace(t) else {
            self.prev_fs.copy_from_slice(fs);
            return;
        };
        let dt = t - t_prev;
        for c in 0..fs.len() {
            let fa = self.prev_fs[c];
            let fb = fs[c];
            self.prev_fs[c] = fb;
            if let Some((w, fb)) = growth_window(fa, fb, self.fs_done) {
                let mid = T::lit(0.5) * (fa + fb);
                match lambda_s(supersaturation(mid, self.kp)) {
                    Some(lam) => self.radius[c].advance(dt * w, lam),
                    None => self.clamped[c] += 1,
                }
            }
        }
    }

    pub fn outcomes(&self) -> Vec<GrainOutcome<T>> {
        self.radius
            .iter()
            .zip(&self.clamped)
            .map(|(r, &n)| GrainOutcome {
                size: r.radius() * T::lit(1e6),
                clamped_steps: n,
            })
            .collect()
    }

    /// Grain sizes in μm.
    pub fn sizes(&self) -> Vec<T> {
        self.radius.iter().map(|r| r.radius() * T::lit(1e6)).collect()
    }

    pub fn flagged_cells(&self) -> usize {
        self.clamped.iter().filter(|&&n| n > 0).count()
    }
}

impl<T: Real> SolveObserver<T> for GrainIntegrator<T> {
    fn observe(&mut self, field: &ThermalField<T>) {
        self.push(field.time, &field.solid_fraction);
    }
}

/// Portion of a step over which the grain grows and the solid fraction at
/// its end: growth runs while `0 < f_s` and stops once `fs_done` is reached.
fn growth_window<T: Real>(fa: T, fb: T, fs_done: T) -> Option<(T, T)> {
    if fa >= fs_done || fb <= T::zero() {
        return None;
    }
    if fb > fs_done {
        Some(((fs_done - fa) / (fb - fa), fs_done))
    } else {
        Some((T::one(), fb))
    }
}

/// Grain size from a recorded `(t, f_s)` history of one cell.
pub fn grain_growth<T: Real>(
    history: &[(T, T)],
    kp: T,
    fs_done: T,
    c: &MicroConstants<T>,
) -> Result<GrainOutcome<T>, MicroError> {
    c.validate()?;
    for (n, w) in history.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
            return Err(MicroError::History(n + 1));
        }
    }
    let mut integ = GrainIntegrator::new(1, kp, fs_done, *c);
    for &(t, fs) in history {
        integ.push(t, &[fs]);
    }
    Ok(integ.outcomes()[0])
}

/// Objectives to minimise: solidification time, largest grain and negated
/// weakest yield strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTriple<T: Real> {
    /// s
    pub f1: T,
    /// μm
    pub f2: T,
    /// -MPa
    pub f3: T,
}

impl<T: Real> ObjectiveTriple<T> {
    pub fn new(f1: T, f2: T, f3: T) -> Self {
        Self { f1, f2, f3 }
    }

    pub fn to_array(self) -> [T; 3] {
        [self.f1, self.f2, self.f3]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Index of the largest grain and of the weakest cell.
pub fn extreme_cells<T: Real>(grain: &[T], yield_mpa: &[T]) -> Result<(usize, usize), MicroError> {
    if grain.is_empty() {
        return Err(MicroError::Empty);
    }
    if grain.len() != yield_mpa.len() {
        return Err(MicroError::Mismatch(grain.len(), yield_mpa.len()));
    }
    let mut max_grain = 0;
    let mut min_yield = 0;
    for c in 1..grain.len() {
        if grain[c] > grain[max_grain] {
            max_grain = c;
        }
        if yield_mpa[c] < yield_mpa[min_yield] {
            min_yield = c;
        }
    }
    Ok((max_grain, min_yield))
}

pub fn reduce_objectives<T: Real>(
    record: &SolveRecord<T>,
    grain: &[T],
    yield_mpa: &[T],
) -> Result<ObjectiveTriple<T>, MicroError> {
    if record.solidification_time.len() != grain.len() {
        return Err(MicroError::Mismatch(record.solidification_time.len(), grain.len()));
    }
    let (g, y) = extreme_cells(grain, yield_mpa)?;
    Ok(ObjectiveTriple::new(
        record.total_solidification_time,
        grain[g],
        -yield_mpa[y],
    ))
}

/// Per-cell microstructure fields.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroFields<T: Real> {
    pub sdas: Vec<T>,
    pub yield_strength: Vec<T>,
    pub grain_size: Vec<T>,
}

impl<T: Real> MicroFields<T> {
    pub fn from_record(record: &SolveRecord<T>, grain_size: Vec<T>, c: &MicroConstants<T>) -> Result<Self, MicroError> {
        if record.mean_cooling_rate.len() != grain_size.len() {
            return Err(MicroError::Mismatch(record.mean_cooling_rate.len(), grain_size.len()));
        }
        let sdas = record
            .mean_cooling_rate
            .iter()
            .map(|&rate| sdas(rate, c))
            .collect::<Result<Vec<_>, _>>()?;
        let yield_strength = sdas
            .iter()
            .map(|&l| yield_strength(l, c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            sdas,
            yield_strength,
            grain_size,
        })
    }

    /// CSV with header `i,j,k,sdas_um,yield_mpa,grain_um`.
    pub fn to_csv(&self, cells: &[[usize; 3]]) -> String {
        let mut out = String::from("i,j,k,sdas_um,yield_mpa,grain_um\n");
        for (n, [i, j, k]) in cells.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{j},{k},{},{},{}",
                self.sdas[n], self.yield_strength[n], self.grain_size[n]
            );
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Micro(#[from] MicroError),
}

/// Solver record, microstructure fields and objectives of one design.
#[derive(Debug, Clone)]
pub struct SimulationResult<T: Real> {
    pub record: SolveRecord<T>,
    pub fields: MicroFields<T>,
    pub objectives: ObjectiveTriple<T>,
    pub max_grain_cell: usize,
    pub min_yield_cell: usize,
    /// Cells whose growth root was clamped at least once.
    pub flagged_cells: usize,
}

/// Runs the solver for `bc` and reduces the result to objectives.
pub fn simulate<T: Real>(
    model: &ThermalModel<T>,
    bc: &ThermalBc<T>,
    cfg: &SolverConfig<T>,
    c: &MicroConstants<T>,
) -> Result<SimulationResult<T>, SimulationError> {
    c.validate()?;
    let mat: &MaterialProperties<T> = model.material();
    let mut grains = GrainIntegrator::new(model.cell_count(), mat.partition_coeff, cfg.fs_done, *c);
    let record = model.solve(bc, cfg, &mut grains)?;
    let fields = MicroFields::from_record(&record, grains.sizes(), c)?;
    let objectives = reduce_objectives(&record, &fields.grain_size, &fields.yield_strength)?;
    let (max_grain_cell, min_yield_cell) = extreme_cells(&fields.grain_size, &fields.yield_strength)?;
    Ok(SimulationResult {
        record,
        fields,
        objectives,
        max_grain_cell,
        min_yield_cell,
        flagged_cells: grains.flagged_cells(),
    })
}
