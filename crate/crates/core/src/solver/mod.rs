//! Explicit finite-volume solidification solver on voxel geometries.
//!
//! The state variable is the volumetric enthalpy. Each step assembles
//! central-difference face fluxes (harmonic-mean conductivity between
//! cells, half-cell ghost flux to Dirichlet walls), advances the enthalpy
//! explicitly and recovers temperature and solid fraction by inverting
//! `h(T)`, whose slope is the apparent heat capacity `rho C_eff`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundaryFace, VoxelGeometry, WallDecomposition};
use crate::material::{EnthalpyModel, MaterialError, MaterialProperties};
use crate::scalar::Real;

/// Spatial dimension used in the explicit stability estimate.
const DIMENSIONS: f64 = 3.0;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("time step {dt} s exceeds the explicit stability limit {limit} s")]
    Unstable { dt: f64, limit: f64 },
    #[error("non-finite temperature in cell {cell} at t = {time} s")]
    NonFinite { cell: usize, time: f64 },
    #[error("step budget of {steps} exhausted at t = {time} s before full solidification")]
    StepBudget { steps: usize, time: f64 },
    #[error("invalid boundary conditions: {0}")]
    InvalidBc(String),
    #[error("geometry/decomposition mismatch: {0}")]
    Mismatch(String),
}

/// Initial melt temperature and one constant temperature per wall domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalBc<T: Real> {
    pub t_init: T,
    pub t_wall: Vec<T>,
}

impl<T: Real> ThermalBc<T> {
    pub fn new(t_init: T, t_wall: Vec<T>) -> Self {
        Self { t_init, t_wall }
    }

    pub fn uniform(t_init: T, t_wall: T, n_domains: usize) -> Self {
        Self::new(t_init, vec![t_wall; n_domains])
    }

    /// Melt above liquidus, walls below solidus, and the optional box limits
    /// `(init_lo, init_hi, wall_lo, wall_hi)`.
    pub fn validate(&self, mat: &MaterialProperties<T>, limits: Option<(T, T, T, T)>) -> Result<(), SolverError> {
        if !(self.t_init > mat.t_liquidus) {
            return Err(SolverError::InvalidBc(format!(
                "T_init {} K must exceed the liquidus {} K",
                self.t_init, mat.t_liquidus
            )));
        }
        let max_wall = self.t_wall.iter().copied().fold(T::neg_infinity(), T::max);
        if !(max_wall < mat.t_solidus) {
            return Err(SolverError::InvalidBc(format!(
                "wall temperatures must stay below the solidus {} K (max {max_wall} K)",
                mat.t_solidus
            )));
        }
        if let Some((ilo, ihi, wlo, whi)) = limits {
            if !(self.t_init >= ilo && self.t_init <= ihi) {
                return Err(SolverError::InvalidBc(format!(
                    "T_init {} K outside [{ilo}, {ihi}] K",
                    self.t_init
                )));
            }
            if self.t_wall.iter().any(|&w| !(w >= wlo && w <= whi)) {
                return Err(SolverError::InvalidBc(format!(
                    "wall temperature outside [{wlo}, {whi}] K"
                )));
            }
        }
        Ok(())
    }
}

/// Temperature, solid fraction and enthalpy per filled cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalField<T: Real> {
    pub temperature: Vec<T>,
    pub solid_fraction: Vec<T>,
    /// J/m^3
    pub enthalpy: Vec<T>,
    pub time: T,
}

impl<T: Real> ThermalField<T> {
    pub fn len(&self) -> usize {
        self.temperature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperature.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct SolverConfig<T: Real> {
    /// Solid fraction at which a cell counts as solidified.
    pub fs_done: T,
    /// Safety factor on the explicit stability estimate.
    pub cfl: T,
    pub max_steps: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            fs_done: T::lit(0.99),
            cfl: T::lit(0.4),
            max_steps: 2_000_000,
        }
    }
}

/// Per-cell solidification history summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord<T: Real> {
    /// Time at which `f_s` first reaches `fs_done`, s.
    pub solidification_time: Vec<T>,
    /// Time of the liquidus crossing, s.
    pub liquidus_time: Vec<T>,
    /// Time of the solidus crossing, s.
    pub solidus_time: Vec<T>,
    /// `(T_liq - T_sol) / (t_solidus - t_liquidus)`, K/s.
    pub mean_cooling_rate: Vec<T>,
    pub total_solidification_time: T,
    pub step_count: usize,
    pub final_time: T,
}

/// Receives the field after initialisation and after every step.
pub trait SolveObserver<T: Real> {
    fn observe(&mut self, field: &ThermalField<T>);
}

impl<T: Real> SolveObserver<T> for () {
    fn observe(&mut self, _field: &ThermalField<T>) {}
}

/// Discretised casting: filled cells, interior face pairs and wall faces.
#[derive(Debug, Clone)]
pub struct ThermalModel<T: Real> {
    cells: Vec<[usize; 3]>,
    interior: Vec<(u32, u32)>,
    walls: Vec<(u32, u32)>,
    n_domains: usize,
    insulated: Vec<bool>,
    dx: T,
    enthalpy: EnthalpyModel<T>,
}

impl<T: Real> ThermalModel<T> {
    /// `faces` and `decomp.assignment` must come from the same extraction.
    pub fn new(
        geom: &VoxelGeometry,
        faces: &[BoundaryFace],
        decomp: &WallDecomposition,
        mat: &MaterialProperties<T>,
    ) -> Result<Self, SolverError> {
        if faces.len() != decomp.assignment.len() {
            return Err(SolverError::Mismatch(format!(
                "{} faces but {} domain labels",
                faces.len(),
                decomp.assignment.len()
            )));
        }
        let enthalpy = EnthalpyModel::new(mat)?;
        let mut compact = vec![u32::MAX; geom.len()];
        let mut cells = Vec::with_capacity(geom.filled_count());
        for idx in 0..geom.len() {
            if geom.mask()[idx] {
                compact[idx] = cells.len() as u32;
                cells.push(geom.coords(idx));
            }
        }
        let [nx, ny, _] = geom.dims();
        let mut interior = Vec::new();
        for (c, cell) in cells.iter().enumerate() {
            let idx = geom.index(cell[0], cell[1], cell[2]);
            // +x, +y, +z neighbours so each pair appears once
            for (axis, stride) in [(0, 1), (1, nx), (2, nx * ny)] {
                if cell[axis] + 1 < geom.dims()[axis] {
                    let n = compact[idx + stride];
                    if n != u32::MAX {
                        interior.push((c as u32, n));
                    }
                }
            }
        }
        let mut walls = Vec::with_capacity(faces.len());
        for (f, &d) in faces.iter().zip(&decomp.assignment) {
            if d >= decomp.n_domains {
                return Err(SolverError::Mismatch(format!("domain id {d} out of range")));
            }
            let idx = geom.index(f.cell[0], f.cell[1], f.cell[2]);
            let c = compact[idx];
            if c == u32::MAX {
                return Err(SolverError::Mismatch(format!("face on empty cell {:?}", f.cell)));
            }
            walls.push((c, d as u32));
        }
        Ok(Self {
            cells,
            interior,
            walls,
            n_domains: decomp.n_domains,
            insulated: vec![false; decomp.n_domains],
            dx: T::lit(geom.spacing()),
            enthalpy,
        })
    }

    /// Zero-flux condition on every wall domain.
    pub fn with_insulated_walls(mut self) -> Self {
        self.insulated.iter_mut().for_each(|i| *i = true);
        self
    }

    /// Zero-flux condition on one domain.
    pub fn insulate_domain(mut self, domain: usize) -> Self {
        self.insulated[domain] = true;
        self
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn n_domains(&self) -> usize {
        self.n_domains
    }

    pub fn spacing(&self) -> T {
        self.dx
    }

    pub fn cell_volume(&self) -> T {
        self.dx * self.dx * self.dx
    }

    pub fn enthalpy_model(&self) -> &EnthalpyModel<T> {
        &self.enthalpy
    }

    pub fn material(&self) -> &MaterialProperties<T> {
        self.enthalpy.material()
    }

    /// Field at uniform temperature `t` (off the eutectic plateau).
    pub fn uniform_field(&self, t: T) -> ThermalField<T> {
        self.field_from_temperatures(vec![t; self.cells.len()])
    }

    pub fn field_from_temperatures(&self, temperature: Vec<T>) -> ThermalField<T> {
        assert_eq!(temperature.len(), self.cells.len());
        let mat = self.material();
        let solid_fraction = temperature.iter().map(|&t| mat.solid_fraction(t)).collect();
        let enthalpy = temperature.iter().map(|&t| self.enthalpy.enthalpy(t)).collect();
        ThermalField {
            temperature,
            solid_fraction,
            enthalpy,
            time: T::zero(),
        }
    }

    /// `sum h V`, J.
    pub fn total_enthalpy(&self, field: &ThermalField<T>) -> T {
        field.enthalpy.iter().copied().sum::<T>() * self.cell_volume()
    }

    /// Heat capacity used for time-step control; plateau cells may turn
    /// fully solid within the step, so they use the sensible value.
    fn stability_capacity(&self, t: T) -> T {
        let mat = self.material();
        if t == mat.t_solidus {
            mat.density.eval(t) * mat.specific_heat.eval(t)
        } else {
            self.enthalpy.volumetric_capacity(t)
        }
    }

    /// `cfl * min_cells rho C_eff dx^2 / (2 D k)`.
    pub fn stable_dt(&self, field: &ThermalField<T>, cfl: T) -> T {
        let mut scratch = StepScratch::default();
        self.prepare(field, &mut scratch);
        self.dt_from(&scratch, cfl)
    }

    /// Fills per-cell conductivity and step-control capacity.
    fn prepare(&self, field: &ThermalField<T>, scratch: &mut StepScratch<T>) {
        let mat = self.material();
        let n = field.temperature.len();
        scratch.resize(n);
        for c in 0..n {
            let t = field.temperature[c];
            scratch.k[c] = mat.conductivity.eval(t);
            scratch.capacity[c] = self.stability_capacity(t);
        }
    }

    fn dt_from(&self, scratch: &StepScratch<T>, cfl: T) -> T {
        let denom = T::lit(2.0 * DIMENSIONS);
        let dx2 = self.dx * self.dx;
        let min = scratch
            .capacity
            .iter()
            .zip(&scratch.k)
            .map(|(&cap, &k)| cap * dx2 / (denom * k))
            .fold(T::infinity(), T::min);
        cfl * min
    }

    /// Net heat flow into each cell (W) and each cell's total conductance
    /// (W/K) into the scratch buffers; returns the total wall heat flow.
    fn assemble(&self, field: &ThermalField<T>, bc: &ThermalBc<T>, scratch: &mut StepScratch<T>) -> T {
        let dx = self.dx;
        let two = T::lit(2.0);
        let StepScratch {
            flow, conductance, k, ..
        } = scratch;
        flow.iter_mut().for_each(|q| *q = T::zero());
        conductance.iter_mut().for_each(|g| *g = T::zero());
        for &(a, b) in &self.interior {
            let (a, b) = (a as usize, b as usize);
            let ka = k[a];
            let kb = k[b];
            let g = two * ka * kb / (ka + kb) * dx;
            let q = g * (field.temperature[b] - field.temperature[a]);
            flow[a] += q;
            flow[b] -= q;
            conductance[a] += g;
            conductance[b] += g;
        }
        let mut boundary = T::zero();
        for &(c, d) in &self.walls {
            if self.insulated[d as usize] {
                continue;
            }
            let c = c as usize;
            let g = two * k[c] * dx;
            let q = g * (bc.t_wall[d as usize] - field.temperature[c]);
            flow[c] += q;
            conductance[c] += g;
            boundary += q;
        }
        boundary
    }

    /// Advances `field` in place by `dt`; returns the wall heat input over
    /// the step (J).
    pub fn step_in_place(
        &self,
        field: &mut ThermalField<T>,
        bc: &ThermalBc<T>,
        dt: T,
        scratch: &mut StepScratch<T>,
    ) -> Result<T, SolverError> {
        if bc.t_wall.len() != self.n_domains {
            return Err(SolverError::InvalidBc(format!(
                "{} wall temperatures for {} domains",
                bc.t_wall.len(),
                self.n_domains
            )));
        }
        self.prepare(field, scratch);
        self.apply(field, bc, dt, scratch)
    }

    /// Step body once [`Self::prepare`] has filled `scratch` for `field`.
    fn apply(
        &self,
        field: &mut ThermalField<T>,
        bc: &ThermalBc<T>,
        dt: T,
        scratch: &mut StepScratch<T>,
    ) -> Result<T, SolverError> {
        let n = self.cells.len();
        let boundary = self.assemble(field, bc, scratch);
        let volume = self.cell_volume();
        let mut limit = T::infinity();
        for c in 0..n {
            if scratch.conductance[c] > T::zero() {
                limit = limit.min(scratch.capacity[c] * volume / scratch.conductance[c]);
            }
        }
        if !(dt > T::zero()) || dt > limit {
            return Err(SolverError::Unstable {
                dt: dt.to_f64_lossy(),
                limit: limit.to_f64_lossy(),
            });
        }
        let scale = dt / volume;
        for c in 0..n {
            let h = field.enthalpy[c] + scale * scratch.flow[c];
            let (t, fs) = self.enthalpy.invert(h, field.temperature[c]);
            if !t.is_finite() || !h.is_finite() {
                return Err(SolverError::NonFinite {
                    cell: c,
                    time: (field.time + dt).to_f64_lossy(),
                });
            }
            field.enthalpy[c] = h;
            field.temperature[c] = t;
            field.solid_fraction[c] = fs;
        }
        field.time += dt;
        Ok(boundary * dt)
    }

    /// Advances `field` by the stable step for `cfl`; returns that step and
    /// the wall heat input over it (J).
    pub fn step_stable(
        &self,
        field: &mut ThermalField<T>,
        bc: &ThermalBc<T>,
        cfl: T,
        scratch: &mut StepScratch<T>,
    ) -> Result<(T, T), SolverError> {
        if bc.t_wall.len() != self.n_domains {
            return Err(SolverError::InvalidBc(format!(
                "{} wall temperatures for {} domains",
                bc.t_wall.len(),
                self.n_domains
            )));
        }
        self.prepare(field, scratch);
        let dt = self.dt_from(scratch, cfl);
        let heat = self.apply(field, bc, dt, scratch)?;
        Ok((dt, heat))
    }

    /// Functional form of [`Self::step_in_place`].
    pub fn step(&self, field: &ThermalField<T>, bc: &ThermalBc<T>, dt: T) -> Result<ThermalField<T>, SolverError> {
        let mut next = field.clone();
        self.step_in_place(&mut next, bc, dt, &mut StepScratch::default())?;
        Ok(next)
    }

    /// Runs from a uniform melt at `bc.t_init` until every cell has passed
    /// the solidus and reached `fs_done`.
    pub fn solve(
        &self,
        bc: &ThermalBc<T>,
        cfg: &SolverConfig<T>,
        observer: &mut dyn SolveObserver<T>,
    ) -> Result<SolveRecord<T>, SolverError> {
        let mat = self.material().clone();
        let n = self.cells.len();
        let mut field = self.uniform_field(bc.t_init);
        observer.observe(&field);

        let nan = T::nan();
        let mut liquidus_time = vec![nan; n];
        let mut solidus_time = vec![nan; n];
        let mut solidification_time = vec![nan; n];
        for c in 0..n {
            if field.temperature[c] <= mat.t_liquidus {
                liquidus_time[c] = T::zero();
            }
            if field.temperature[c] <= mat.t_solidus {
                solidus_time[c] = T::zero();
            }
            if field.solid_fraction[c] >= cfg.fs_done {
                solidification_time[c] = T::zero();
            }
        }
        let mut pending = (0..n)
            .filter(|&c| solidus_time[c].is_nan() || solidification_time[c].is_nan())
            .count();

        let mut scratch = StepScratch::default();
        let mut prev_t = field.temperature.clone();
        let mut prev_fs = field.solid_fraction.clone();
        let mut steps = 0;
        while pending > 0 {
            if steps >= cfg.max_steps {
                return Err(SolverError::StepBudget {
                    steps,
                    time: field.time.to_f64_lossy(),
                });
            }
            let t0 = field.time;
            prev_t.copy_from_slice(&field.temperature);
            prev_fs.copy_from_slice(&field.solid_fraction);
            let (dt, _) = self.step_stable(&mut field, bc, cfg.cfl, &mut scratch)?;
            steps += 1;

            for c in 0..n {
                let was_pending = solidus_time[c].is_nan() || solidification_time[c].is_nan();
                if !was_pending {
                    continue;
                }
                let (ta, tb) = (prev_t[c], field.temperature[c]);
                if liquidus_time[c].is_nan() && tb <= mat.t_liquidus {
                    liquidus_time[c] = t0 + dt * crossing(ta, tb, mat.t_liquidus);
                }
                if solidus_time[c].is_nan() && tb <= mat.t_solidus {
                    solidus_time[c] = t0 + dt * crossing(ta, tb, mat.t_solidus);
                }
                let (fa, fb) = (prev_fs[c], field.solid_fraction[c]);
                if solidification_time[c].is_nan() && fb >= cfg.fs_done {
                    // fraction rises, so cross on the negated values
                    solidification_time[c] = t0 + dt * crossing(-fa, -fb, -cfg.fs_done);
                }
                if !(solidus_time[c].is_nan() || solidification_time[c].is_nan()) {
                    pending -= 1;
                }
            }
            observer.observe(&field);
        }

        let span = mat.t_liquidus - mat.t_solidus;
        let mean_cooling_rate = liquidus_time
            .iter()
            .zip(&solidus_time)
            .map(|(&tl, &ts)| span / (ts - tl))
            .collect();
        let total = solidification_time.iter().copied().fold(T::zero(), T::max);
        Ok(SolveRecord {
            solidification_time,
            liquidus_time,
            solidus_time,
            mean_cooling_rate,
            total_solidification_time: total,
            step_count: steps,
            final_time: field.time,
        })
    }
}

/// Fraction of the step at which a decreasing value passes `level`.
fn crossing<T: Real>(before: T, after: T, level: T) -> T {
    if before <= level {
        return T::zero();
    }
    let w = (before - level) / (before - after);
    w.min(T::one()).max(T::zero())
}

/// Reusable per-step buffers.
#[derive(Debug, Clone, Default)]
pub struct StepScratch<T: Real> {
    flow: Vec<T>,
    conductance: Vec<T>,
    k: Vec<T>,
    capacity: Vec<T>,
}

impl<T: Real> StepScratch<T> {
    fn resize(&mut self, n: usize) {
        self.flow.resize(n, T::zero());
        self.conductance.resize(n, T::zero());
        self.k.resize(n, T::zero());
        self.capacity.resize(n, T::zero());
    }
}
