//! Alloy properties, the Gulliver-Scheil solid fraction and the volumetric
//! enthalpy used by the solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("temperature {t} K outside table range [{lo}, {hi}] K")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("invalid property table: {0}")]
    InvalidTable(String),
    #[error("invalid material: {0}")]
    Invalid(String),
}

/// Piecewise-linear property of temperature. A single knot is a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TableRepr<T>", into = "TableRepr<T>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct PropertyTable<T: Real> {
    knots: Vec<(T, T)>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TableRepr<T> {
    Constant(T),
    Table(Vec<(T, T)>),
}

impl<T: Real> From<TableRepr<T>> for PropertyTable<T> {
    fn from(r: TableRepr<T>) -> Self {
        match r {
            TableRepr::Constant(v) => Self::constant(v),
            TableRepr::Table(knots) => Self { knots },
        }
    }
}

impl<T: Real> From<PropertyTable<T>> for TableRepr<T> {
    fn from(t: PropertyTable<T>) -> Self {
        if t.knots.len() == 1 {
            TableRepr::Constant(t.knots[0].1)
        } else {
            TableRepr::Table(t.knots)
        }
    }
}

impl<T: Real> PropertyTable<T> {
    pub fn constant(value: T) -> Self {
        Self {
            knots: vec![(T::zero(), value)],
        }
    }

    /// Knots must have strictly increasing temperatures.
    pub fn new(knots: Vec<(T, T)>) -> Result<Self, MaterialError> {
        let t = Self { knots };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), MaterialError> {
        if self.knots.is_empty() {
            return Err(MaterialError::InvalidTable("no knots".into()));
        }
        if self.knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(MaterialError::InvalidTable("non-finite knot".into()));
        }
        if self.knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(MaterialError::InvalidTable(
                "knot temperatures must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn knots(&self) -> &[(T, T)] {
        &self.knots
    }

    pub fn is_constant(&self) -> bool {
        self.knots.len() == 1
    }

    /// Temperature range covered, `None` for a constant.
    pub fn range(&self) -> Option<(T, T)> {
        if self.is_constant() {
            None
        } else {
            Some((self.knots[0].0, self.knots[self.knots.len() - 1].0))
        }
    }

    pub fn min_value(&self) -> T {
        self.knots.iter().map(|k| k.1).fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.knots.iter().map(|k| k.1).fold(T::neg_infinity(), T::max)
    }

    /// Linear interpolation; errors outside the knot range.
    pub fn interpolate(&self, t: T) -> Result<T, MaterialError> {
        if let Some((lo, hi)) = self.range() {
            if !(t >= lo && t <= hi) {
                return Err(MaterialError::OutOfRange {
                    t: t.to_f64_lossy(),
                    lo: lo.to_f64_lossy(),
                    hi: hi.to_f64_lossy(),
                });
            }
        }
        Ok(self.eval(t))
    }

    /// Linear interpolation with constant extension past the end knots.
    pub fn eval(&self, t: T) -> T {
        let k = &self.knots;
        if k.len() == 1 || t <= k[0].0 {
            return k[0].1;
        }
        let last = k.len() - 1;
        if t >= k[last].0 {
            return k[last].1;
        }
        let i = k.partition_point(|knot| knot.0 <= t);
        let (t0, v0) = k[i - 1];
        let (t1, v1) = k[i];
        if t == t0 {
            return v0;
        }
        let w = (t - t0) / (t1 - t0);
        v0 + w * (v1 - v0)
    }
}

/// Interpolates a property table at `t`.
pub fn interpolate_property<T: Real>(table: &PropertyTable<T>, t: T) -> Result<T, MaterialError> {
    table.interpolate(t)
}

/// Thermophysical and solidification properties of a binary alloy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct MaterialProperties<T: Real> {
    /// kg/m^3
    pub density: PropertyTable<T>,
    /// J/(kg K)
    pub specific_heat: PropertyTable<T>,
    /// W/(m K)
    pub conductivity: PropertyTable<T>,
    /// J/kg
    pub latent_heat: T,
    pub partition_coeff: T,
    pub t_freeze: T,
    pub t_liquidus: T,
    pub t_solidus: T,
}

impl<T: Real> Default for MaterialProperties<T> {
    /// Generic Al-Si alloy.
    fn default() -> Self {
        Self {
            density: PropertyTable::constant(T::lit(2500.0)),
            specific_heat: PropertyTable::constant(T::lit(1000.0)),
            conductivity: PropertyTable::constant(T::lit(150.0)),
            latent_heat: T::lit(4.0e5),
            partition_coeff: T::lit(0.13),
            t_freeze: T::lit(933.0),
            t_liquidus: T::lit(893.0),
            t_solidus: T::lit(830.0),
        }
    }
}

impl<T: Real> MaterialProperties<T> {
    pub fn validate(&self) -> Result<(), MaterialError> {
        for (name, table) in [
            ("density", &self.density),
            ("specific_heat", &self.specific_heat),
            ("conductivity", &self.conductivity),
        ] {
            table.validate()?;
            if !(table.min_value() > T::zero()) {
                return Err(MaterialError::Invalid(format!("{name} must be positive")));
            }
        }
        if !(self.latent_heat > T::zero()) {
            return Err(MaterialError::Invalid("latent heat must be positive".into()));
        }
        let kp = self.partition_coeff;
        if !(kp > T::zero() && kp < T::one()) {
            return Err(MaterialError::Invalid(
                "partition coefficient must lie in (0, 1)".into(),
            ));
        }
        if !(self.t_solidus < self.t_liquidus && self.t_liquidus < self.t_freeze) {
            return Err(MaterialError::Invalid("require T_sol < T_liq < T_f".into()));
        }
        Ok(())
    }

    /// Checks that every table covers `[T_sol - 100, t_max + 50]`.
    pub fn check_coverage(&self, t_max: T) -> Result<(), MaterialError> {
        let lo = self.t_solidus - T::lit(100.0);
        let hi = t_max + T::lit(50.0);
        for table in [&self.density, &self.specific_heat, &self.conductivity] {
            if let Some((a, b)) = table.range() {
                if a > lo || b < hi {
                    return Err(MaterialError::InvalidTable(format!(
                        "table [{a}, {b}] K does not cover [{lo}, {hi}] K"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Gulliver-Scheil solid fraction.
    pub fn solid_fraction(&self, t: T) -> T {
        fs_of_t(t, self)
    }

    /// `d f_s / dT` on the mushy interval, zero elsewhere.
    pub fn solid_fraction_slope(&self, t: T) -> T {
        if t > self.t_liquidus || t < self.t_solidus {
            return T::zero();
        }
        let span = self.t_liquidus - self.t_freeze;
        let p = T::one() / (self.partition_coeff - T::one());
        let x = (t - self.t_freeze) / span;
        -p * x.powf(p - T::one()) / span
    }

    /// `C_p + L_f (-d f_s/dT)`, J/(kg K).
    pub fn apparent_heat_capacity(&self, t: T) -> T {
        self.specific_heat.eval(t) - self.latent_heat * self.solid_fraction_slope(t)
    }
}

/// Gulliver-Scheil relation: 0 above liquidus, 1 below solidus, otherwise
/// `1 - ((T - T_f)/(T_liq - T_f))^(1/(k_p - 1))`.
///
/// Evaluated as `-expm1(p * ln_1p(u))` with `u = (T - T_liq)/(T_liq - T_f)`
/// so small solid fractions keep full relative precision.
pub fn fs_of_t<T: Real>(t: T, mat: &MaterialProperties<T>) -> T {
    if t > mat.t_liquidus {
        return T::zero();
    }
    if t < mat.t_solidus {
        return T::one();
    }
    let u = (t - mat.t_liquidus) / (mat.t_liquidus - mat.t_freeze);
    let p = T::one() / (mat.partition_coeff - T::one());
    -(p * u.ln_1p()).exp_m1()
}

/// Volumetric enthalpy `h(T) = int rho c_p dT + rho_L L_f (1 - f_s(T))` and
/// its inverse. `rho_L` is the density at the liquidus.
///
/// `h` jumps at the solidus by the eutectic remainder
/// `rho_L L_f (1 - f_s(T_sol^+))`; states inside the jump sit on a plateau
/// at `T_sol` with the solid fraction given by the lever on `h`.
#[derive(Debug, Clone)]
pub struct EnthalpyModel<T: Real> {
    mat: MaterialProperties<T>,
    knots: Vec<T>,
    cumulative: Vec<T>,
    latent_volumetric: T,
    h_solid_at_solidus: T,
    h_plateau_top: T,
    h_liquidus: T,
    /// `rho c_p` when both tables are constant.
    constant_rho_cp: Option<T>,
}

impl<T: Real> EnthalpyModel<T> {
    pub fn new(mat: &MaterialProperties<T>) -> Result<Self, MaterialError> {
        mat.validate()?;
        let mut knots: Vec<T> = [&mat.density, &mat.specific_heat]
            .into_iter()
            .filter(|t| !t.is_constant())
            .flat_map(|t| t.knots().iter().map(|k| k.0))
            .collect();
        knots.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
        knots.dedup();
        if knots.is_empty() {
            knots.push(T::zero());
        }
        let rho_cp = |t: T| mat.density.eval(t) * mat.specific_heat.eval(t);
        let mut cumulative = vec![T::zero()];
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let m = T::lit(0.5) * (a + b);
            let seg = (b - a) / T::lit(6.0) * (rho_cp(a) + T::lit(4.0) * rho_cp(m) + rho_cp(b));
            let prev = *cumulative.last().unwrap();
            cumulative.push(prev + seg);
        }
        let latent_volumetric = mat.density.eval(mat.t_liquidus) * mat.latent_heat;
        let mut model = Self {
            mat: mat.clone(),
            knots,
            cumulative,
            latent_volumetric,
            h_solid_at_solidus: T::zero(),
            h_plateau_top: T::zero(),
            h_liquidus: T::zero(),
            constant_rho_cp: (mat.density.is_constant() && mat.specific_heat.is_constant()).then(|| rho_cp(T::zero())),
        };
        let s_sol = model.sensible(mat.t_solidus);
        model.h_solid_at_solidus = s_sol;
        model.h_plateau_top = s_sol + latent_volumetric * (T::one() - fs_of_t(mat.t_solidus, mat));
        model.h_liquidus = model.sensible(mat.t_liquidus) + latent_volumetric;
        Ok(model)
    }

    pub fn material(&self) -> &MaterialProperties<T> {
        &self.mat
    }

    /// `rho_L L_f`, J/m^3.
    pub fn latent_volumetric(&self) -> T {
        self.latent_volumetric
    }

    /// `int_{T_ref}^{T} rho c_p dT`, exact for piecewise-linear tables.
    pub fn sensible(&self, t: T) -> T {
        if let Some(c) = self.constant_rho_cp {
            return c * (t - self.knots[0]);
        }
        let rho_cp = |x: T| self.mat.density.eval(x) * self.mat.specific_heat.eval(x);
        let k = &self.knots;
        let i = k.partition_point(|&x| x <= t).max(1) - 1;
        let a = k[i];
        let m = T::lit(0.5) * (a + t);
        let partial = (t - a) / T::lit(6.0) * (rho_cp(a) + T::lit(4.0) * rho_cp(m) + rho_cp(t));
        self.cumulative[i] + partial
    }

    /// Enthalpy of a state with temperature `t` off the eutectic plateau.
    pub fn enthalpy(&self, t: T) -> T {
        self.sensible(t) + self.latent_volumetric * (T::one() - fs_of_t(t, &self.mat))
    }

    /// `dh/dT = rho C_eff`.
    pub fn volumetric_capacity(&self, t: T) -> T {
        self.mat.density.eval(t) * self.mat.specific_heat.eval(t)
            - self.latent_volumetric * self.mat.solid_fraction_slope(t)
    }

    /// Enthalpy interval of the eutectic plateau at `T_sol`.
    pub fn plateau(&self) -> (T, T) {
        (self.h_solid_at_solidus, self.h_plateau_top)
    }

    /// Temperature and solid fraction of a state with enthalpy `h`.
    /// `guess` seeds the Newton iteration.
    pub fn invert(&self, h: T, guess: T) -> (T, T) {
        let mat = &self.mat;
        let lat = self.latent_volumetric;
        if h >= self.h_liquidus {
            let target = h - lat;
            let t = self.solve_sensible(target, mat.t_liquidus, guess, true);
            return (t, T::zero());
        }
        if h < self.h_solid_at_solidus {
            let t = self.solve_sensible(h, mat.t_solidus, guess, false);
            return (t, T::one());
        }
        if h <= self.h_plateau_top {
            let fs = T::one() - (h - self.h_solid_at_solidus) / lat;
            return (mat.t_solidus, fs);
        }
        // mushy: monotone g(T) = h(T) - h on (T_sol, T_liq)
        let g = |t: T| self.enthalpy(t) - h;
        let t = newton_bracketed(g, |t| self.volumetric_capacity(t), mat.t_solidus, mat.t_liquidus, guess);
        (t, fs_of_t(t, mat))
    }

    /// Solves `sensible(T) = target` on the liquid (`above`) or solid side of `edge`.
    fn solve_sensible(&self, target: T, edge: T, guess: T, above: bool) -> T {
        if let Some(c) = self.constant_rho_cp {
            let t = self.knots[0] + target / c;
            return if above { t.max(edge) } else { t.min(edge) };
        }
        let g = |t: T| self.sensible(t) - target;
        let dg = |t: T| self.mat.density.eval(t) * self.mat.specific_heat.eval(t);
        // unguarded Newton from the previous temperature usually converges in
        // two or three steps; anything odd falls through to the bracket
        let side = |t: T| if above { t >= edge } else { t <= edge };
        if side(guess) {
            let tol = T::lit(4.0) * T::epsilon();
            let mut t = guess;
            for _ in 0..8 {
                let next = t - g(t) / dg(t);
                if !next.is_finite() || !side(next) {
                    break;
                }
                if (next - t).abs() <= tol * t.abs().max(T::one()) {
                    return next;
                }
                t = next;
            }
        }
        let mut width = T::lit(64.0);
        let (lo, hi) = loop {
            let (lo, hi) = if above {
                (edge, edge + width)
            } else {
                (edge - width, edge)
            };
            if (above && g(hi) >= T::zero()) || (!above && g(lo) <= T::zero()) {
                break (lo, hi);
            }
            width *= T::lit(4.0);
        };
        newton_bracketed(g, dg, lo, hi, guess)
    }
}

/// Newton iteration for an increasing `f` with a sign change on `[lo, hi]`,
/// falling back to bisection when a step leaves the bracket.
fn newton_bracketed<T: Real>(f: impl Fn(T) -> T, df: impl Fn(T) -> T, mut lo: T, mut hi: T, guess: T) -> T {
    let mut t = if guess > lo && guess < hi {
        guess
    } else {
        T::lit(0.5) * (lo + hi)
    };
    let tol = T::lit(4.0) * T::epsilon();
    for _ in 0..200 {
        let v = f(t);
        if v == T::zero() {
            return t;
        }
        if v > T::zero() {
            hi = t;
        } else {
            lo = t;
        }
        let d = df(t);
        let mut next = t - v / d;
        // a step below rounding lands on `t` itself, outside the open bracket
        if (next - t).abs() <= tol * t.abs().max(T::one()) {
            return next;
        }
        if !(next > lo && next < hi) || !next.is_finite() {
            next = T::lit(0.5) * (lo + hi);
        }
        if hi - lo <= tol * hi.abs().max(T::one()) {
            return next;
        }
        t = next;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat() -> MaterialProperties<f64> {
        MaterialProperties::default()
    }

    #[test]
    fn scheil_limits() {
        let m = mat();
        assert_eq!(fs_of_t(m.t_liquidus + 1.0, &m), 0.0);
        assert_eq!(fs_of_t(m.t_solidus - 1.0, &m), 1.0);
        assert_eq!(fs_of_t(m.t_liquidus, &m), 0.0);
    }

    #[test]
    fn scheil_is_monotone_on_dense_scan() {
        let m = mat();
        let n = 20_000;
        let lo = m.t_solidus - 10.0;
        let hi = m.t_liquidus + 10.0;
        let mut prev = f64::INFINITY;
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            let fs = fs_of_t(t, &m);
            assert!((0.0..=1.0).contains(&fs));
            assert!(fs <= prev, "fs increased at {t}");
            prev = fs;
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        let m = mat();
        for t in [835.0, 850.0, 870.0, 890.0] {
            let h = 1e-4;
            let fd = (fs_of_t(t + h, &m) - fs_of_t(t - h, &m)) / (2.0 * h);
            let an = m.solid_fraction_slope(t);
            assert!((fd - an).abs() < 1e-8 * an.abs(), "{t}: {fd} vs {an}");
        }
    }

    #[test]
    fn property_table_interpolation() {
        let c = PropertyTable::constant(3.5);
        assert_eq!(c.interpolate(123.0).unwrap(), 3.5);
        let t = PropertyTable::new(vec![(800.0, 100.0), (900.0, 140.0), (1000.0, 150.0)]).unwrap();
        assert_eq!(t.interpolate(900.0).unwrap(), 140.0);
        assert_eq!(t.interpolate(850.0).unwrap(), 120.0);
        assert_eq!(t.interpolate(950.0).unwrap(), 145.0);
        assert!(matches!(t.interpolate(799.0), Err(MaterialError::OutOfRange { .. })));
        assert!(matches!(t.interpolate(1000.5), Err(MaterialError::OutOfRange { .. })));
        assert_eq!(t.eval(2000.0), 150.0);
        assert!(PropertyTable::new(vec![(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn invalid_materials_are_rejected() {
        let mut m = mat();
        m.t_solidus = 900.0;
        assert!(m.validate().is_err());
        let mut m = mat();
        m.partition_coeff = 1.2;
        assert!(m.validate().is_err());
        let mut m = mat();
        m.conductivity = PropertyTable::constant(-1.0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn coverage_check() {
        let mut m = mat();
        assert!(m.check_coverage(1100.0).is_ok());
        m.conductivity = PropertyTable::new(vec![(800.0, 150.0), (1100.0, 160.0)]).unwrap();
        assert!(m.check_coverage(1100.0).is_err());
        m.conductivity = PropertyTable::new(vec![(730.0, 150.0), (1150.0, 160.0)]).unwrap();
        assert!(m.check_coverage(1100.0).is_ok());
    }

    #[test]
    fn sensible_enthalpy_exact_for_linear_tables() {
        let mut m = mat();
        m.density = PropertyTable::new(vec![(700.0, 2600.0), (1200.0, 2400.0)]).unwrap();
        m.specific_heat = PropertyTable::new(vec![(700.0, 900.0), (1000.0, 1100.0), (1200.0, 1150.0)]).unwrap();
        let model = EnthalpyModel::new(&m).unwrap();
        // reference: fine trapezoid sum
        let (a, b) = (750.0, 1150.0);
        let n = 200_000;
        let mut acc = 0.0;
        for i in 0..n {
            let t0 = a + (b - a) * i as f64 / n as f64;
            let t1 = a + (b - a) * (i + 1) as f64 / n as f64;
            let f = |t: f64| m.density.eval(t) * m.specific_heat.eval(t);
            acc += 0.5 * (t1 - t0) * (f(t0) + f(t1));
        }
        let exact = model.sensible(b) - model.sensible(a);
        assert!((exact - acc).abs() < 1e-6 * acc, "{exact} vs {acc}");
    }

    #[test]
    fn plateau_holds_eutectic_remainder() {
        let m = mat();
        let model = EnthalpyModel::new(&m).unwrap();
        let (lo, hi) = model.plateau();
        let fs_plus = fs_of_t(m.t_solidus, &m);
        assert!((hi - lo - model.latent_volumetric() * (1.0 - fs_plus)).abs() < 1e-6);
        let (t, fs) = model.invert(0.5 * (lo + hi), 840.0);
        assert_eq!(t, m.t_solidus);
        assert!((fs - (1.0 - 0.5 * (1.0 - fs_plus))).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn enthalpy_inversion_round_trips(t in 400.0f64..1300.0, guess in 400.0f64..1300.0) {
            let m = mat();
            let model = EnthalpyModel::new(&m).unwrap();
            let h = model.enthalpy(t);
            let (t2, fs2) = model.invert(h, guess);
            prop_assert!((t2 - t).abs() < 1e-9, "{} -> {}", t, t2);
            if t != m.t_solidus {
                prop_assert!((fs2 - fs_of_t(t, &m)).abs() < 1e-9);
            }
        }

        #[test]
        fn enthalpy_is_increasing(a in 400.0f64..1300.0, b in 400.0f64..1300.0) {
            let model = EnthalpyModel::new(&mat()).unwrap();
            if a < b {
                prop_assert!(model.enthalpy(a) < model.enthalpy(b));
            }
        }
    }

    #[test]
    fn single_precision_evaluates() {
        let m = MaterialProperties::<f32>::default();
        let fs = fs_of_t(880.0f32, &m);
        let m64 = mat();
        assert!((fs as f64 - fs_of_t(880.0, &m64)).abs() < 1e-5);
    }
}
