//! Casting solidification optimization toolkit.
//!
//! The crate couples a finite-volume solidification solver on voxel
//! geometries with empirical microstructure models, trains per-objective
//! neural-network surrogates on the solver output, and searches the
//! initial/wall temperature space with an elitist GA and NSGA-II. Pareto
//! designs are ranked by the L1 norm of their local Jacobian.
//!
//! Numerical kernels (`material`, `solver`, `microstructure`, `surrogate`)
//! are generic over [`Real`]; the aliases below fix them to `f64`, which is
//! what the optimization and pipeline layers use.

pub mod design;
pub mod evolve;
pub mod geometry;
pub mod material;
pub mod microstructure;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod sensitivity;
pub mod solver;
pub mod surrogate;

pub use design::{Bounds, DesignPoint};
pub use scalar::Real;

pub type MaterialProperties = material::MaterialProperties<f64>;
pub type PropertyTable = material::PropertyTable<f64>;
pub type ThermalBc = solver::ThermalBc<f64>;
pub type ThermalField = solver::ThermalField<f64>;
pub type ThermalModel = solver::ThermalModel<f64>;
pub type SolveRecord = solver::SolveRecord<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type MicroConstants = microstructure::MicroConstants<f64>;
pub type ObjectiveTriple = microstructure::ObjectiveTriple<f64>;
pub type Mlp = surrogate::Mlp<f64>;
