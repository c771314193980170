//! Numerical laboratory for semilinear degenerate reaction-diffusion on (-1, 1):
//! weighted Sobolev norms, interpolation and embedding inequalities, the
//! degenerate Robin operator, Nemytskii maps, and strict/strong solvers.

pub mod coeff;
pub mod error;
pub mod field;
pub mod inequalities;
pub mod linalg;
pub mod mesh;
pub mod nemytskii;
pub mod norms;
pub mod operator;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod solver;

pub use coeff::{Degeneracy, DegeneracyReport, DiffusionCoefficient};
pub use error::{Assumption, Error, Result};
pub use field::Field;
pub use inequalities::{Checker, Family, InequalityTrial};
pub use nemytskii::{ModelKind, NemytskiiModel};
pub use mesh::{GridFunction, Mesh, SpaceTimeFunction, TimeGrid};
pub use norms::NormReport;
pub use operator::{BoundaryMode, OperatorAssembly, RobinBC};
pub use solver::{InitialDatum, ProblemSpec, RegularityClaim, SolveResult, SolverSettings, StrongSolveResult};
