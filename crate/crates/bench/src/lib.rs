//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use degen_core::operator::RobinBC;
use degen_core::{BoundaryMode, DiffusionCoefficient, GridFunction, Mesh, OperatorAssembly};

pub fn weak_coefficient() -> DiffusionCoefficient {
    DiffusionCoefficient::power_law(0.5).expect("valid exponent")
}

pub fn robin() -> BoundaryMode {
    BoundaryMode::Robin(RobinBC::new(1.0, -1.0, 0.5, 1.0).expect("admissible"))
}

pub fn mesh(n: usize) -> Arc<Mesh> {
    Mesh::new(n, 2.0).expect("valid mesh")
}

pub fn operator(n: usize) -> OperatorAssembly {
    let mesh = mesh(n);
    OperatorAssembly::assemble(&mesh, &weak_coefficient(), &vec![0.0; n + 1], robin()).expect("assembles")
}

pub fn smooth(mesh: &Arc<Mesh>) -> GridFunction {
    GridFunction::from_fn(mesh, |x| (3.0 * x).sin() + 0.5 * x * x)
}
