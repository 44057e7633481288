//! Shared fixtures for the criterion benchmarks.

use sacfv::prelude::*;

/// Mesh with `l × l` cells and the reference datum projected onto it.
pub fn fixture(l: usize) -> (Discretization, DiscreteField) {
    let mesh = build_uniform_mesh(l).expect("l > 0");
    let u0 = cell_average(&sacfv::golden::initial_datum(), &mesh).expect("matching mesh");
    (Discretization::new(mesh), u0)
}

/// Scheme with `ε = 0.1·τ^0.4` on `[0, 1]`.
pub fn params(steps: usize, amplitude: f64) -> SchemeParams {
    SchemeParams::new(1.0, steps, EpsilonSchedule::default(), amplitude).expect("valid parameters")
}
