//! Shared fixtures for the benchmarks.

use fif_core::{
    build_alpha_system, field, make_corner_base, FifSystem, GridPartition, ScalingFunction,
    SharedField,
};

/// A smooth two-variable seed.
pub fn seed_2d() -> SharedField {
    field(|x: &[f64]| (4.0 * x[0]).sin() + x[1] * x[1] - x[0] * x[1])
}

/// Constant-scaling system on the unit square split into `cells x cells`.
pub fn square_system(cells: usize, scaling: f64) -> FifSystem {
    let grid = GridPartition::uniform(2, 0.0, 1.0, cells).expect("valid grid");
    let seed = seed_2d();
    let base = make_corner_base(&seed, &grid);
    let scaling = ScalingFunction::constant(scaling).expect("scaling below one");
    build_alpha_system(&seed, &scaling, &base, &grid).expect("consistent system")
}
