//! Multivariate fractal interpolation functions on hyperrectangular grids.
//!
//! The crate builds the iterated function system of a gridded data set,
//! solves for its fractal interpolation function as the fixed point of the
//! Read–Bajraktarević operator, constructs α-fractal perturbations of a seed
//! function, and checks the associated error bounds and operator properties
//! numerically.
//!
//! Continuous functions are represented by [`SampledFunction`]: values on a
//! per-cell refinement lattice with multilinear interpolation in between.
//! Every norm reported by the crate is a sup-norm over such a lattice.

pub mod alpha;
pub mod error;
pub mod expr;
pub mod field;
pub mod grid;
pub mod maps;
pub mod operator;
pub mod rb;

pub use alpha::{
    build_alpha_system, check_base_corners, check_perturbation_bounds, construct_alpha_fractal,
    convergence_study, make_corner_base, AlphaFractalResult, AlphaLabels, BaseFunction, BoundCheck,
    PerturbationReport, ScalingCertificate, ScalingFunction, StudyRow, StudySequence,
};
pub use error::{Error, Result};
pub use expr::{Expr, ExprError, ExprField};
pub use field::{field, Constant, Field, SharedField};
pub use grid::{
    sup_distance, tau, AxisPartition, CellLocation, CornerInterpolant, DataTensor, GridPartition,
    Lattice, SampledFunction, DEFAULT_REFINEMENT,
};
pub use maps::{build_axis_maps, verify_shared_point, AffineCellMap, CellMaps, Direction};
pub use operator::{
    apply_fractal_operator, builtin_operator, check_admissible, estimate_lipschitz,
    estimate_operator_norms, invert_fractal_operator, random_fields, verify_linearity,
    verify_relative_bounds, AdmissibilityReport, CornerInterpolation, ExpressionOperator, Identity,
    InverseResult, LinearityReport, Operator, OperatorBoundReport, OperatorNormEstimates,
    Reflection, Zero,
};
pub use rb::{
    apply_rb_operator, estimate_y_contraction, lattice_preimages, rb_value_in_cell,
    sample_attractor, self_referential_residual, shared_face_probes, shared_faces, solve_fif,
    solve_from, verify_data_constraints, verify_matching_conditions, verify_system,
    well_definedness_residual, AttractorPoint, ConstraintCheck, FifSystem, FnVerticalMaps,
    MatchingOptions, RbOperator, SolveDiagnostics, SolverOptions, VerticalMaps,
    ATTRACTOR_POINT_CAP, IDENTITY_TOLERANCE,
};
