use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // grid and lattice
    #[error("knots must be strictly increasing (violated at index {index})")]
    NonMonotonicKnots { index: usize },
    #[error("an axis needs at least 3 knots (2 cells), got {count}")]
    TooFewKnots { count: usize },
    #[error("knot {index} is not finite")]
    NonFiniteKnot { index: usize },
    #[error("a grid needs at least one axis")]
    EmptyGrid,
    #[error("index {index} out of range ({context})")]
    IndexOutOfRange { index: usize, context: &'static str },
    #[error("point coordinate {value} on axis {axis} lies outside [{lo}, {hi}]")]
    PointOutsideDomain {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sampled functions live on different lattices")]
    LatticeMismatch,
    #[error("refinement must be at least 1")]
    InvalidRefinement,
    #[error("expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered in {what}")]
    NonFinite { what: String },

    // cell maps
    #[error("value {value} outside the map domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
    #[error("shared-point identity fails on axis {axis} at knot {knot}: {left} vs {right}")]
    SharedPointViolation {
        axis: usize,
        knot: usize,
        left: f64,
        right: f64,
    },

    // read-bajraktarevic engine
    #[error(
        "vertical map of cell {cell:?} misses the data at corner {corner:?} (residual {residual:e})"
    )]
    DataConstraintViolation {
        cell: Vec<usize>,
        corner: Vec<usize>,
        residual: f64,
    },
    #[error(
        "vertical map of cell {cell:?} has y-Lipschitz ratio {observed} above declared {declared}"
    )]
    ContractionViolation {
        cell: Vec<usize>,
        declared: f64,
        observed: f64,
    },
    #[error("declared y-contraction {gamma} of cell {cell:?} is not in [0, 1)")]
    InvalidContraction { cell: Vec<usize>, gamma: f64 },
    #[error(
        "matching condition fails on axis {axis}, knot {knot}, cells {lower:?}/{upper:?} at {witness:?} (residual {residual:e})"
    )]
    MatchingViolation {
        axis: usize,
        knot: usize,
        lower: Vec<usize>,
        upper: Vec<usize>,
        witness: Vec<f64>,
        residual: f64,
    },
    #[error(
        "fixed-point iteration did not converge: change {change:e} after {iterations} iterations"
    )]
    NotConverged { iterations: usize, change: f64 },
    #[error("system constraints could not be verified: {0}")]
    ConstraintsUnverified(Box<Error>),
    #[error("attractor would hold {points} points, above the cap of {cap}")]
    DepthTooLarge { points: u128, cap: usize },
    #[error("point {point:?} does not lie in cell {cell:?}")]
    PointNotInCell { point: Vec<f64>, cell: Vec<usize> },

    // alpha-fractal construction
    #[error("base function differs from the seed at corner {corner:?} by {residual:e}")]
    BaseCornerMismatch { corner: Vec<usize>, residual: f64 },
    #[error("scaling function bound violated: declared {declared}, observed {observed}")]
    ScalingBoundViolation { declared: f64, observed: f64 },
    #[error("{bound} violated: {lhs:e} > {rhs:e}")]
    BoundViolation {
        bound: &'static str,
        lhs: f64,
        rhs: f64,
    },

    // fractal operator
    #[error(
        "operator is not admissible for sample {sample}: corner {corner:?} off by {residual:e}"
    )]
    NotAdmissible {
        sample: usize,
        corner: Vec<usize>,
        residual: f64,
    },
    #[error("pair {pair} has identical members")]
    DegeneratePair { pair: usize },
    #[error("operator `{0}` is not declared linear")]
    NotLinear(String),
    #[error("operator `{0}` has no Lipschitz constant")]
    MissingLipschitz(String),
    #[error("linearity residual {residual:e} exceeds allowance {allowance:e}")]
    LinearityViolation { residual: f64, allowance: f64 },
    #[error("inverse iteration needs |alpha|*|L| < 1, got {product}")]
    ContractionConditionFailed { product: f64 },

    #[error(transparent)]
    Expr(#[from] ExprError),
}

impl Error {
    /// True for failures of a checked mathematical property, as opposed to
    /// malformed input or a solver that ran out of iterations.
    pub fn is_verification_failure(&self) -> bool {
        match self {
            Error::SharedPointViolation { .. }
            | Error::DataConstraintViolation { .. }
            | Error::ContractionViolation { .. }
            | Error::MatchingViolation { .. }
            | Error::BaseCornerMismatch { .. }
            | Error::ScalingBoundViolation { .. }
            | Error::BoundViolation { .. }
            | Error::NotAdmissible { .. }
            | Error::LinearityViolation { .. } => true,
            Error::ConstraintsUnverified(inner) => inner.is_verification_failure(),
            _ => false,
        }
    }
}
