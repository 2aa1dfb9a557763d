//! α-fractal functions: self-referential perturbations of a seed function.
//!
//! Given a seed `f`, a scaling function `α` with `||α|| < 1` and a base `b`
//! agreeing with `f` at the domain corners, the vertical maps
//!
//! ```text
//! F_c(X, y) = f(u_c(X)) + α(u_c(X)) * (y - b(X))
//! ```
//!
//! define a system whose fixed point `f^α` interpolates `f` at every grid
//! node and satisfies `f^α = f + α * (f^α - b) ∘ u_c^{-1}` cell by cell.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Field, SharedField};
use crate::grid::{
    CornerInterpolant, DataTensor, GridPartition, Lattice, SampledFunction, DEFAULT_REFINEMENT,
};
use crate::maps::CellMaps;
use crate::rb::{
    lattice_preimages, solve_fif, FifSystem, SolveDiagnostics, SolverOptions, VerticalMaps,
    IDENTITY_TOLERANCE,
};

/// Absolute slack added to every bound comparison, covering rounding.
pub const BOUND_SLACK: f64 = 1e-12;

/// A scaling function with a declared bound on its sup-norm.
#[derive(Clone)]
pub struct ScalingFunction {
    field: SharedField,
    declared_bound: f64,
    constant: Option<f64>,
}

impl fmt::Debug for ScalingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalingFunction")
            .field("declared_bound", &self.declared_bound)
            .field("constant", &self.constant)
            .finish()
    }
}

/// Lattice certification of a scaling function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCertificate {
    /// Largest `|α|` over the lattice.
    pub lattice_max: f64,
    /// Largest `|α|` over the lattice points of each cell, row-major.
    pub per_cell: Vec<f64>,
}

impl ScalingFunction {
    pub fn new(field: SharedField, declared_bound: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&declared_bound) {
            return Err(Error::ScalingBoundViolation {
                declared: declared_bound,
                observed: declared_bound,
            });
        }
        Ok(Self {
            field,
            declared_bound,
            constant: None,
        })
    }

    pub fn constant(c: f64) -> Result<Self> {
        let mut s = Self::new(Arc::new(crate::field::Constant(c)), c.abs())?;
        s.constant = Some(c);
        Ok(s)
    }

    pub fn field(&self) -> &SharedField {
        &self.field
    }

    pub fn declared_bound(&self) -> f64 {
        self.declared_bound
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }

    /// Samples `|α|` on the lattice; fails if the sample max exceeds the
    /// declared bound.
    pub fn certify(&self, lattice: &Lattice) -> Result<ScalingCertificate> {
        let grid = lattice.grid();
        if let Some(c) = self.constant {
            return Ok(ScalingCertificate {
                lattice_max: c.abs(),
                per_cell: vec![c.abs(); grid.cell_count()],
            });
        }
        let sampled = SampledFunction::from_field(Arc::new(lattice.clone()), self.field.as_ref())?;
        let m = lattice.refinement();
        let per_cell: Vec<f64> = grid
            .cells()
            .map(|cell| {
                let lo: Vec<usize> = cell.iter().map(|&i| (i - 1) * m).collect();
                let hi: Vec<usize> = cell.iter().map(|&i| i * m).collect();
                crate::grid::MultiIndexIter::new(lo, hi)
                    .map(|idx| sampled.values()[lattice.offset(&idx)].abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let lattice_max = per_cell.iter().copied().fold(0.0, f64::max);
        if lattice_max > self.declared_bound + BOUND_SLACK {
            return Err(Error::ScalingBoundViolation {
                declared: self.declared_bound,
                observed: lattice_max,
            });
        }
        Ok(ScalingCertificate {
            lattice_max,
            per_cell,
        })
    }
}

/// Choice of base function.
#[derive(Clone)]
pub enum BaseFunction {
    /// Multilinear interpolant of the seed's corner values.
    Corner,
    /// The seed itself.
    Seed,
    /// A user function, checked against the seed at the corners.
    Custom(SharedField),
}

impl fmt::Debug for BaseFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseFunction::Corner => f.write_str("Corner"),
            BaseFunction::Seed => f.write_str("Seed"),
            BaseFunction::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl BaseFunction {
    pub fn resolve(&self, seed: &SharedField, grid: &GridPartition) -> SharedField {
        match self {
            BaseFunction::Corner => make_corner_base(seed, grid),
            BaseFunction::Seed => seed.clone(),
            BaseFunction::Custom(b) => b.clone(),
        }
    }
}

/// The multilinear interpolant of `f` at the `2^n` domain corners.
pub fn make_corner_base(seed: &SharedField, grid: &GridPartition) -> SharedField {
    Arc::new(CornerInterpolant::new(grid, seed.as_ref()))
}

/// Largest `|b - f|` over the domain corners; fails above 1e-10.
pub fn check_base_corners(seed: &dyn Field, base: &dyn Field, grid: &GridPartition) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for corner in grid.corners() {
        let x = grid.node_point(&corner);
        let residual = (base.eval(&x) - seed.eval(&x)).abs();
        if residual > IDENTITY_TOLERANCE || residual.is_nan() {
            return Err(Error::BaseCornerMismatch { corner, residual });
        }
        worst = worst.max(residual);
    }
    Ok(worst)
}

/// Vertical maps of an α-fractal system.
pub struct AlphaVerticalMaps {
    maps: CellMaps,
    seed: SharedField,
    scaling: SharedField,
    base: SharedField,
    grid: GridPartition,
    gammas: Vec<f64>,
}

impl AlphaVerticalMaps {
    fn image(&self, cell: &[usize], x: &[f64]) -> Vec<f64> {
        let mut ux = vec![0.0; x.len()];
        self.maps.forward_into(cell, x, &mut ux);
        ux
    }
}

impl VerticalMaps for AlphaVerticalMaps {
    fn eval(&self, cell: &[usize], x: &[f64], y: f64) -> f64 {
        let ux = self.image(cell, x);
        self.seed.eval(&ux) + self.scaling.eval(&ux) * (y - self.base.eval(x))
    }

    fn y_contraction(&self, cell: &[usize]) -> f64 {
        self.gammas[self.grid.cell_offset(cell)]
    }

    fn affine_in_y(&self, cell: &[usize], x: &[f64]) -> Option<(f64, f64)> {
        let ux = self.image(cell, x);
        let a = self.scaling.eval(&ux);
        Some((self.seed.eval(&ux) - a * self.base.eval(x), a))
    }

    fn lookup_reference(&self) -> Option<SharedField> {
        Some(self.base.clone())
    }
}

fn alpha_system(
    seed: &SharedField,
    scaling: &ScalingFunction,
    base: &SharedField,
    grid: &GridPartition,
    certificate: &ScalingCertificate,
) -> Result<FifSystem> {
    check_base_corners(seed.as_ref(), base.as_ref(), grid)?;
    let data = DataTensor::sample(grid, seed.as_ref())?;
    // Lattice maxima bound |α| only at lattice points, so a non-constant
    // scaling declares its certified bound as the contraction constant.
    let gammas = match scaling.as_constant() {
        Some(c) => vec![c.abs(); grid.cell_count()],
        None => vec![scaling.declared_bound(); certificate.per_cell.len()],
    };
    let vertical = AlphaVerticalMaps {
        maps: CellMaps::new(grid),
        seed: seed.clone(),
        scaling: scaling.field().clone(),
        base: base.clone(),
        grid: grid.clone(),
        gammas,
    };
    FifSystem::new(grid.clone(), data, Arc::new(vertical))
}

/// The system of vertical maps for `(f, α, b)` with `f` sampled at the grid
/// nodes as data. `α` is certified on the default refinement lattice.
pub fn build_alpha_system(
    seed: &SharedField,
    scaling: &ScalingFunction,
    base: &SharedField,
    grid: &GridPartition,
) -> Result<FifSystem> {
    let lattice = Lattice::new(grid.clone(), DEFAULT_REFINEMENT)?;
    let certificate = scaling.certify(&lattice)?;
    alpha_system(seed, scaling, base, grid, &certificate)
}

/// Short descriptions of the inputs of a construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlphaLabels {
    pub seed: String,
    pub scaling: String,
    pub base: String,
}

/// A solved α-fractal function with its inputs and diagnostics.
#[derive(Clone)]
pub struct AlphaFractalResult {
    pub function: SampledFunction,
    pub diagnostics: SolveDiagnostics,
    pub system: FifSystem,
    pub seed: SharedField,
    pub scaling: ScalingFunction,
    pub base: SharedField,
    pub certificate: ScalingCertificate,
    pub labels: AlphaLabels,
}

impl fmt::Debug for AlphaFractalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlphaFractalResult")
            .field("diagnostics", &self.diagnostics)
            .field("scaling_norm", &self.scaling_norm())
            .field("labels", &self.labels)
            .finish_non_exhaustive()
    }
}

impl AlphaFractalResult {
    /// Certified `||α||` on the solve lattice.
    pub fn scaling_norm(&self) -> f64 {
        self.certificate.lattice_max
    }

    /// Largest `|f^α - f|` over the grid nodes.
    pub fn node_residual(&self) -> f64 {
        let grid = self.system.grid();
        grid.nodes()
            .map(|node| (self.function.node_value(&node) - self.system.data().get(&node)).abs())
            .fold(0.0, f64::max)
    }
}

/// Solves for `f^α` with base `b` on a lattice of `options.refinement`.
pub fn construct_alpha_fractal(
    seed: &SharedField,
    grid: &GridPartition,
    scaling: &ScalingFunction,
    base: &BaseFunction,
    options: &SolverOptions,
) -> Result<AlphaFractalResult> {
    let base_field = base.resolve(seed, grid);
    construct_with_base(seed, grid, scaling, base_field, options)
}

pub(crate) fn construct_with_base(
    seed: &SharedField,
    grid: &GridPartition,
    scaling: &ScalingFunction,
    base: SharedField,
    options: &SolverOptions,
) -> Result<AlphaFractalResult> {
    let lattice = Lattice::new(grid.clone(), options.refinement)?;
    let certificate = scaling.certify(&lattice)?;
    let system = alpha_system(seed, scaling, &base, grid, &certificate)?;
    let (function, diagnostics) = solve_fif(&system, options)?;
    Ok(AlphaFractalResult {
        function,
        diagnostics,
        system,
        seed: seed.clone(),
        scaling: scaling.clone(),
        base,
        certificate,
        labels: AlphaLabels::default(),
    })
}

/// One checked inequality `lhs <= rhs + allowance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Discretization and solver allowance added to `rhs`.
    pub allowance: f64,
}

impl BoundCheck {
    pub fn slack(&self) -> f64 {
        self.rhs + self.allowance - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.slack() >= 0.0
    }

    pub(crate) fn require(self, name: &'static str) -> Result<Self> {
        if self.holds() {
            Ok(self)
        } else {
            Err(Error::BoundViolation {
                bound: name,
                lhs: self.lhs,
                rhs: self.rhs + self.allowance,
            })
        }
    }
}

/// Result of [`check_perturbation_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationReport {
    /// `||α||` on the lattice.
    pub scaling_norm: f64,
    /// `||f^α - f||` on the lattice.
    pub seed_distance: f64,
    /// `||f - b||` over the lattice and the preimage points.
    pub seed_base_gap: f64,
    /// `||f^α - f|| <= ||α|| * ||f^α - b||`.
    pub fractal_base: BoundCheck,
    /// `||f^α - f|| <= ||α|| / (1 - ||α||) * ||f - b||`.
    pub seed_base: BoundCheck,
    /// Largest `|I f - f|` at preimage points, `I` the lattice interpolant.
    pub lookback_defect: f64,
    /// Distance of the returned samples to the discrete fixed point.
    pub solver_error: f64,
    pub refinement: usize,
}

/// Name of the bound `||f^α - f|| <= ||α|| ||f^α - b||` in violation reports.
pub const FRACTAL_BASE_BOUND: &str = "perturbation bounded by scaling times fractal-to-base gap";
/// Name of the bound `||f^α - f|| <= ||α||/(1-||α||) ||f - b||`.
pub const SEED_BASE_BOUND: &str = "perturbation bounded by scaling ratio times seed-to-base gap";

/// Checks both perturbation inequalities on the solve lattice.
///
/// The lattice solution satisfies `φ = f + α (Iφ - b) ∘ u^{-1}` at lattice
/// points, where `I` interpolates between lattice points. Norms on the right
/// are therefore taken over lattice and preimage points, and the allowance
/// covers the interpolation defect of `f` at preimages and the solver error.
/// On uniform grids the preimages are lattice points and the defect is zero.
pub fn check_perturbation_bounds(result: &AlphaFractalResult) -> Result<PerturbationReport> {
    let phi = &result.function;
    let lattice = phi.lattice().clone();
    let seed = result.seed.as_ref();
    let base = result.base.as_ref();
    let n = lattice.dim();
    let a = result.scaling_norm();

    let seed_samples = SampledFunction::from_field(lattice.clone(), seed)?;
    let seed_distance = phi
        .values()
        .par_iter()
        .zip(seed_samples.values())
        .map(|(p, f)| (p - f).abs())
        .reduce(|| 0.0, f64::max);

    let pre = lattice_preimages(&result.system, &lattice)?;
    // (|φ - b|, |f - b|, |I f - f|) over lattice points and their preimages.
    let (fractal_gap, seed_gap, defect) = (0..lattice.len())
        .into_par_iter()
        .map_init(
            || (vec![0usize; n], vec![0.0; n], vec![0.0; n]),
            |(idx, x, y), p| {
                lattice.unravel(p, idx);
                for k in 0..n {
                    x[k] = lattice.coords(k)[idx[k]];
                    y[k] = pre[k][idx[k]];
                }
                let on_lattice = (
                    (phi.values()[p] - base.eval(x)).abs(),
                    (seed_samples.values()[p] - base.eval(x)).abs(),
                );
                let fy = seed.eval(y);
                let by = base.eval(y);
                (
                    on_lattice.0.max((phi.eval_unchecked(y) - by).abs()),
                    on_lattice.1.max((fy - by).abs()),
                    (seed_samples.eval_unchecked(y) - fy).abs(),
                )
            },
        )
        .reduce(
            || (0.0, 0.0, 0.0),
            |l, r| (l.0.max(r.0), l.1.max(r.1), l.2.max(r.2)),
        );
    for (what, v) in [
        ("fractal-to-base gap", fractal_gap),
        ("seed-to-base gap", seed_gap),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: what.into() });
        }
    }

    let solver_error = result.diagnostics.a_posteriori_bound + result.diagnostics.node_residual;
    let ratio = a / (1.0 - a);
    let fractal_base = BoundCheck {
        lhs: seed_distance,
        rhs: a * fractal_gap,
        allowance: (1.0 + a) * solver_error + BOUND_SLACK,
    }
    .require(FRACTAL_BASE_BOUND)?;
    let seed_base = BoundCheck {
        lhs: seed_distance,
        rhs: ratio * seed_gap,
        allowance: ratio * defect + 2.0 * solver_error / (1.0 - a) + BOUND_SLACK,
    }
    .require(SEED_BASE_BOUND)?;
    Ok(PerturbationReport {
        scaling_norm: a,
        seed_distance,
        seed_base_gap: seed_gap,
        fractal_base,
        seed_base,
        lookback_defect: defect,
        solver_error,
        refinement: lattice.refinement(),
    })
}

/// The parameter varied by [`convergence_study`].
#[derive(Clone)]
pub enum StudySequence {
    /// A sequence of scaling functions with a fixed base.
    Scalings(Vec<ScalingFunction>),
    /// A sequence of bases with a fixed scaling function.
    Bases(Vec<SharedField>),
}

impl StudySequence {
    pub fn len(&self) -> usize {
        match self {
            StudySequence::Scalings(v) => v.len(),
            StudySequence::Bases(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub index: usize,
    /// `||α_m||` or `||f - b_m||`, whichever is varied.
    pub parameter: f64,
    /// `||f^α - f||`.
    pub error: f64,
    /// `||α|| / (1 - ||α||) * ||f - b||` plus allowance.
    pub bound: f64,
    pub iterations: usize,
}

/// Solves for every member of the sequence (in parallel) and tabulates the
/// distance to the seed against its a-priori bound.
pub fn convergence_study(
    seed: &SharedField,
    grid: &GridPartition,
    scaling: &ScalingFunction,
    base: &BaseFunction,
    sequence: &StudySequence,
    options: &SolverOptions,
) -> Result<Vec<StudyRow>> {
    let row = |index: usize, result: AlphaFractalResult, varies_scaling: bool| {
        let report = check_perturbation_bounds(&result)?;
        Ok(StudyRow {
            index,
            parameter: if varies_scaling {
                report.scaling_norm
            } else {
                report.seed_base_gap
            },
            error: report.seed_distance,
            bound: report.seed_base.rhs + report.seed_base.allowance,
            iterations: result.diagnostics.iterations,
        })
    };
    match sequence {
        StudySequence::Scalings(list) => list
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                row(
                    i + 1,
                    construct_alpha_fractal(seed, grid, s, base, options)?,
                    true,
                )
            })
            .collect(),
        StudySequence::Bases(list) => list
            .par_iter()
            .enumerate()
            .map(|(i, b)| {
                let result = construct_with_base(seed, grid, scaling, b.clone(), options)?;
                row(i + 1, result, false)
            })
            .collect(),
    }
}
