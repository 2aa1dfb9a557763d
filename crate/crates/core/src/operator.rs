//! The fractal operator `f -> f^α` with base `b = L(f)` for an admissible
//! operator `L`, and numerical checks of its boundedness, Lipschitz and
//! linearity properties and of its inverse.
//!
//! All norms are sup-norms over a refinement lattice. Right-hand sides of
//! the bound checks use the lattice together with the preimage points the
//! solver looks up, which coincide with the lattice on uniform grids.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alpha::{
    construct_with_base, AlphaFractalResult, BoundCheck, ScalingFunction, BOUND_SLACK,
};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{Constant, Field, SharedField};
use crate::grid::{CornerInterpolant, GridPartition, Lattice, SampledFunction};
use crate::rb::{lattice_preimages, SolverOptions, IDENTITY_TOLERANCE};

/// A map on continuous functions used to pick the base function.
pub trait Operator: Send + Sync {
    fn name(&self) -> &str;

    fn apply(&self, f: &SharedField, grid: &GridPartition) -> Result<SharedField>;

    /// Declared linearity.
    fn is_linear(&self) -> bool;

    /// Declared Lipschitz constant with respect to the sup-norm.
    fn lipschitz(&self) -> Option<f64>;
}

/// `L(f) = f`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Operator for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn apply(&self, f: &SharedField, _grid: &GridPartition) -> Result<SharedField> {
        Ok(f.clone())
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `L(f)` = multilinear interpolant of `f` at the domain corners.
#[derive(Debug, Clone, Copy, Default)]
pub struct CornerInterpolation;

impl Operator for CornerInterpolation {
    fn name(&self) -> &str {
        "corner"
    }

    fn apply(&self, f: &SharedField, grid: &GridPartition) -> Result<SharedField> {
        Ok(Arc::new(CornerInterpolant::new(grid, f.as_ref())))
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `L(f)(X) = f(a + b - X)`, reflecting every axis. Admissible only for
/// functions whose corner values are symmetric.
#[derive(Debug, Clone, Copy, Default)]
pub struct Reflection;

impl Operator for Reflection {
    fn name(&self) -> &str {
        "reflection"
    }

    fn apply(&self, f: &SharedField, grid: &GridPartition) -> Result<SharedField> {
        let f = f.clone();
        let ends: Vec<f64> = grid.axes().iter().map(|a| a.start() + a.end()).collect();
        Ok(Arc::new(move |x: &[f64]| {
            let r: Vec<f64> = x.iter().zip(&ends).map(|(x, s)| s - x).collect();
            f.eval(&r)
        }))
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `L(f) = 0`. Not admissible unless `f` vanishes at the corners; useful
/// for norm estimation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Operator for Zero {
    fn name(&self) -> &str {
        "zero"
    }

    fn apply(&self, _f: &SharedField, _grid: &GridPartition) -> Result<SharedField> {
        Ok(Arc::new(Constant(0.0)))
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Variable names available to expression operators besides `x1..xn`:
/// `f` is the input function and `c` its corner interpolant.
pub const OPERATOR_VARIABLES: [&str; 2] = ["f", "c"];

/// `L(f)(X) = E(X, f(X), c(X))` for an expression `E`.
#[derive(Clone)]
pub struct ExpressionOperator {
    expr: Expr,
    linear: bool,
    lipschitz: Option<f64>,
}

impl fmt::Debug for ExpressionOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpressionOperator")
            .field("expr", &self.expr.source())
            .field("linear", &self.linear)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl ExpressionOperator {
    /// Parses `src` over `x1..x{dim}`, `f` and `c`. Linearity and the
    /// Lipschitz constant are declarations, not checked here.
    pub fn parse(src: &str, dim: usize, linear: bool, lipschitz: Option<f64>) -> Result<Self> {
        let expr = Expr::parse_with(src, &OPERATOR_VARIABLES)?;
        expr.check_dim(dim)?;
        Ok(Self {
            expr,
            linear,
            lipschitz,
        })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl Operator for ExpressionOperator {
    fn name(&self) -> &str {
        self.expr.source()
    }

    fn apply(&self, f: &SharedField, grid: &GridPartition) -> Result<SharedField> {
        let f = f.clone();
        let corner = CornerInterpolant::new(grid, f.as_ref());
        let expr = self.expr.clone();
        Ok(Arc::new(move |x: &[f64]| {
            expr.eval_with(x, &[f.eval(x), corner.eval(x)])
                .unwrap_or(f64::NAN)
        }))
    }

    fn is_linear(&self) -> bool {
        self.linear
    }

    fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// Looks up a built-in operator by name.
pub fn builtin_operator(name: &str) -> Option<Arc<dyn Operator>> {
    match name {
        "identity" | "id" => Some(Arc::new(Identity)),
        "corner" => Some(Arc::new(CornerInterpolation)),
        "reflection" => Some(Arc::new(Reflection)),
        "zero" => Some(Arc::new(Zero)),
        _ => None,
    }
}

/// Outcome of [`check_admissible`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    /// Largest corner residual `|L(f) - f|` per sample.
    pub residuals: Vec<f64>,
}

/// Checks `L(f) = f` at every domain corner for every sample.
pub fn check_admissible(
    op: &dyn Operator,
    samples: &[SharedField],
    grid: &GridPartition,
) -> Result<AdmissibilityReport> {
    let mut residuals = Vec::with_capacity(samples.len());
    for (sample, f) in samples.iter().enumerate() {
        let lf = op.apply(f, grid)?;
        let mut worst: f64 = 0.0;
        for corner in grid.corners() {
            let x = grid.node_point(&corner);
            let residual = (lf.eval(&x) - f.eval(&x)).abs();
            if residual > IDENTITY_TOLERANCE || residual.is_nan() {
                return Err(Error::NotAdmissible {
                    sample,
                    corner,
                    residual,
                });
            }
            worst = worst.max(residual);
        }
        residuals.push(worst);
    }
    Ok(AdmissibilityReport { residuals })
}

/// `𝓕(f)`: the α-fractal function of `f` with base `L(f)`.
pub fn apply_fractal_operator(
    op: &dyn Operator,
    scaling: &ScalingFunction,
    grid: &GridPartition,
    f: &SharedField,
    options: &SolverOptions,
) -> Result<AlphaFractalResult> {
    check_admissible(op, std::slice::from_ref(f), grid)?;
    let base = op.apply(f, grid)?;
    let mut result = construct_with_base(f, grid, scaling, base, options)?;
    result.labels.base = op.name().to_string();
    Ok(result)
}

/// Sup-norm helper over the lattice and the preimage points of a grid.
struct EvaluationSet {
    lattice: Arc<Lattice>,
    preimages: Vec<Vec<f64>>,
}

impl EvaluationSet {
    fn new(grid: &GridPartition, refinement: usize) -> Result<Self> {
        let lattice = Arc::new(Lattice::new(grid.clone(), refinement)?);
        // The preimages depend only on the cell maps; any system will do.
        let maps_only = crate::rb::FifSystem::new(
            grid.clone(),
            crate::grid::DataTensor::new(grid, vec![0.0; grid.node_count()])?,
            Arc::new(crate::rb::FnVerticalMaps::new(grid, |_, _, _| 0.0, |_| 0.0)),
        )?;
        let preimages = lattice_preimages(&maps_only, &lattice)?;
        Ok(Self { lattice, preimages })
    }

    fn sup(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<f64> {
        let n = self.lattice.dim();
        let v = (0..self.lattice.len())
            .into_par_iter()
            .map_init(
                || (vec![0usize; n], vec![0.0; n], vec![0.0; n]),
                |(idx, x, y), p| {
                    self.lattice.unravel(p, idx);
                    for k in 0..n {
                        x[k] = self.lattice.coords(k)[idx[k]];
                        y[k] = self.preimages[k][idx[k]];
                    }
                    f(x).abs().max(f(y).abs())
                },
            )
            .reduce(
                || 0.0,
                |a, b| {
                    if a.is_nan() || b.is_nan() {
                        f64::NAN
                    } else {
                        a.max(b)
                    }
                },
            );
        if v.is_nan() {
            return Err(Error::NonFinite {
                what: "function on the evaluation set".into(),
            });
        }
        Ok(v)
    }

    fn norm(&self, f: &dyn Field) -> Result<f64> {
        self.sup(&|x| f.eval(x))
    }

    fn distance(&self, f: &dyn Field, g: &dyn Field) -> Result<f64> {
        self.sup(&|x| f.eval(x) - g.eval(x))
    }
}

/// Largest `||L(f) - L(g)|| / ||f - g||` over the pairs: a lower bound of
/// the Lipschitz constant of `L`.
pub fn estimate_lipschitz(
    op: &dyn Operator,
    pairs: &[(SharedField, SharedField)],
    grid: &GridPartition,
    refinement: usize,
) -> Result<f64> {
    let set = EvaluationSet::new(grid, refinement)?;
    let mut best: f64 = 0.0;
    for (pair, (f, g)) in pairs.iter().enumerate() {
        let d = set.distance(f.as_ref(), g.as_ref())?;
        if d == 0.0 {
            return Err(Error::DegeneratePair { pair });
        }
        let lf = op.apply(f, grid)?;
        let lg = op.apply(g, grid)?;
        best = best.max(set.distance(lf.as_ref(), lg.as_ref())? / d);
    }
    Ok(best)
}

/// Outcome of [`verify_relative_bounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorBoundReport {
    pub refinement: usize,
    pub scaling_norm: f64,
    /// Declared Lipschitz constant of `L`, if any.
    pub declared_lipschitz: Option<f64>,
    /// Lower bound of `|L|` from the pairs.
    pub estimated_lipschitz: f64,
    /// `||𝓕f|| <= ||f||/(1-a) + a/(1-a) ||Lf||` per sample.
    pub relative_bounds: Vec<BoundCheck>,
    /// `||𝓕f - 𝓕g|| <= ||f-g||/(1-a) + a/(1-a) ||Lf - Lg||` per pair.
    pub relative_lipschitz: Vec<BoundCheck>,
    /// `||𝓕f - 𝓕g|| <= (1 + a|L|)/(1-a) ||f-g||` per pair, with the declared
    /// constant (or the estimate when none is declared).
    pub lipschitz: Vec<BoundCheck>,
    /// Largest `||𝓕f - 𝓕g|| / ||f - g||` over the pairs.
    pub fractal_lipschitz_estimate: f64,
    /// `(1 + a|L|)/(1-a)`.
    pub fractal_lipschitz_bound: f64,
    /// Largest `||Lf|| / ||f||` over the samples, joined with `||L0||`.
    pub operator_norm_estimate: f64,
    /// `sup ||𝓕f|| / ||f|| <= (1 + a ρ(L))/(1-a)` with `ρ(L)` estimated.
    pub norm_transfer: BoundCheck,
}

/// Solver error of a result plus its pinning correction.
fn solve_error(r: &AlphaFractalResult) -> f64 {
    r.diagnostics.a_posteriori_bound + r.diagnostics.node_residual
}

/// Solves `𝓕` on every sample and pair and checks the relative bound, the
/// relative Lipschitz bound, the Lipschitz bound and the transfer of the
/// norm bound from `L` to `𝓕`. Any violation is an error.
pub fn verify_relative_bounds(
    op: &dyn Operator,
    scaling: &ScalingFunction,
    grid: &GridPartition,
    samples: &[SharedField],
    pairs: &[(SharedField, SharedField)],
    options: &SolverOptions,
) -> Result<OperatorBoundReport> {
    let all: Vec<SharedField> = samples
        .iter()
        .cloned()
        .chain(pairs.iter().flat_map(|(f, g)| [f.clone(), g.clone()]))
        .collect();
    check_admissible(op, &all, grid)?;
    let set = EvaluationSet::new(grid, options.refinement)?;
    let solved: Vec<AlphaFractalResult> = all
        .par_iter()
        .map(|f| apply_fractal_operator(op, scaling, grid, f, options))
        .collect::<Result<_>>()?;
    let a = solved
        .iter()
        .map(|r| r.scaling_norm())
        .fold(scaling.as_constant().map_or(0.0, f64::abs), f64::max);
    let inv = 1.0 / (1.0 - a);
    let ratio = a * inv;

    let mut relative_bounds = Vec::new();
    let mut norm_ratio: f64 = 0.0;
    let mut operator_norm_estimate = set.norm(
        op.apply(&(Arc::new(Constant(0.0)) as SharedField), grid)?
            .as_ref(),
    )?;
    for (f, r) in samples.iter().zip(&solved) {
        let nf = set.norm(f.as_ref())?;
        let nlf = set.norm(op.apply(f, grid)?.as_ref())?;
        let lhs = r.function.sup_norm();
        relative_bounds.push(
            BoundCheck {
                lhs,
                rhs: inv * nf + ratio * nlf,
                allowance: solve_error(r) + BOUND_SLACK,
            }
            .require("fractal operator norm bounded relative to the base operator")?,
        );
        if nf > 0.0 {
            norm_ratio = norm_ratio.max(lhs / nf);
            operator_norm_estimate = operator_norm_estimate.max(nlf / nf);
        }
    }

    let estimated_lipschitz = if pairs.is_empty() {
        0.0
    } else {
        estimate_lipschitz(op, pairs, grid, options.refinement)?
    };
    let lip = op.lipschitz().unwrap_or(estimated_lipschitz);
    let fractal_lipschitz_bound = (1.0 + a * lip) * inv;
    let mut relative_lipschitz = Vec::new();
    let mut lipschitz = Vec::new();
    let mut fractal_lipschitz_estimate: f64 = 0.0;
    for (i, (f, g)) in pairs.iter().enumerate() {
        let rf = &solved[samples.len() + 2 * i];
        let rg = &solved[samples.len() + 2 * i + 1];
        let d = set.distance(f.as_ref(), g.as_ref())?;
        if d == 0.0 {
            return Err(Error::DegeneratePair { pair: i });
        }
        let dl = set.distance(op.apply(f, grid)?.as_ref(), op.apply(g, grid)?.as_ref())?;
        let lhs = crate::grid::sup_distance(&rf.function, &rg.function)?;
        let allowance = solve_error(rf) + solve_error(rg) + BOUND_SLACK;
        relative_lipschitz.push(
            BoundCheck {
                lhs,
                rhs: inv * d + ratio * dl,
                allowance,
            }
            .require("fractal operator differences bounded relative to the base operator")?,
        );
        lipschitz.push(
            BoundCheck {
                lhs,
                rhs: fractal_lipschitz_bound * d,
                allowance,
            }
            .require("fractal operator Lipschitz constant")?,
        );
        fractal_lipschitz_estimate = fractal_lipschitz_estimate.max(lhs / d);
    }

    let max_err = solved.iter().map(solve_error).fold(0.0, f64::max);
    let min_norm = samples
        .iter()
        .map(|f| set.norm(f.as_ref()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .filter(|n| *n > 0.0)
        .fold(f64::INFINITY, f64::min);
    let norm_transfer = BoundCheck {
        lhs: norm_ratio,
        rhs: (1.0 + a * operator_norm_estimate) * inv,
        allowance: if min_norm.is_finite() {
            max_err / min_norm
        } else {
            0.0
        } + BOUND_SLACK,
    }
    .require("fractal operator norm bound transferred from the base operator")?;

    Ok(OperatorBoundReport {
        refinement: options.refinement,
        scaling_norm: a,
        declared_lipschitz: op.lipschitz(),
        estimated_lipschitz,
        relative_bounds,
        relative_lipschitz,
        lipschitz,
        fractal_lipschitz_estimate,
        fractal_lipschitz_bound,
        operator_norm_estimate,
        norm_transfer,
    })
}

/// Outcome of [`verify_linearity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearityReport {
    /// `||𝓕(c f + g) - c 𝓕(f) - 𝓕(g)||` on the lattice.
    pub residual: f64,
    pub allowance: f64,
}

/// Checks that `𝓕` inherits linearity from a linear `L`, with allowance
/// three times the solver tolerance.
pub fn verify_linearity(
    op: &dyn Operator,
    scaling: &ScalingFunction,
    grid: &GridPartition,
    f: &SharedField,
    g: &SharedField,
    c: f64,
    options: &SolverOptions,
) -> Result<LinearityReport> {
    if !op.is_linear() {
        return Err(Error::NotLinear(op.name().to_string()));
    }
    let combo: SharedField = crate::field::combine(vec![(c, f.clone()), (1.0, g.clone())]);
    let inputs = [f.clone(), g.clone(), combo];
    check_admissible(op, &inputs, grid)?;
    let solved: Vec<AlphaFractalResult> = inputs
        .par_iter()
        .map(|h| apply_fractal_operator(op, scaling, grid, h, options))
        .collect::<Result<_>>()?;
    let expected = solved[0].function.combine(c, &solved[1].function, 1.0)?;
    let residual = crate::grid::sup_distance(&solved[2].function, &expected)?;
    let allowance = 3.0 * options.tol;
    if residual > allowance {
        return Err(Error::LinearityViolation {
            residual,
            allowance,
        });
    }
    Ok(LinearityReport {
        residual,
        allowance,
    })
}

/// Sample estimates of the norm bound and quasibound of `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNormEstimates {
    /// `max(sup ||Lf||/||f||, ||L0||)` over the samples and scales.
    pub norm_bound: f64,
    /// Largest `||L(s f)|| / ||s f||` at the largest scale `s`.
    pub quasibound: f64,
    /// `(scale, largest ratio at that scale)`.
    pub ratios: Vec<(f64, f64)>,
}

/// Scales at which the quasibound ratio is sampled.
pub const QUASIBOUND_SCALES: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// Evaluates `||L(s f)|| / ||s f||` over samples and scales. No admissibility
/// is required.
pub fn estimate_operator_norms(
    op: &dyn Operator,
    samples: &[SharedField],
    grid: &GridPartition,
    refinement: usize,
) -> Result<OperatorNormEstimates> {
    let set = EvaluationSet::new(grid, refinement)?;
    let zero: SharedField = Arc::new(Constant(0.0));
    let mut norm_bound = set.norm(op.apply(&zero, grid)?.as_ref())?;
    let mut ratios = Vec::new();
    for &s in &QUASIBOUND_SCALES {
        let mut worst: f64 = 0.0;
        for f in samples {
            let scaled = crate::field::combine(vec![(s, f.clone())]);
            let n = set.norm(scaled.as_ref())?;
            if n > 0.0 {
                worst = worst.max(set.norm(op.apply(&scaled, grid)?.as_ref())? / n);
            }
        }
        norm_bound = norm_bound.max(worst);
        ratios.push((s, worst));
    }
    let quasibound = ratios.last().map_or(0.0, |r| r.1);
    Ok(OperatorNormEstimates {
        norm_bound,
        quasibound,
        ratios,
    })
}

/// Outcome of [`invert_fractal_operator`].
#[derive(Debug, Clone)]
pub struct InverseResult {
    /// Recovered seed on the target's lattice.
    pub seed: SampledFunction,
    pub iterations: usize,
    pub final_change: f64,
    /// `||α|| |L|`, the contraction factor of the iteration.
    pub contraction: f64,
    /// `||𝓕(seed) - target||` on the lattice.
    pub residual: f64,
    /// Whether `||α|| < 1/(2 + |L|)`, under which `𝓕` is bilipschitz.
    pub bilipschitz_certified: bool,
    /// `(1 - ||α||) / (1 - ||α||(2 + |L|))`, reported when certified.
    pub inverse_lipschitz_bound: Option<f64>,
}

/// Recovers `f` with `𝓕(f) = target` by iterating
/// `f <- target - α (target - L f) ∘ u^{-1}` cell by cell, which contracts
/// with factor `||α|| |L|`.
pub fn invert_fractal_operator(
    target: &SampledFunction,
    op: &dyn Operator,
    scaling: &ScalingFunction,
    options: &SolverOptions,
) -> Result<InverseResult> {
    let lip = op
        .lipschitz()
        .ok_or_else(|| Error::MissingLipschitz(op.name().to_string()))?;
    let lattice = target.lattice().clone();
    let grid = lattice.grid().clone();
    let a = scaling.certify(&lattice)?.lattice_max;
    let q = a * lip;
    if q >= 1.0 {
        return Err(Error::ContractionConditionFailed { product: q });
    }
    let set = EvaluationSet::new(&grid, lattice.refinement())?;
    let n = lattice.dim();
    let alpha = SampledFunction::from_field(lattice.clone(), scaling.field().as_ref())?;
    // target interpolated at each lattice point's preimage
    let mut target_pre = vec![0.0; lattice.len()];
    let pre_point = |p: usize, idx: &mut [usize], y: &mut [f64]| {
        lattice.unravel(p, idx);
        for k in 0..n {
            y[k] = set.preimages[k][idx[k]];
        }
    };
    target_pre.par_iter_mut().enumerate().for_each_init(
        || (vec![0usize; n], vec![0.0; n]),
        |(idx, y), (p, v)| {
            pre_point(p, idx, y);
            *v = target.eval_unchecked(y);
        },
    );

    let mut current = target.clone();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let factor = q / (1.0 - q);
    let mut converged = false;
    while iterations < options.max_iter {
        let lf = op.apply(&(Arc::new(current.clone()) as SharedField), &grid)?;
        let mut next = vec![0.0; lattice.len()];
        next.par_iter_mut().enumerate().for_each_init(
            || (vec![0usize; n], vec![0.0; n]),
            |(idx, y), (p, v)| {
                pre_point(p, idx, y);
                *v = target.values()[p] - alpha.values()[p] * (target_pre[p] - lf.eval(y));
            },
        );
        change = next
            .par_iter()
            .zip(current.values())
            .map(|(a, b)| (a - b).abs())
            .reduce(|| 0.0, f64::max);
        current = SampledFunction::from_values(lattice.clone(), next)?;
        iterations += 1;
        if !change.is_finite() {
            break;
        }
        if change <= options.tol || factor * change <= options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged { iterations, change });
    }

    let seed_field: SharedField = Arc::new(current.clone());
    let forward = apply_fractal_operator(
        op,
        scaling,
        &grid,
        &seed_field,
        &options.with_refinement(lattice.refinement()),
    )?;
    let residual = crate::grid::sup_distance(&forward.function, target)?;
    let certified = a < 1.0 / (2.0 + lip);
    Ok(InverseResult {
        seed: current,
        iterations,
        final_change: change,
        contraction: q,
        residual,
        bilipschitz_certified: certified,
        inverse_lipschitz_bound: certified.then(|| (1.0 - a) / (1.0 - a * (2.0 + lip))),
    })
}

/// Random smooth test functions `sum_k a_k sin(w_k x_k + p_k) + c`, useful as
/// operator samples.
pub fn random_fields(dim: usize, count: usize, seed: u64) -> Vec<SharedField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let terms: Vec<(f64, f64, f64)> = (0..dim)
                .map(|_| {
                    (
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(0.5..6.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let c = rng.gen_range(-1.0..1.0);
            Arc::new(move |x: &[f64]| {
                c + terms
                    .iter()
                    .zip(x)
                    .map(|((a, w, p), x)| a * (w * x + p).sin())
                    .sum::<f64>()
            }) as SharedField
        })
        .collect()
}
