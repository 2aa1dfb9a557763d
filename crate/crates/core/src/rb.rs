//! The general fractal interpolation engine: vertical maps, constraint and
//! matching-condition checks, the Read–Bajraktarević operator on a lattice,
//! the fixed-point solver, and attractor sampling.
//!
//! The operator is
//!
//! ```text
//! (T g)(X) = F_c(u_c^{-1}(X), g(u_c^{-1}(X)))   for X in cell c
//! ```
//!
//! evaluated at every lattice point, with `g` looked up by multilinear
//! interpolation at the (generally off-lattice) preimage. The discrete
//! operator keeps the contraction property: interpolation weights are convex,
//! so `|Tg - Th| <= max_c gamma_c * |g - h|` on the lattice.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::SharedField;
use crate::grid::{
    blend, tau, DataTensor, GridPartition, Lattice, MultiIndexIter, SampledFunction,
};
use crate::maps::CellMaps;

/// Tolerance for checks of identities that hold exactly in exact arithmetic.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// Default limit on the number of points produced by [`sample_attractor`].
pub const ATTRACTOR_POINT_CAP: usize = 4_000_000;

/// The family of vertical maps `F_c(X, y)`, one per cell `c`.
///
/// `X` ranges over the whole domain; cells are 1-based multi-indices.
pub trait VerticalMaps: Send + Sync {
    fn eval(&self, cell: &[usize], x: &[f64], y: f64) -> f64;

    /// Declared Lipschitz constant of `y -> F_c(X, y)`.
    fn y_contraction(&self, cell: &[usize]) -> f64;

    /// `(c0, c1)` with `F_c(X, y) = c0 + c1 * y`, when the map is affine in `y`.
    /// Lets the solver precompute per-point coefficients once.
    fn affine_in_y(&self, _cell: &[usize], _x: &[f64]) -> Option<(f64, f64)> {
        None
    }

    /// A known function `r` to look values up against. Off-lattice lookups
    /// interpolate `g - r` and add `r` back, so only the deviation of `g`
    /// from `r` carries interpolation error.
    fn lookup_reference(&self) -> Option<SharedField> {
        None
    }
}

type VerticalFn = dyn Fn(&[usize], &[f64], f64) -> f64 + Send + Sync;

/// Vertical maps given by a closure and per-cell contraction constants.
pub struct FnVerticalMaps {
    f: Arc<VerticalFn>,
    grid: GridPartition,
    gammas: Vec<f64>,
}

impl FnVerticalMaps {
    /// `gamma(cell)` is the declared y-contraction of each cell.
    pub fn new<F, G>(grid: &GridPartition, f: F, gamma: G) -> Self
    where
        F: Fn(&[usize], &[f64], f64) -> f64 + Send + Sync + 'static,
        G: Fn(&[usize]) -> f64,
    {
        let gammas = grid.cells().map(|c| gamma(&c)).collect();
        Self {
            f: Arc::new(f),
            grid: grid.clone(),
            gammas,
        }
    }
}

impl VerticalMaps for FnVerticalMaps {
    fn eval(&self, cell: &[usize], x: &[f64], y: f64) -> f64 {
        (self.f)(cell, x, y)
    }

    fn y_contraction(&self, cell: &[usize]) -> f64 {
        self.gammas[self.grid.cell_offset(cell)]
    }
}

/// The IFS `{ W_c(X, y) = (u_c(X), F_c(X, y)) }` of a gridded data set.
#[derive(Clone)]
pub struct FifSystem {
    grid: GridPartition,
    data: DataTensor,
    maps: CellMaps,
    vertical: Arc<dyn VerticalMaps>,
}

impl fmt::Debug for FifSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FifSystem")
            .field("grid", &self.grid)
            .field("gamma_max", &self.gamma_max())
            .finish_non_exhaustive()
    }
}

impl FifSystem {
    pub fn new(
        grid: GridPartition,
        data: DataTensor,
        vertical: Arc<dyn VerticalMaps>,
    ) -> Result<Self> {
        if data.shape() != grid.node_shape().as_slice() {
            return Err(Error::ShapeMismatch {
                expected: grid.node_count(),
                got: data.values().len(),
            });
        }
        for cell in grid.cells() {
            let gamma = vertical.y_contraction(&cell);
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::InvalidContraction { cell, gamma });
            }
        }
        let maps = CellMaps::new(&grid);
        Ok(Self {
            grid,
            data,
            maps,
            vertical,
        })
    }

    pub fn grid(&self) -> &GridPartition {
        &self.grid
    }

    pub fn data(&self) -> &DataTensor {
        &self.data
    }

    pub fn maps(&self) -> &CellMaps {
        &self.maps
    }

    pub fn vertical(&self) -> &Arc<dyn VerticalMaps> {
        &self.vertical
    }

    /// `||gamma||_inf = max_c gamma_c`.
    pub fn gamma_max(&self) -> f64 {
        self.grid
            .cells()
            .map(|c| self.vertical.y_contraction(&c))
            .fold(0.0, f64::max)
    }

    /// `W_c(X, y)`.
    pub fn apply_map(&self, cell: &[usize], x: &[f64], y: f64) -> (Vec<f64>, f64) {
        let mut image = vec![0.0; x.len()];
        self.maps.forward_into(cell, x, &mut image);
        (image, self.vertical.eval(cell, x, y))
    }
}

/// Outcome of [`verify_data_constraints`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    pub checks: usize,
    pub max_residual: f64,
    /// Largest residual per cell, row-major over cells.
    pub per_cell: Vec<f64>,
}

/// Checks `F_c(x_j, y_j) = y_{tau(c, j)}` for every cell `c` and every corner
/// `j`.
pub fn verify_data_constraints(system: &FifSystem) -> Result<ConstraintReport> {
    let grid = system.grid();
    let shape = grid.cell_shape();
    let corners = grid.corners();
    let mut per_cell = Vec::with_capacity(grid.cell_count());
    let mut checks = 0;
    for cell in grid.cells() {
        let mut worst: f64 = 0.0;
        for corner in &corners {
            let x = grid.node_point(corner);
            let y = system.data().get(corner);
            let target_node: Vec<usize> = cell
                .iter()
                .zip(corner)
                .zip(&shape)
                .map(|((&i, &j), &n)| tau(i, j, n))
                .collect::<Result<_>>()?;
            let target = system.data().get(&target_node);
            let residual = (system.vertical().eval(&cell, &x, y) - target).abs();
            if residual > IDENTITY_TOLERANCE || residual.is_nan() {
                return Err(Error::DataConstraintViolation {
                    cell,
                    corner: corner.clone(),
                    residual,
                });
            }
            worst = worst.max(residual);
            checks += 1;
        }
        per_cell.push(worst);
    }
    let max_residual = per_cell.iter().copied().fold(0.0, f64::max);
    Ok(ConstraintReport {
        checks,
        max_residual,
        per_cell,
    })
}

/// Outcome of [`estimate_y_contraction`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    /// `(cell, observed ratio, declared gamma)`, row-major over cells.
    pub per_cell: Vec<(Vec<usize>, f64, f64)>,
    pub max_observed: f64,
}

fn y_sampling_range(data: &DataTensor) -> (f64, f64) {
    let lo = data.values().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data
        .values()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1.0);
    (lo - span, hi + span)
}

fn random_point(grid: &GridPartition, rng: &mut impl Rng) -> Vec<f64> {
    grid.axes()
        .iter()
        .map(|a| rng.gen_range(a.start()..=a.end()))
        .collect()
}

/// Largest sampled ratio `|F_c(X,y) - F_c(X,y')| / |y - y'|` per cell; fails
/// when it exceeds the declared constant.
pub fn estimate_y_contraction(
    system: &FifSystem,
    samples: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let grid = system.grid();
    let (ylo, yhi) = y_sampling_range(system.data());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_cell = Vec::with_capacity(grid.cell_count());
    for cell in grid.cells() {
        let declared = system.vertical().y_contraction(&cell);
        let mut observed: f64 = 0.0;
        for _ in 0..samples.max(1) {
            let x = random_point(grid, &mut rng);
            let y = rng.gen_range(ylo..=yhi);
            let mut y2 = rng.gen_range(ylo..=yhi);
            if y2 == y {
                y2 = y + 1.0;
            }
            let v = system.vertical();
            let ratio = (v.eval(&cell, &x, y) - v.eval(&cell, &x, y2)).abs() / (y - y2).abs();
            observed = observed.max(ratio);
        }
        if observed > declared + IDENTITY_TOLERANCE || observed.is_nan() {
            return Err(Error::ContractionViolation {
                cell,
                declared,
                observed,
            });
        }
        per_cell.push((cell, observed, declared));
    }
    let max_observed = per_cell.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(ContractionReport {
        per_cell,
        max_observed,
    })
}

/// Sampling parameters for [`verify_matching_conditions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchingOptions {
    pub samples_per_face: usize,
    pub y_values: usize,
    pub seed: u64,
}

impl Default for MatchingOptions {
    fn default() -> Self {
        Self {
            samples_per_face: 50,
            y_values: 5,
            seed: 0x5eed,
        }
    }
}

/// Outcome of [`verify_matching_conditions`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingReport {
    /// Number of shared faces (adjacent cell pairs) checked.
    pub faces: usize,
    pub checks: usize,
    pub max_residual: f64,
}

/// A pair of cells sharing the face at interior knot `knot` of `axis`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedFace {
    pub axis: usize,
    pub knot: usize,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

/// Every pair of cells adjacent across an interior knot.
pub fn shared_faces(grid: &GridPartition) -> Vec<SharedFace> {
    let shape = grid.cell_shape();
    let mut faces = Vec::new();
    for axis in 0..grid.dim() {
        for knot in 1..shape[axis] {
            let mut lo = vec![1; shape.len()];
            let mut hi = shape.clone();
            lo[axis] = knot;
            hi[axis] = knot;
            for lower in MultiIndexIter::new(lo, hi) {
                let mut upper = lower.clone();
                upper[axis] += 1;
                faces.push(SharedFace {
                    axis,
                    knot,
                    lower,
                    upper,
                });
            }
        }
    }
    faces
}

/// `count` random points on shared faces, cycling through the faces; each
/// lies in at least two cells.
pub fn shared_face_probes(grid: &GridPartition, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let faces = shared_faces(grid);
    if faces.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let face = &faces[i % faces.len()];
            let mut x: Vec<f64> = face
                .lower
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let (lo, hi) = grid.axis(k).cell_bounds(c);
                    rng.gen_range(lo..=hi)
                })
                .collect();
            x[face.axis] = grid.axis(face.axis).knots()[face.knot];
            x
        })
        .collect()
}

/// Samples the matching conditions: adjacent cells' vertical maps must agree
/// wherever the shared coordinate equals the common pull-back point of the
/// knot between them.
pub fn verify_matching_conditions(
    system: &FifSystem,
    options: MatchingOptions,
) -> Result<MatchingReport> {
    let grid = system.grid();
    let (ylo, yhi) = y_sampling_range(system.data());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let faces = shared_faces(grid);
    let mut checks = 0;
    let mut max_residual: f64 = 0.0;
    for face in &faces {
        let knot_value = grid.axis(face.axis).knots()[face.knot];
        let shared = system
            .maps()
            .get(face.axis, face.knot)
            .inverse_unchecked(knot_value);
        for _ in 0..options.samples_per_face {
            let mut x = random_point(grid, &mut rng);
            x[face.axis] = shared;
            for _ in 0..options.y_values {
                let y = rng.gen_range(ylo..=yhi);
                let v = system.vertical();
                let residual = (v.eval(&face.lower, &x, y) - v.eval(&face.upper, &x, y)).abs();
                if residual > IDENTITY_TOLERANCE || residual.is_nan() {
                    return Err(Error::MatchingViolation {
                        axis: face.axis,
                        knot: face.knot,
                        lower: face.lower.clone(),
                        upper: face.upper.clone(),
                        witness: x,
                        residual,
                    });
                }
                max_residual = max_residual.max(residual);
                checks += 1;
            }
        }
    }
    Ok(MatchingReport {
        faces: faces.len(),
        checks,
        max_residual,
    })
}

#[derive(Debug, Clone, Copy)]
struct AxisStep {
    /// 1-based cell containing the lattice coordinate (lower-cell rule).
    cell: usize,
    /// Preimage `u^{-1}` of the coordinate.
    preimage: f64,
    /// Lower lattice index and fraction of the preimage.
    lo: usize,
    t: f64,
}

fn axis_steps(system: &FifSystem, lattice: &Lattice) -> Vec<Vec<AxisStep>> {
    (0..lattice.dim())
        .map(|k| {
            let axis = system.grid().axis(k);
            lattice
                .coords(k)
                .iter()
                .map(|&x| {
                    let (cell, _) = axis.locate(x).expect("lattice lies in the domain");
                    let preimage = system.maps().get(k, cell).inverse_unchecked(x);
                    let (lo, t) = lattice.locate_axis(k, preimage);
                    AxisStep {
                        cell,
                        preimage,
                        lo,
                        t,
                    }
                })
                .collect()
        })
        .collect()
}

/// Per-axis preimages `u^{-1}` of the lattice coordinates. The preimage of
/// lattice point `(p_1, ..., p_n)` is `(out[0][p_1], ..., out[n-1][p_n])`.
pub fn lattice_preimages(system: &FifSystem, lattice: &Lattice) -> Result<Vec<Vec<f64>>> {
    if lattice.grid() != system.grid() {
        return Err(Error::LatticeMismatch);
    }
    Ok(axis_steps(system, lattice)
        .into_iter()
        .map(|steps| steps.into_iter().map(|s| s.preimage).collect())
        .collect())
}

/// The Read–Bajraktarević operator of a system, prepared for one lattice.
///
/// Cells, preimages and interpolation stencils are separable per axis and
/// computed once; if the vertical maps are affine in `y` the per-point
/// coefficients are cached as well.
pub struct RbOperator {
    system: FifSystem,
    lattice: Arc<Lattice>,
    steps: Vec<Vec<AxisStep>>,
    /// `r(pre) - (I r)(pre)` per lattice point, when a reference is declared.
    shift: Option<Vec<f64>>,
    affine: Option<Vec<(f64, f64)>>,
}

impl fmt::Debug for RbOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RbOperator")
            .field("lattice_points", &self.lattice.len())
            .field("affine", &self.affine.is_some())
            .finish()
    }
}

impl RbOperator {
    pub fn new(system: &FifSystem, lattice: Arc<Lattice>) -> Result<Self> {
        if lattice.grid() != system.grid() {
            return Err(Error::LatticeMismatch);
        }
        let steps = axis_steps(system, &lattice);
        let mut op = Self {
            system: system.clone(),
            lattice,
            steps,
            shift: None,
            affine: None,
        };
        op.shift = op.reference_shift()?;
        op.affine = op.affine_coefficients();
        Ok(op)
    }

    fn reference_shift(&self) -> Result<Option<Vec<f64>>> {
        let Some(r) = self.system.vertical().lookup_reference() else {
            return Ok(None);
        };
        let sampled = SampledFunction::from_field(self.lattice.clone(), r.as_ref())?;
        let n = self.lattice.dim();
        let shift = (0..self.lattice.len())
            .into_par_iter()
            .map_init(
                || (vec![0usize; n], vec![0.0; n], vec![0.0; n]),
                |(idx, ts, pre), p| {
                    let interpolated = self.lookup(sampled.values(), p, idx, ts);
                    for k in 0..n {
                        pre[k] = self.steps[k][idx[k]].preimage;
                    }
                    r.eval(pre) - interpolated
                },
            )
            .collect();
        Ok(Some(shift))
    }

    fn affine_coefficients(&self) -> Option<Vec<(f64, f64)>> {
        let n = self.lattice.dim();
        let coeffs: Vec<Option<(f64, f64)>> = (0..self.lattice.len())
            .into_par_iter()
            .map_init(
                || (vec![0usize; n], vec![0usize; n], vec![0.0; n]),
                |(idx, cell, pre), p| {
                    self.lattice.unravel(p, idx);
                    for k in 0..n {
                        let s = &self.steps[k][idx[k]];
                        cell[k] = s.cell;
                        pre[k] = s.preimage;
                    }
                    let (c0, c1) = self.system.vertical().affine_in_y(cell, pre)?;
                    let shift = self.shift.as_ref().map_or(0.0, |s| s[p]);
                    Some((c0 + c1 * shift, c1))
                },
            )
            .collect();
        coeffs.into_iter().collect()
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn system(&self) -> &FifSystem {
        &self.system
    }

    /// Whether the cached affine fast path is in use.
    pub fn is_affine(&self) -> bool {
        self.affine.is_some()
    }

    /// Cell, preimage and looked-up `g` value for lattice point `p`.
    fn lookup(&self, g: &[f64], p: usize, idx: &mut [usize], ts: &mut [f64]) -> f64 {
        self.lattice.unravel(p, idx);
        let strides = self.lattice.strides();
        let mut base = 0;
        for k in 0..idx.len() {
            let s = &self.steps[k][idx[k]];
            base += s.lo * strides[k];
            ts[k] = s.t;
        }
        blend(g, strides, base, ts)
    }

    /// `out = T g`, both as raw lattice values.
    pub fn apply_into(&self, g: &[f64], out: &mut [f64]) {
        let n = self.lattice.dim();
        match &self.affine {
            Some(coeffs) => out.par_iter_mut().enumerate().for_each_init(
                || (vec![0usize; n], vec![0.0; n]),
                |(idx, ts), (p, o)| {
                    let (c0, c1) = coeffs[p];
                    *o = c0 + c1 * self.lookup(g, p, idx, ts);
                },
            ),
            None => out.par_iter_mut().enumerate().for_each_init(
                || (vec![0usize; n], vec![0.0; n], vec![0usize; n], vec![0.0; n]),
                |(idx, ts, cell, pre), (p, o)| {
                    let y = self.lookup(g, p, idx, ts) + self.shift.as_ref().map_or(0.0, |s| s[p]);
                    for k in 0..n {
                        let s = &self.steps[k][idx[k]];
                        cell[k] = s.cell;
                        pre[k] = s.preimage;
                    }
                    *o = self.system.vertical().eval(cell, pre, y);
                },
            ),
        }
    }

    pub fn apply(&self, g: &SampledFunction) -> Result<SampledFunction> {
        if !g.lattice().same_as(&self.lattice) {
            return Err(Error::LatticeMismatch);
        }
        let mut out = vec![0.0; self.lattice.len()];
        self.apply_into(g.values(), &mut out);
        SampledFunction::from_values(self.lattice.clone(), out)
    }

    /// Every lattice point's preimage `u_c^{-1}(X)`, row-major.
    pub fn preimages(&self) -> Vec<Vec<f64>> {
        let n = self.lattice.dim();
        let mut idx = vec![0; n];
        (0..self.lattice.len())
            .map(|p| {
                self.lattice.unravel(p, &mut idx);
                (0..n).map(|k| self.steps[k][idx[k]].preimage).collect()
            })
            .collect()
    }
}

/// `T g` on `g`'s lattice.
pub fn apply_rb_operator(system: &FifSystem, g: &SampledFunction) -> Result<SampledFunction> {
    RbOperator::new(system, g.lattice().clone())?.apply(g)
}

/// Looks up `g` off the lattice, relative to the system's reference if any.
struct PointLookup<'a> {
    g: &'a SampledFunction,
    reference: Option<(SharedField, SampledFunction)>,
}

impl<'a> PointLookup<'a> {
    fn new(system: &FifSystem, g: &'a SampledFunction) -> Result<Self> {
        let reference = match system.vertical().lookup_reference() {
            Some(r) => {
                let sampled = SampledFunction::from_field(g.lattice().clone(), r.as_ref())?;
                Some((r, sampled))
            }
            None => None,
        };
        Ok(Self { g, reference })
    }

    fn value(&self, x: &[f64]) -> f64 {
        let y = self.g.eval_unchecked(x);
        match &self.reference {
            Some((r, sampled)) => y + r.eval(x) - sampled.eval_unchecked(x),
            None => y,
        }
    }

    fn rb_value(&self, system: &FifSystem, cell: &[usize], x: &[f64]) -> Result<f64> {
        if !system.grid().cell_contains(cell, x) {
            return Err(Error::PointNotInCell {
                point: x.to_vec(),
                cell: cell.to_vec(),
            });
        }
        let mut pre = vec![0.0; x.len()];
        system.maps().inverse_into(cell, x, &mut pre);
        Ok(system.vertical().eval(cell, &pre, self.value(&pre)))
    }
}

/// `(T g)(X)` computed through a specific cell containing `X`.
pub fn rb_value_in_cell(
    system: &FifSystem,
    g: &SampledFunction,
    cell: &[usize],
    x: &[f64],
) -> Result<f64> {
    PointLookup::new(system, g)?.rb_value(system, cell, x)
}

/// Largest disagreement of `(T g)(X)` across the cells sharing each probe.
pub fn well_definedness_residual(
    system: &FifSystem,
    g: &SampledFunction,
    probes: &[Vec<f64>],
) -> Result<f64> {
    let lookup = PointLookup::new(system, g)?;
    let mut worst: f64 = 0.0;
    for x in probes {
        let values = system
            .grid()
            .cells_containing(x)?
            .iter()
            .map(|c| lookup.rb_value(system, c, x))
            .collect::<Result<Vec<f64>>>()?;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}

/// Whether [`solve_fif`] runs the constraint checks before iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintCheck {
    Verify,
    Waive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Lattice steps per cell and axis.
    pub refinement: usize,
    pub constraints: ConstraintCheck,
    pub matching: MatchingOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
            refinement: crate::grid::DEFAULT_REFINEMENT,
            constraints: ConstraintCheck::Verify,
            matching: MatchingOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_refinement(mut self, refinement: usize) -> Self {
        self.refinement = refinement;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn waive_constraints(mut self) -> Self {
        self.constraints = ConstraintCheck::Waive;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// Lattice sup-norm of the last update `|g_{k+1} - g_k|`.
    pub final_change: f64,
    /// `||gamma||_inf` of the system.
    pub contraction: f64,
    /// Banach estimate `gamma / (1 - gamma) * final_change` of the distance
    /// to the discrete fixed point.
    pub a_posteriori_bound: f64,
    /// Update sizes of every iteration.
    pub residual_history: Vec<f64>,
    /// Largest node deviation from the data before node values were pinned.
    pub node_residual: f64,
    pub refinement: usize,
    pub lattice_points: usize,
}

impl SolveDiagnostics {
    /// Least-squares ratio of successive updates (slope of `log change`).
    pub fn fitted_rate(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .residual_history
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 0.0)
            .map(|(i, r)| (i as f64, r.ln()))
            .collect();
        log_slope(&pts).map(f64::exp)
    }
}

/// Least-squares slope of `(x, y)` pairs.
pub fn log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Runs the data, matching and y-contraction checks.
pub fn verify_system(system: &FifSystem, matching: MatchingOptions) -> Result<()> {
    verify_data_constraints(system)?;
    verify_matching_conditions(system, matching)?;
    estimate_y_contraction(system, 200, matching.seed)?;
    Ok(())
}

/// Solves for the fractal interpolation function starting from the
/// multilinear interpolant of the data.
pub fn solve_fif(
    system: &FifSystem,
    options: &SolverOptions,
) -> Result<(SampledFunction, SolveDiagnostics)> {
    let lattice = Arc::new(Lattice::new(system.grid().clone(), options.refinement)?);
    let g0 = SampledFunction::from_data(lattice, system.data())?;
    solve_from(system, g0, options)
}

/// Fixed-point iteration `g_{k+1} = T g_k` from a caller-provided start.
///
/// Stops once the last update, or the Banach bound on the remaining error,
/// is at most `tol`. Node values of the result are pinned to the data; the
/// deviation before pinning is reported in the diagnostics.
pub fn solve_from(
    system: &FifSystem,
    start: SampledFunction,
    options: &SolverOptions,
) -> Result<(SampledFunction, SolveDiagnostics)> {
    if options.constraints == ConstraintCheck::Verify {
        verify_system(system, options.matching)
            .map_err(|e| Error::ConstraintsUnverified(Box::new(e)))?;
    }
    let op = RbOperator::new(system, start.lattice().clone())?;
    iterate(&op, start, options)
}

pub(crate) fn iterate(
    op: &RbOperator,
    start: SampledFunction,
    options: &SolverOptions,
) -> Result<(SampledFunction, SolveDiagnostics)> {
    let system = op.system();
    let lattice = op.lattice().clone();
    let gamma = system.gamma_max();
    let factor = gamma / (1.0 - gamma);
    let mut current = start.into_values();
    let mut next = vec![0.0; current.len()];
    let mut history = Vec::new();
    let mut change = f64::INFINITY;
    let mut converged = false;
    for _ in 0..options.max_iter {
        op.apply_into(&current, &mut next);
        change = current
            .par_iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .reduce(|| 0.0, f64::max);
        std::mem::swap(&mut current, &mut next);
        history.push(change);
        if !change.is_finite() {
            break;
        }
        if change <= options.tol || factor * change <= options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations: history.len(),
            change,
        });
    }
    let grid = system.grid();
    let mut node_residual: f64 = 0.0;
    for node in grid.nodes() {
        let p = lattice.node_offset(&node);
        let y = system.data().get(&node);
        node_residual = node_residual.max((current[p] - y).abs());
        current[p] = y;
    }
    let diagnostics = SolveDiagnostics {
        iterations: history.len(),
        final_change: change,
        contraction: gamma,
        a_posteriori_bound: factor * change,
        residual_history: history,
        node_residual,
        refinement: lattice.refinement(),
        lattice_points: lattice.len(),
    };
    Ok((SampledFunction::from_values(lattice, current)?, diagnostics))
}

/// Largest `|f(X) - F_c(u_c^{-1}(X), f(u_c^{-1}(X)))|` over the probes.
pub fn self_referential_residual(
    fif: &SampledFunction,
    system: &FifSystem,
    probes: &[Vec<f64>],
) -> Result<f64> {
    let lookup = PointLookup::new(system, fif)?;
    let mut worst: f64 = 0.0;
    for x in probes {
        let cell = system.grid().locate_cell(x)?.cell;
        let rhs = lookup.rb_value(system, &cell, x)?;
        worst = worst.max((fif.eval(x)? - rhs).abs());
    }
    Ok(worst)
}

/// A point `(X, y)` of an attractor approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Deterministic IFS iteration: starting from the data points on the graph
/// (plus `(seed, g_0(seed))` when a seed point is given), applies every map
/// `W_c` `depth` times and returns the final generation.
pub fn sample_attractor(
    system: &FifSystem,
    depth: usize,
    seed: Option<&[f64]>,
    cap: usize,
) -> Result<Vec<AttractorPoint>> {
    let grid = system.grid();
    let n = grid.dim();
    let mut points: Vec<f64> = Vec::new();
    for node in grid.nodes() {
        points.extend(grid.node_point(&node));
        points.push(system.data().get(&node));
    }
    if let Some(s) = seed {
        grid.check_point(s)?;
        let nodes = Arc::new(Lattice::new(grid.clone(), 1)?);
        let g0 = SampledFunction::from_values(nodes, system.data().values().to_vec())?;
        points.extend_from_slice(s);
        points.push(g0.eval(s)?);
    }
    let stride = n + 1;
    let initial = points.len() / stride;
    let cells: Vec<Vec<usize>> = grid.cells().collect();
    let total =
        (initial as u128).saturating_mul((cells.len() as u128).saturating_pow(depth as u32));
    if total > cap as u128 {
        return Err(Error::DepthTooLarge { points: total, cap });
    }
    for _ in 0..depth {
        let next: Vec<f64> = cells
            .par_iter()
            .flat_map_iter(|cell| {
                points.chunks_exact(stride).flat_map(move |pt| {
                    let (x, y) = pt.split_at(n);
                    let mut out = vec![0.0; stride];
                    system.maps().forward_into(cell, x, &mut out[..n]);
                    out[n] = system.vertical().eval(cell, x, y[0]);
                    out
                })
            })
            .collect();
        points = next;
    }
    Ok(points
        .chunks_exact(stride)
        .map(|pt| AttractorPoint {
            x: pt[..n].to_vec(),
            y: pt[n],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;
    use approx::assert_abs_diff_eq;

    /// 1D system with the perturbation maps of f = x^2, b = x and a
    /// constant scaling, written out by hand.
    fn square_system(alpha: f64) -> FifSystem {
        let grid = GridPartition::from_knots(vec![vec![0.0, 0.5, 1.0]]).unwrap();
        let data = DataTensor::new(&grid, vec![0.0, 0.25, 1.0]).unwrap();
        let maps = CellMaps::new(&grid);
        let vertical = FnVerticalMaps::new(
            &grid,
            move |cell, x, y| {
                let ux = maps.get(0, cell[0]).forward_unchecked(x[0]);
                ux * ux + alpha * (y - x[0])
            },
            move |_| alpha.abs(),
        );
        FifSystem::new(grid, data, Arc::new(vertical)).unwrap()
    }

    #[test]
    fn data_constraints_square_system() {
        let report = verify_data_constraints(&square_system(0.4)).unwrap();
        assert_eq!(report.checks, 4);
        assert!(report.max_residual <= 1e-15);
    }

    #[test]
    fn perturbed_corner_is_rejected() {
        let grid = GridPartition::from_knots(vec![vec![0.0, 0.5, 1.0]]).unwrap();
        let data = DataTensor::new(&grid, vec![0.0, 0.25, 1.0]).unwrap();
        let maps = CellMaps::new(&grid);
        let vertical = FnVerticalMaps::new(
            &grid,
            move |cell, x, y| {
                let ux = maps.get(0, cell[0]).forward_unchecked(x[0]);
                let bump = if x[0] == 1.0 && cell[0] == 2 {
                    0.1
                } else {
                    0.0
                };
                ux * ux + 0.4 * (y - x[0]) + bump
            },
            |_| 0.4,
        );
        let system = FifSystem::new(grid, data, Arc::new(vertical)).unwrap();
        match verify_data_constraints(&system) {
            Err(Error::DataConstraintViolation { cell, corner, .. }) => {
                assert_eq!(cell, vec![2]);
                assert_eq!(corner, vec![2]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn y_contraction_estimates() {
        let report = estimate_y_contraction(&square_system(0.4), 100, 1).unwrap();
        assert_abs_diff_eq!(report.max_observed, 0.4, epsilon = 1e-12);
        let report = estimate_y_contraction(&square_system(0.0), 100, 1).unwrap();
        assert_eq!(report.max_observed, 0.0);

        let grid = GridPartition::from_knots(vec![vec![0.0, 0.5, 1.0]]).unwrap();
        let data = DataTensor::new(&grid, vec![0.0, 0.25, 1.0]).unwrap();
        let lying = FnVerticalMaps::new(&grid, |_, _, y| 0.4 * y, |_| 0.1);
        let system = FifSystem::new(grid, data, Arc::new(lying)).unwrap();
        assert!(matches!(
            estimate_y_contraction(&system, 10, 1),
            Err(Error::ContractionViolation { .. })
        ));
    }

    #[test]
    fn invalid_declared_gamma() {
        let grid = GridPartition::from_knots(vec![vec![0.0, 0.5, 1.0]]).unwrap();
        let data = DataTensor::new(&grid, vec![0.0, 0.25, 1.0]).unwrap();
        let v = FnVerticalMaps::new(&grid, |_, _, y| y, |_| 1.0);
        assert!(matches!(
            FifSystem::new(grid, data, Arc::new(v)),
            Err(Error::InvalidContraction { .. })
        ));
    }

    #[test]
    fn face_count_2x2() {
        let grid = GridPartition::uniform(2, 0.0, 1.0, 2).unwrap();
        assert_eq!(shared_faces(&grid).len(), 4);
        let grid =
            GridPartition::from_knots(vec![vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 2.0]]).unwrap();
        // axis 0: 2 interior knots x 2 cells; axis 1: 1 interior knot x 3 cells
        assert_eq!(shared_faces(&grid).len(), 7);
    }

    #[test]
    fn face_probes_lie_in_two_cells() {
        let grid =
            GridPartition::from_knots(vec![vec![0.0, 0.3, 1.0], vec![0.0, 1.0, 2.0, 2.5]]).unwrap();
        let probes = shared_face_probes(&grid, 40, 3);
        assert_eq!(probes.len(), 40);
        for p in &probes {
            assert!(grid.cells_containing(p).unwrap().len() >= 2);
        }
    }

    #[test]
    fn independent_affine_maps_fail_matching() {
        let grid = GridPartition::uniform(2, 0.0, 1.0, 2).unwrap();
        let data = DataTensor::new(&grid, vec![0.0; 9]).unwrap();
        let v = FnVerticalMaps::new(
            &grid,
            |cell, x, y| 0.3 * y + (cell[0] as f64) * x[0] + 0.7 * (cell[1] as f64) * x[1],
            |_| 0.3,
        );
        let system = FifSystem::new(grid, data, Arc::new(v)).unwrap();
        assert!(matches!(
            verify_matching_conditions(&system, MatchingOptions::default()),
            Err(Error::MatchingViolation { .. })
        ));
    }

    #[test]
    fn square_system_rb_desk_values() {
        let system = square_system(0.4);
        let lattice = Arc::new(Lattice::new(system.grid().clone(), 4).unwrap());
        // g = b = x: (Tg)(0.25) = 0.0625 + 0.4 (g - b)(0.5) = 0.0625
        let g = SampledFunction::from_field(lattice.clone(), &|x: &[f64]| x[0]).unwrap();
        let tg = apply_rb_operator(&system, &g).unwrap();
        assert_abs_diff_eq!(tg.eval(&[0.25]).unwrap(), 0.0625, epsilon = 1e-15);

        let (fif, diag) =
            solve_fif(&system, &SolverOptions::default().with_refinement(64)).unwrap();
        assert!(diag.iterations > 1);
        assert_abs_diff_eq!(fif.eval(&[0.25]).unwrap(), -0.0375, epsilon = 1e-9);
        assert_abs_diff_eq!(fif.eval(&[0.75]).unwrap(), 0.4625, epsilon = 1e-9);
        let probes: Vec<Vec<f64>> = (0..=8).map(|i| vec![i as f64 / 8.0]).collect();
        assert!(self_referential_residual(&fif, &system, &probes).unwrap() <= 1e-9);
    }

    #[test]
    fn zero_scaling_converges_in_one_step() {
        let system = square_system(0.0);
        let (fif, diag) =
            solve_fif(&system, &SolverOptions::default().with_refinement(16)).unwrap();
        assert_eq!(diag.iterations, 1);
        assert_eq!(diag.a_posteriori_bound, 0.0);
        for p in 0..fif.lattice().len() {
            let x = fif.lattice().point(p);
            assert_abs_diff_eq!(fif.values()[p], x[0] * x[0], epsilon = 1e-15);
        }
    }

    #[test]
    fn not_converged_is_reported() {
        let system = square_system(0.9);
        let opts = SolverOptions::default().with_max_iter(3).with_refinement(8);
        assert!(matches!(
            solve_fif(&system, &opts),
            Err(Error::NotConverged { iterations: 3, .. })
        ));
    }

    #[test]
    fn unverifiable_system_is_refused_unless_waived() {
        let grid = GridPartition::from_knots(vec![vec![0.0, 0.5, 1.0]]).unwrap();
        let data = DataTensor::new(&grid, vec![0.0, 0.25, 1.0]).unwrap();
        let v = FnVerticalMaps::new(&grid, |_, _, y| 0.5 * y + 3.0, |_| 0.5);
        let system = FifSystem::new(grid, data, Arc::new(v)).unwrap();
        let opts = SolverOptions::default().with_refinement(4);
        let err = solve_fif(&system, &opts).unwrap_err();
        assert!(matches!(err, Error::ConstraintsUnverified(_)));
        assert!(err.is_verification_failure());
        assert!(solve_fif(&system, &opts.waive_constraints()).is_ok());
    }

    #[test]
    fn attractor_counts_and_graph() {
        let system = square_system(0.0);
        let pts = sample_attractor(&system, 1, None, ATTRACTOR_POINT_CAP).unwrap();
        assert_eq!(pts.len(), 2 * 3);
        for p in &pts {
            assert_abs_diff_eq!(p.y, p.x[0] * p.x[0], epsilon = 1e-15);
        }
        let pts = sample_attractor(&system, 2, Some(&[0.3]), ATTRACTOR_POINT_CAP).unwrap();
        assert_eq!(pts.len(), 4 * 4);
        assert!(matches!(
            sample_attractor(&system, 30, None, 1000),
            Err(Error::DepthTooLarge { .. })
        ));
    }

    #[test]
    fn corner_only_g_is_mapped_onto_all_data() {
        let system = square_system(0.4);
        let lattice = Arc::new(Lattice::new(system.grid().clone(), 8).unwrap());
        let g = SampledFunction::from_field(lattice, &|x: &[f64]| {
            x[0] + (9.0 * x[0]).sin() * x[0] * (1.0 - x[0])
        })
        .unwrap();
        let tg = apply_rb_operator(&system, &g).unwrap();
        for (node, y) in [(0usize, 0.0), (1, 0.25), (2, 1.0)] {
            assert_abs_diff_eq!(tg.node_value(&[node]), y, epsilon = 1e-15);
        }
        let _ = g.eval(&[0.5]);
        assert!(Field::eval(&g, &[2.0]).is_nan());
    }
}
