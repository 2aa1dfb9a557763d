//! Hyperrectangular domains, axis partitions, multi-indices and the sampled
//! function representation used for every continuous function in the crate.
//!
//! Cells are numbered from 1 (`1..=N_k` per axis) and nodes from 0
//! (`0..=N_k`), matching the usual knot notation `x_{k,0} < ... < x_{k,N_k}`.
//! All multi-dimensional storage is row-major: the last axis varies fastest.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;

/// Absolute slack used when deciding whether a point lies in the domain.
pub const DOMAIN_TOLERANCE: f64 = 1e-12;

/// Default number of lattice steps per cell and axis.
pub const DEFAULT_REFINEMENT: usize = 64;

/// Knots `a_k = x_{k,0} < x_{k,1} < ... < x_{k,N_k} = b_k` of one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisPartition {
    knots: Vec<f64>,
}

impl AxisPartition {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if let Some(index) = knots.iter().position(|k| !k.is_finite()) {
            return Err(Error::NonFiniteKnot { index });
        }
        if let Some(index) = knots.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonicKnots { index: index + 1 });
        }
        if knots.len() < 3 {
            return Err(Error::TooFewKnots { count: knots.len() });
        }
        Ok(Self { knots })
    }

    /// `cells` equal subintervals of `[start, end]`.
    pub fn uniform(start: f64, end: f64, cells: usize) -> Result<Self> {
        let h = (end - start) / cells as f64;
        let mut knots: Vec<f64> = (0..cells).map(|i| start + h * i as f64).collect();
        knots.push(end);
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of cells `N_k`.
    pub fn cells(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn width(&self) -> f64 {
        self.end() - self.start()
    }

    /// Bounds of cell `i` (1-based): `[x_{i-1}, x_i]`.
    pub fn cell_bounds(&self, i: usize) -> (f64, f64) {
        (self.knots[i - 1], self.knots[i])
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.start() - DOMAIN_TOLERANCE && x <= self.end() + DOMAIN_TOLERANCE
    }

    /// Cell containing `x`, with interior knots assigned to the lower cell.
    /// The flag reports whether `x` sits on an interior knot.
    pub fn locate(&self, x: f64) -> Option<(usize, bool)> {
        if !self.contains(x) {
            return None;
        }
        let n = self.cells();
        let interior = &self.knots[1..n];
        let cell = 1 + interior.partition_point(|&k| k < x);
        let on_knot = interior.iter().any(|&k| (x - k).abs() <= DOMAIN_TOLERANCE);
        Some((cell, on_knot))
    }
}

/// The index map relating corner indices `j in {0, N}` to node indices under
/// the parity-flipping cell maps: odd cells keep orientation, even cells
/// reverse it.
pub fn tau(i: usize, j: usize, n_cells: usize) -> Result<usize> {
    if i == 0 || i > n_cells {
        return Err(Error::IndexOutOfRange {
            index: i,
            context: "cell index must be in 1..=N",
        });
    }
    if j != 0 && j != n_cells {
        return Err(Error::IndexOutOfRange {
            index: j,
            context: "corner index must be 0 or N",
        });
    }
    let odd = i % 2 == 1;
    Ok(match (odd, j == 0) {
        (true, true) => i - 1,
        (true, false) => i,
        (false, true) => i,
        (false, false) => i - 1,
    })
}

/// Row-major iterator over all multi-indices in `lo..=hi`.
#[derive(Debug, Clone)]
pub struct MultiIndexIter {
    lo: Vec<usize>,
    hi: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl MultiIndexIter {
    pub fn new(lo: Vec<usize>, hi: Vec<usize>) -> Self {
        let next = if lo.iter().zip(&hi).all(|(l, h)| l <= h) {
            Some(lo.clone())
        } else {
            None
        };
        Self { lo, hi, next }
    }
}

impl Iterator for MultiIndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut k = succ.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            if succ[k] < self.hi[k] {
                succ[k] += 1;
                self.next = Some(succ);
                break;
            }
            succ[k] = self.lo[k];
        }
        Some(current)
    }
}

/// Partition of the hyperrectangle `prod [a_k, b_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    axes: Vec<AxisPartition>,
}

/// Result of [`GridPartition::locate_cell`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellLocation {
    pub cell: Vec<usize>,
    pub on_knot: Vec<bool>,
}

impl GridPartition {
    pub fn new(axes: Vec<AxisPartition>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(Self { axes })
    }

    pub fn from_knots(knots: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            knots
                .into_iter()
                .map(AxisPartition::new)
                .collect::<Result<_>>()?,
        )
    }

    /// The same uniform partition of `[start, end]` on every axis.
    pub fn uniform(dim: usize, start: f64, end: f64, cells: usize) -> Result<Self> {
        Self::new(
            (0..dim)
                .map(|_| AxisPartition::uniform(start, end, cells))
                .collect::<Result<_>>()?,
        )
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisPartition] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &AxisPartition {
        &self.axes[k]
    }

    pub fn cell_shape(&self) -> Vec<usize> {
        self.axes.iter().map(AxisPartition::cells).collect()
    }

    pub fn node_shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.cells() + 1).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.cell_shape().iter().product()
    }

    pub fn node_count(&self) -> usize {
        self.node_shape().iter().product()
    }

    /// Every cell multi-index, 1-based, row-major.
    pub fn cells(&self) -> MultiIndexIter {
        MultiIndexIter::new(vec![1; self.dim()], self.cell_shape())
    }

    /// Every node multi-index, 0-based, row-major.
    pub fn nodes(&self) -> MultiIndexIter {
        MultiIndexIter::new(vec![0; self.dim()], self.cell_shape())
    }

    /// The `2^n` corner node multi-indices, each coordinate `0` or `N_k`.
    pub fn corners(&self) -> Vec<Vec<usize>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|k| {
                        if mask >> (n - 1 - k) & 1 == 1 {
                            self.axes[k].cells()
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Linear position of a cell multi-index in row-major order.
    pub fn cell_offset(&self, cell: &[usize]) -> usize {
        cell.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * a.cells() + (i - 1))
    }

    /// Linear position of a node multi-index in row-major order.
    pub fn node_offset(&self, node: &[usize]) -> usize {
        node.iter()
            .zip(&self.axes)
            .fold(0, |acc, (&i, a)| acc * (a.cells() + 1) + i)
    }

    pub fn node_point(&self, node: &[usize]) -> Vec<f64> {
        node.iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.knots()[i])
            .collect()
    }

    pub fn lower_corner(&self) -> Vec<f64> {
        self.axes.iter().map(AxisPartition::start).collect()
    }

    pub fn upper_corner(&self) -> Vec<f64> {
        self.axes.iter().map(AxisPartition::end).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.axes).all(|(&v, a)| a.contains(v))
    }

    /// Whether `x` lies in the closed cell `cell` (up to [`DOMAIN_TOLERANCE`]).
    pub fn cell_contains(&self, cell: &[usize], x: &[f64]) -> bool {
        cell.iter().zip(x).zip(&self.axes).all(|((&i, &v), a)| {
            let (lo, hi) = a.cell_bounds(i);
            v >= lo - DOMAIN_TOLERANCE && v <= hi + DOMAIN_TOLERANCE
        })
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (axis, (&value, a)) in x.iter().zip(&self.axes).enumerate() {
            if !a.contains(value) {
                return Err(Error::PointOutsideDomain {
                    axis,
                    value,
                    lo: a.start(),
                    hi: a.end(),
                });
            }
        }
        Ok(())
    }

    /// Cell containing `x`; interior knots belong to the lower cell.
    pub fn locate_cell(&self, x: &[f64]) -> Result<CellLocation> {
        self.check_point(x)?;
        let (cell, on_knot) = x
            .iter()
            .zip(&self.axes)
            .map(|(&v, a)| a.locate(v).expect("checked above"))
            .unzip();
        Ok(CellLocation { cell, on_knot })
    }

    /// Every cell whose closure contains `x` (more than one on shared faces).
    pub fn cells_containing(&self, x: &[f64]) -> Result<Vec<Vec<usize>>> {
        self.check_point(x)?;
        let per_axis: Vec<Vec<usize>> = x
            .iter()
            .zip(&self.axes)
            .map(|(&v, a)| {
                (1..=a.cells())
                    .filter(|&i| {
                        let (lo, hi) = a.cell_bounds(i);
                        v >= lo - DOMAIN_TOLERANCE && v <= hi + DOMAIN_TOLERANCE
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![Vec::new()];
        for choices in per_axis {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |&c| {
                        let mut p = prefix.clone();
                        p.push(c);
                        p
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

/// One value `y_{i_1...i_n}` per grid node, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl DataTensor {
    pub fn new(grid: &GridPartition, values: Vec<f64>) -> Result<Self> {
        let expected = grid.node_count();
        if values.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "data tensor".into(),
            });
        }
        Ok(Self {
            shape: grid.node_shape(),
            values,
        })
    }

    /// Samples `f` at every grid node.
    pub fn sample(grid: &GridPartition, f: &dyn Field) -> Result<Self> {
        let values = grid
            .nodes()
            .map(|node| f.eval(&grid.node_point(&node)))
            .collect();
        Self::new(grid, values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, node: &[usize]) -> f64 {
        let offset = node
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &s)| acc * s + i);
        self.values[offset]
    }
}

/// Per-cell uniform refinement of a grid: each cell is split into
/// `refinement` equal steps per axis, so every knot is a lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    grid: GridPartition,
    refinement: usize,
    coords: Vec<Vec<f64>>,
    shape: Vec<usize>,
    strides: Vec<usize>,
}

impl Lattice {
    pub fn new(grid: GridPartition, refinement: usize) -> Result<Self> {
        if refinement == 0 {
            return Err(Error::InvalidRefinement);
        }
        let coords: Vec<Vec<f64>> = grid
            .axes()
            .iter()
            .map(|a| {
                let mut c = Vec::with_capacity(a.cells() * refinement + 1);
                for i in 1..=a.cells() {
                    let (lo, hi) = a.cell_bounds(i);
                    let h = (hi - lo) / refinement as f64;
                    c.extend((0..refinement).map(|j| lo + h * j as f64));
                }
                c.push(a.end());
                c
            })
            .collect();
        let shape: Vec<usize> = coords.iter().map(Vec::len).collect();
        let mut strides = vec![1; shape.len()];
        for k in (0..shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        Ok(Self {
            grid,
            refinement,
            coords,
            shape,
            strides,
        })
    }

    pub fn grid(&self) -> &GridPartition {
        &self.grid
    }

    pub fn refinement(&self) -> usize {
        self.refinement
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unravel(&self, mut offset: usize, index: &mut [usize]) {
        for (k, s) in self.strides.iter().enumerate() {
            index[k] = offset / s;
            offset %= s;
        }
    }

    pub fn point_into(&self, offset: usize, x: &mut [f64]) {
        let mut rem = offset;
        for (k, s) in self.strides.iter().enumerate() {
            x[k] = self.coords[k][rem / s];
            rem %= s;
        }
    }

    pub fn point(&self, offset: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.point_into(offset, &mut x);
        x
    }

    /// Lattice offset of a grid node.
    pub fn node_offset(&self, node: &[usize]) -> usize {
        node.iter()
            .zip(&self.strides)
            .map(|(i, s)| i * self.refinement * s)
            .sum()
    }

    /// Lower lattice index along `axis` of the step containing `x`, and the
    /// fractional position within that step. Exact (`t == 0` or `t == 1`) at
    /// lattice coordinates.
    pub fn locate_axis(&self, axis: usize, x: f64) -> (usize, f64) {
        let c = &self.coords[axis];
        let last = c.len() - 2;
        let mut j = c.partition_point(|&v| v <= x).saturating_sub(1).min(last);
        if x < c[j] && j > 0 {
            j -= 1;
        }
        let t = ((x - c[j]) / (c[j + 1] - c[j])).clamp(0.0, 1.0);
        (j, t)
    }

    pub fn same_as(&self, other: &Lattice) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

/// A continuous function stored as values on a [`Lattice`] and evaluated by
/// multilinear interpolation within the containing lattice step.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    lattice: Arc<Lattice>,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn from_values(lattice: Arc<Lattice>, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::ShapeMismatch {
                expected: lattice.len(),
                got: values.len(),
            });
        }
        Ok(Self { lattice, values })
    }

    /// Samples `f` at every lattice point (in parallel).
    pub fn from_field(lattice: Arc<Lattice>, f: &dyn Field) -> Result<Self> {
        let n = lattice.dim();
        let values: Vec<f64> = (0..lattice.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |x, p| {
                    lattice.point_into(p, x);
                    f.eval(x)
                },
            )
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "sampled field".into(),
            });
        }
        Ok(Self { lattice, values })
    }

    /// The multilinear interpolant of node data, sampled on `lattice`.
    pub fn from_data(lattice: Arc<Lattice>, data: &DataTensor) -> Result<Self> {
        let nodes = Arc::new(Lattice::new(lattice.grid().clone(), 1)?);
        let coarse = Self::from_values(nodes, data.values().to_vec())?;
        Self::from_field(lattice, &coarse)
    }

    pub fn constant(lattice: Arc<Lattice>, c: f64) -> Self {
        let values = vec![c; lattice.len()];
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn grid(&self) -> &GridPartition {
        self.lattice.grid()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn node_value(&self, node: &[usize]) -> f64 {
        self.values[self.lattice.node_offset(node)]
    }

    /// Lattice sup-norm `max |v|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.grid().check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    /// Multilinear evaluation without the domain check; points outside the
    /// domain are clamped to the boundary step.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let n = self.lattice.dim();
        if n > 8 {
            return self.eval_general(x);
        }
        let mut base = 0usize;
        let mut ts = [0.0f64; 8];
        for k in 0..n {
            let (j, t) = self.lattice.locate_axis(k, x[k]);
            ts[k] = t;
            base += j * self.lattice.strides()[k];
        }
        blend(&self.values, self.lattice.strides(), base, &ts[..n])
    }

    fn eval_general(&self, x: &[f64]) -> f64 {
        let located: Vec<(usize, f64)> = x
            .iter()
            .enumerate()
            .map(|(k, &v)| self.lattice.locate_axis(k, v))
            .collect();
        let base = located
            .iter()
            .zip(self.lattice.strides())
            .map(|((j, _), s)| j * s)
            .sum();
        let ts: Vec<f64> = located.iter().map(|&(_, t)| t).collect();
        blend(&self.values, self.lattice.strides(), base, &ts)
    }

    /// Pointwise `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &SampledFunction, b: f64) -> Result<Self> {
        if !self.lattice.same_as(&other.lattice) {
            return Err(Error::LatticeMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self {
            lattice: self.lattice.clone(),
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Field for SampledFunction {
    fn eval(&self, x: &[f64]) -> f64 {
        if self.grid().contains(x) {
            self.eval_unchecked(x)
        } else {
            f64::NAN
        }
    }
}

/// Multilinear blend of the `2^n` values around `base` with fractional
/// positions `ts`. Terms with zero weight are skipped so lattice points
/// reproduce stored values exactly.
pub(crate) fn blend(values: &[f64], strides: &[usize], base: usize, ts: &[f64]) -> f64 {
    let n = ts.len();
    // -0.0 is the additive identity, so a single term keeps its sign bit
    let mut acc = -0.0;
    for mask in 0..1usize << n {
        let mut w = 1.0;
        let mut offset = base;
        for k in 0..n {
            if mask >> k & 1 == 1 {
                w *= ts[k];
                offset += strides[k];
            } else {
                w *= 1.0 - ts[k];
            }
        }
        if w != 0.0 {
            acc += w * values[offset];
        }
    }
    acc
}

/// Largest lattice difference `max |s1 - s2|`. This is a lower bound of the
/// true uniform distance of the underlying continuous functions.
pub fn sup_distance(s1: &SampledFunction, s2: &SampledFunction) -> Result<f64> {
    if !s1.lattice.same_as(&s2.lattice) {
        return Err(Error::LatticeMismatch);
    }
    Ok(s1
        .values
        .par_iter()
        .zip(&s2.values)
        .map(|(a, b)| (a - b).abs())
        .reduce(|| 0.0, f64::max))
}

/// Multilinear interpolant of a function's values at the `2^n` domain
/// corners.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerInterpolant {
    lower: Vec<f64>,
    upper: Vec<f64>,
    corner_values: Vec<f64>,
}

impl CornerInterpolant {
    pub fn new(grid: &GridPartition, f: &dyn Field) -> Self {
        let corner_values = grid
            .corners()
            .iter()
            .map(|c| f.eval(&grid.node_point(c)))
            .collect();
        Self {
            lower: grid.lower_corner(),
            upper: grid.upper_corner(),
            corner_values,
        }
    }

    pub fn corner_values(&self) -> &[f64] {
        &self.corner_values
    }
}

impl Field for CornerInterpolant {
    fn eval(&self, x: &[f64]) -> f64 {
        let n = self.lower.len();
        // corners are ordered with axis 0 as the most significant bit
        let mut acc = 0.0;
        for (mask, &v) in self.corner_values.iter().enumerate() {
            let mut w = 1.0;
            for (k, xk) in x.iter().enumerate().take(n) {
                let t = (xk - self.lower[k]) / (self.upper[k] - self.lower[k]);
                if mask >> (n - 1 - k) & 1 == 1 {
                    w *= t;
                } else {
                    w *= 1.0 - t;
                }
            }
            if w != 0.0 {
                acc += w * v;
            }
        }
        acc
    }
}
