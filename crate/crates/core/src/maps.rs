//! Orientation-flipping affine contractions `u_{k,i}` from an axis onto its
//! cells, and their products over all axes.
//!
//! Odd cells keep orientation (`u(a) = x_{i-1}`, `u(b) = x_i`) while even
//! cells reverse it (`u(a) = x_i`, `u(b) = x_{i-1}`). With this alternation,
//! adjacent cells pull a shared interior knot back to the same axis endpoint,
//! which is what makes the vertical maps glue together continuously.

use crate::error::{Error, Result};
use crate::grid::{AxisPartition, GridPartition, DOMAIN_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// One affine cell map `u(x) = slope * x + offset` from `[a, b]` onto a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCellMap {
    pub axis: usize,
    /// 1-based cell index.
    pub cell: usize,
    pub slope: f64,
    pub offset: f64,
    domain: (f64, f64),
    /// `(u(a), u(b))`, the exact knot values.
    image: (f64, f64),
}

impl AffineCellMap {
    /// Builds the map for `cell` of `partition` from the endpoint conditions.
    pub fn new(axis: usize, partition: &AxisPartition, cell: usize) -> Self {
        let (lo, hi) = partition.cell_bounds(cell);
        let (a, b) = (partition.start(), partition.end());
        let image = if cell % 2 == 1 { (lo, hi) } else { (hi, lo) };
        let slope = (image.1 - image.0) / (b - a);
        let offset = image.0 - slope * a;
        Self {
            axis,
            cell,
            slope,
            offset,
            domain: (a, b),
            image,
        }
    }

    pub fn parity(&self) -> Parity {
        if self.cell % 2 == 1 {
            Parity::Odd
        } else {
            Parity::Even
        }
    }

    /// Lipschitz constant `|slope|` (the cell width over the axis width).
    pub fn cell_contraction(&self) -> f64 {
        self.slope.abs()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// The cell `[x_{i-1}, x_i]`, in increasing order.
    pub fn image_interval(&self) -> (f64, f64) {
        (
            self.image.0.min(self.image.1),
            self.image.0.max(self.image.1),
        )
    }

    pub fn apply(&self, x: f64, direction: Direction) -> Result<f64> {
        match direction {
            Direction::Forward => self.forward(x),
            Direction::Inverse => self.inverse(x),
        }
    }

    pub fn forward(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain;
        if x < lo - DOMAIN_TOLERANCE || x > hi + DOMAIN_TOLERANCE {
            return Err(Error::OutOfDomain { value: x, lo, hi });
        }
        Ok(self.forward_unchecked(x))
    }

    pub fn inverse(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.image_interval();
        if x < lo - DOMAIN_TOLERANCE || x > hi + DOMAIN_TOLERANCE {
            return Err(Error::OutOfDomain { value: x, lo, hi });
        }
        Ok(self.inverse_unchecked(x))
    }

    /// Forward map; exact at the axis endpoints.
    #[inline]
    pub fn forward_unchecked(&self, x: f64) -> f64 {
        if x == self.domain.0 {
            self.image.0
        } else if x == self.domain.1 {
            self.image.1
        } else {
            self.slope * x + self.offset
        }
    }

    /// Inverse map; exact at the cell's knots.
    #[inline]
    pub fn inverse_unchecked(&self, x: f64) -> f64 {
        if x == self.image.0 {
            self.domain.0
        } else if x == self.image.1 {
            self.domain.1
        } else {
            (x - self.offset) / self.slope
        }
    }
}

/// All `N_k` cell maps of one axis.
pub fn build_axis_maps(axis: usize, partition: &AxisPartition) -> Vec<AffineCellMap> {
    (1..=partition.cells())
        .map(|i| AffineCellMap::new(axis, partition, i))
        .collect()
}

/// Common pull-back point of one interior knot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedPoint {
    /// Interior knot index `i` (between cells `i` and `i + 1`).
    pub knot: usize,
    pub point: f64,
}

/// Checks `u_i^{-1}(x_i) = u_{i+1}^{-1}(x_i)` at every interior knot and
/// returns the common points.
pub fn verify_shared_point(
    partition: &AxisPartition,
    maps: &[AffineCellMap],
) -> Result<Vec<SharedPoint>> {
    let n = partition.cells();
    if maps.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: maps.len(),
        });
    }
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let knot = partition.knots()[i];
        let left = maps[i - 1].inverse_unchecked(knot);
        let right = maps[i].inverse_unchecked(knot);
        if (left - right).abs() > 1e-12 {
            return Err(Error::SharedPointViolation {
                axis: maps[i].axis,
                knot: i,
                left,
                right,
            });
        }
        out.push(SharedPoint {
            knot: i,
            point: left,
        });
    }
    Ok(out)
}

/// Cell maps of every axis of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMaps {
    axes: Vec<Vec<AffineCellMap>>,
}

impl CellMaps {
    pub fn new(grid: &GridPartition) -> Self {
        Self {
            axes: grid
                .axes()
                .iter()
                .enumerate()
                .map(|(k, p)| build_axis_maps(k, p))
                .collect(),
        }
    }

    pub fn axis(&self, k: usize) -> &[AffineCellMap] {
        &self.axes[k]
    }

    /// The map of cell `i` (1-based) on axis `k`.
    #[inline]
    pub fn get(&self, k: usize, i: usize) -> &AffineCellMap {
        &self.axes[k][i - 1]
    }

    pub fn product(&self, cell: &[usize]) -> ProductCellMap {
        ProductCellMap {
            maps: cell
                .iter()
                .enumerate()
                .map(|(k, &i)| *self.get(k, i))
                .collect(),
        }
    }

    /// `u_{cell}(x)` written into `out`.
    #[inline]
    pub fn forward_into(&self, cell: &[usize], x: &[f64], out: &mut [f64]) {
        for (k, &i) in cell.iter().enumerate() {
            out[k] = self.get(k, i).forward_unchecked(x[k]);
        }
    }

    /// `u_{cell}^{-1}(x)` written into `out`.
    #[inline]
    pub fn inverse_into(&self, cell: &[usize], x: &[f64], out: &mut [f64]) {
        for (k, &i) in cell.iter().enumerate() {
            out[k] = self.get(k, i).inverse_unchecked(x[k]);
        }
    }
}

/// `u_{i_1...i_n}(X) = (u_{1,i_1}(x_1), ..., u_{n,i_n}(x_n))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductCellMap {
    pub maps: Vec<AffineCellMap>,
}

impl ProductCellMap {
    pub fn cell(&self) -> Vec<usize> {
        self.maps.iter().map(|m| m.cell).collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.maps
            .iter()
            .zip(x)
            .map(|(m, &v)| m.forward(v))
            .collect()
    }

    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.maps
            .iter()
            .zip(x)
            .map(|(m, &v)| m.inverse(v))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis(knots: &[f64]) -> AxisPartition {
        AxisPartition::new(knots.to_vec()).unwrap()
    }

    #[test]
    fn uniform_two_cell_maps() {
        let maps = build_axis_maps(0, &axis(&[0.0, 0.5, 1.0]));
        assert_eq!(maps.len(), 2);
        assert_eq!((maps[0].slope, maps[0].offset), (0.5, 0.0));
        assert_eq!((maps[1].slope, maps[1].offset), (-0.5, 1.0));
        assert_eq!(maps[0].parity(), Parity::Odd);
        assert_eq!(maps[1].parity(), Parity::Even);
    }

    #[test]
    fn non_uniform_maps() {
        let maps = build_axis_maps(0, &axis(&[0.0, 0.25, 1.0]));
        assert_eq!((maps[0].slope, maps[0].offset), (0.25, 0.0));
        assert_eq!((maps[1].slope, maps[1].offset), (-0.75, 1.0));
        for m in &maps {
            let (lo, hi) = m.image_interval();
            assert_eq!(m.cell_contraction(), hi - lo);
            assert!(m.cell_contraction() < 1.0);
        }
    }

    #[test]
    fn apply_examples() {
        let maps = build_axis_maps(0, &axis(&[0.0, 0.5, 1.0]));
        assert_eq!(maps[1].apply(1.0, Direction::Forward).unwrap(), 0.5);
        assert_eq!(maps[1].apply(0.5, Direction::Inverse).unwrap(), 1.0);
        assert_eq!(maps[0].apply(0.5, Direction::Inverse).unwrap(), 1.0);
        assert!(matches!(
            maps[0].forward(1.5),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(matches!(
            maps[0].inverse(0.75),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn shared_point_examples() {
        let p = axis(&[0.0, 0.5, 1.0]);
        let pts = verify_shared_point(&p, &build_axis_maps(0, &p)).unwrap();
        assert_eq!(
            pts,
            vec![SharedPoint {
                knot: 1,
                point: 1.0
            }]
        );

        let p = axis(&[0.0, 0.25, 1.0]);
        let pts = verify_shared_point(&p, &build_axis_maps(0, &p)).unwrap();
        assert_eq!(pts[0].point, 1.0);

        let mut maps = build_axis_maps(0, &p);
        maps[1].offset += 0.01;
        maps[1].image = (maps[1].offset, maps[1].slope + maps[1].offset);
        assert!(matches!(
            verify_shared_point(&p, &maps),
            Err(Error::SharedPointViolation { knot: 1, .. })
        ));
    }

    fn arb_axis() -> impl Strategy<Value = AxisPartition> {
        (-2.0f64..2.0, prop::collection::vec(0.01f64..1.0, 2..8)).prop_map(|(start, steps)| {
            let mut knots = vec![start];
            for s in steps {
                let last = *knots.last().unwrap();
                knots.push(last + s);
            }
            AxisPartition::new(knots).unwrap()
        })
    }

    proptest! {
        #[test]
        fn round_trip_and_lipschitz(p in arb_axis(), s in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            let x = p.start() + s * p.width();
            let y = p.start() + t * p.width();
            for m in build_axis_maps(0, &p) {
                let back = m.inverse(m.forward(x).unwrap()).unwrap();
                prop_assert!((back - x).abs() <= 1e-12 * (1.0 + x.abs()));
                let lhs = (m.forward_unchecked(x) - m.forward_unchecked(y)).abs();
                prop_assert!((lhs - m.cell_contraction() * (x - y).abs()).abs() <= 1e-12);
            }
        }

        #[test]
        fn images_tile_the_axis(p in arb_axis()) {
            let maps = build_axis_maps(0, &p);
            for (i, m) in maps.iter().enumerate() {
                prop_assert_eq!(m.image_interval(), p.cell_bounds(i + 1));
                prop_assert_eq!(m.forward_unchecked(p.start()).min(m.forward_unchecked(p.end())),
                                p.knots()[i]);
            }
        }

        #[test]
        fn shared_point_is_an_endpoint(p in arb_axis()) {
            let pts = verify_shared_point(&p, &build_axis_maps(0, &p)).unwrap();
            for sp in pts {
                let expected = if sp.knot % 2 == 1 { p.end() } else { p.start() };
                prop_assert_eq!(sp.point, expected);
            }
        }
    }
}
