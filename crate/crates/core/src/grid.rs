//! Structured finite-difference grids, sampled fields on them, and the
//! trapezoidal reference integral.

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sum::compensated_sum;

/// Axis-aligned bounding box `[min_x, max_x] × [min_y, max_y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self {
            min: [min_x, min_y],
            max: [max_x, max_y],
        }
    }

    /// Smallest box containing all `points`. Panics on an empty slice.
    pub fn from_points(points: &[[f64; 2]]) -> Self {
        assert!(!points.is_empty(), "bounding box of no points");
        let mut b = Self {
            min: points[0],
            max: points[0],
        };
        for p in &points[1..] {
            for a in 0..2 {
                b.min[a] = b.min[a].min(p[a]);
                b.max[a] = b.max[a].max(p[a]);
            }
        }
        b
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// True when the closed boxes share at least one point.
    pub fn touches(&self, other: &Aabb) -> bool {
        self.min[0] <= other.max[0]
            && other.min[0] <= self.max[0]
            && self.min[1] <= other.max[1]
            && other.min[1] <= self.max[1]
    }
}

/// Tensor grid defined by strictly increasing coordinate arrays.
///
/// Cell `(i, j)` spans `[xs[i], xs[i+1]] × [ys[j], ys[j+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl StructuredGrid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        check_axis('x', &xs)?;
        check_axis('y', &ys)?;
        Ok(Self { xs, ys })
    }

    /// Uniform grid with `nx × ny` points over `[x0, x1] × [y0, y1]`.
    /// End coordinates are set exactly to the rectangle bounds.
    pub fn uniform(x0: f64, x1: f64, nx: usize, y0: f64, y1: f64, ny: usize) -> Result<Self> {
        Self::new(linspace(x0, x1, nx), linspace(y0, y1, ny))
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn n_cells(&self) -> usize {
        (self.nx() - 1) * (self.ny() - 1)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::new(
            self.xs[0],
            self.ys[0],
            self.xs[self.nx() - 1],
            self.ys[self.ny() - 1],
        )
    }

    pub fn cell_bounds(&self, i: usize, j: usize) -> Aabb {
        Aabb::new(self.xs[i], self.ys[j], self.xs[i + 1], self.ys[j + 1])
    }

    /// Largest spacing over both axes.
    pub fn max_spacing(&self) -> f64 {
        self.xs
            .windows(2)
            .chain(self.ys.windows(2))
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index of the cell containing `x` along the x axis, clamped to a valid
    /// cell. The caller is responsible for domain checks.
    pub fn locate_x(&self, x: f64) -> usize {
        locate(&self.xs, x)
    }

    pub fn locate_y(&self, y: f64) -> usize {
        locate(&self.ys, y)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let b = self.bounds();
        x >= b.min[0] && x <= b.max[0] && y >= b.min[1] && y <= b.max[1]
    }
}

fn check_axis(axis: char, c: &[f64]) -> Result<()> {
    if c.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "{axis} axis needs at least 2 coordinates, got {}",
            c.len()
        )));
    }
    if let Some(k) = c.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidGrid(format!("{axis}[{k}] is not finite")));
    }
    if let Some(k) = c.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "{axis} coordinates not strictly increasing at index {}",
            k + 1
        )));
    }
    Ok(())
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|k| a + k as f64 * h).collect();
            v[n - 1] = b;
            v
        }
    }
}

fn locate(c: &[f64], x: f64) -> usize {
    let k = c.partition_point(|&v| v <= x);
    k.saturating_sub(1).min(c.len() - 2)
}

/// Per-axis cell index ranges returned by [`candidate_cells`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRange {
    pub i: Range<usize>,
    pub j: Range<usize>,
}

impl CellRange {
    pub fn is_empty(&self) -> bool {
        self.i.is_empty() || self.j.is_empty()
    }

    pub fn len(&self) -> usize {
        self.i.len() * self.j.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.j
            .clone()
            .flat_map(move |j| self.i.clone().map(move |i| (i, j)))
    }
}

/// Cells whose closed extent touches `bbox`, found by binary search on the
/// coordinate arrays. Cells meeting the box only along an edge or corner are
/// included.
pub fn candidate_cells(grid: &StructuredGrid, bbox: &Aabb) -> CellRange {
    let empty = CellRange { i: 0..0, j: 0..0 };
    if !grid.bounds().touches(bbox) {
        return empty;
    }
    let i = axis_range(&grid.xs, bbox.min[0], bbox.max[0]);
    let j = axis_range(&grid.ys, bbox.min[1], bbox.max[1]);
    if i.is_empty() || j.is_empty() {
        return empty;
    }
    CellRange { i, j }
}

fn axis_range(c: &[f64], lo: f64, hi: f64) -> Range<usize> {
    let n_cells = c.len() - 1;
    // cell k touches [lo, hi] iff c[k] <= hi && c[k+1] >= lo
    let start = c[1..].partition_point(|&v| v < lo);
    let end = c[..n_cells].partition_point(|&v| v <= hi);
    start..end.max(start)
}

/// Samples `f(xs[i], ys[j])` stored row-major as `values[j * nx + i]`.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<StructuredGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<StructuredGrid>, values: Vec<f64>) -> Result<Self> {
        let (nx, ny) = (grid.nx(), grid.ny());
        if values.len() != nx * ny {
            return Err(Error::ShapeMismatch {
                expected_nx: nx,
                expected_ny: ny,
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { i: k % nx, j: k / nx });
        }
        Ok(Self { grid, values })
    }

    /// Samples an analytic function at every grid node.
    pub fn from_fn(grid: Arc<StructuredGrid>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.nx() * grid.ny());
        for &y in grid.ys() {
            for &x in grid.xs() {
                values.push(f(x, y));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<StructuredGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `f(xs[i], ys[j])`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx() + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.grid.nx();
        &self.values[j * nx..(j + 1) * nx]
    }
}

/// Trapezoidal quadrature weights, row-major like [`ScalarField`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrapezoidWeights {
    nx: usize,
    ny: usize,
    w: Vec<f64>,
}

impl TrapezoidWeights {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.w[j * self.nx + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.w.iter().copied())
    }
}

/// Half-cell weights along one axis: `Δ_0/2`, `(Δ_{k-1}+Δ_k)/2`, `Δ_{n-2}/2`.
fn axis_weights(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let d: Vec<f64> = c.windows(2).map(|w| w[1] - w[0]).collect();
    (0..n)
        .map(|k| {
            if k == 0 {
                0.5 * d[0]
            } else if k == n - 1 {
                0.5 * d[n - 2]
            } else {
                0.5 * (d[k - 1] + d[k])
            }
        })
        .collect()
}

/// Builds the corner / edge / interior weight table of the 2D trapezoidal
/// rule. Each weight is the product of the two per-axis half-cell factors,
/// which is bitwise the same as the case-by-case table since the factors of
/// one half and one quarter are exact in binary.
pub fn build_trapezoid_weights(grid: &StructuredGrid) -> TrapezoidWeights {
    let wx = axis_weights(grid.xs());
    let wy = axis_weights(grid.ys());
    let w = wy
        .iter()
        .flat_map(|&b| wx.iter().map(move |&a| a * b))
        .collect();
    TrapezoidWeights {
        nx: grid.nx(),
        ny: grid.ny(),
        w,
    }
}

/// `Σ w_ij f_ij` over the field's grid.
pub fn trapezoid_integral(field: &ScalarField) -> f64 {
    let w = build_trapezoid_weights(field.grid());
    compensated_sum(w.w.iter().zip(field.values()).map(|(a, b)| a * b))
}
