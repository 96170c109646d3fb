//! Reconstruction of a continuous field from grid samples.
//!
//! Two families are provided: interpolating tensor-product B-splines of
//! degree 1 to 5, whose coefficients come from banded collocation solves
//! along x and then y, and local tensor Lagrange interpolation of degree 1
//! (bilinear) or 3 on a `(p+1)²` stencil.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, StructuredGrid};
use crate::parallel::ExecOptions;

/// Reconstruction choice, parsed from `bilinear`, `bspline:P` or `lagrange:P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reconstruction {
    Bilinear,
    BSpline(usize),
    Lagrange(usize),
}

impl Reconstruction {
    pub fn degree(&self) -> usize {
        match *self {
            Reconstruction::Bilinear => 1,
            Reconstruction::BSpline(p) | Reconstruction::Lagrange(p) => p,
        }
    }
}

impl fmt::Display for Reconstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reconstruction::Bilinear => write!(f, "bilinear"),
            Reconstruction::BSpline(p) => write!(f, "bspline:{p}"),
            Reconstruction::Lagrange(p) => write!(f, "lagrange:{p}"),
        }
    }
}

impl FromStr for Reconstruction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown reconstruction '{s}' (bilinear | bspline:P | lagrange:P)"));
        if s == "bilinear" {
            return Ok(Reconstruction::Bilinear);
        }
        let (kind, deg) = s.split_once(':').ok_or_else(bad)?;
        let p: usize = deg.parse().map_err(|_| bad())?;
        match kind {
            "bspline" => Ok(Reconstruction::BSpline(p)),
            "lagrange" => Ok(Reconstruction::Lagrange(p)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone)]
enum Scheme {
    BSpline {
        p: usize,
        tx: Vec<f64>,
        ty: Vec<f64>,
        /// `coeffs[n * nx + m] = c_mn`, basis `m` along x and `n` along y.
        coeffs: Vec<f64>,
    },
    Lagrange {
        p: usize,
        values: Vec<f64>,
    },
}

/// Immutable field reconstruction evaluable at arbitrary points of the
/// closed grid domain.
#[derive(Debug, Clone)]
pub struct Interpolator {
    grid: Arc<StructuredGrid>,
    kind: Reconstruction,
    scheme: Scheme,
}

/// Relative slack (of the domain extent) within which a point outside the
/// closed domain is treated as lying on its boundary.
const BOUNDARY_SLACK: f64 = 1e-12;

impl Interpolator {
    pub fn build(field: &ScalarField, kind: Reconstruction) -> Result<Self> {
        match kind {
            Reconstruction::Bilinear => {
                let mut it = build_lagrange(field, 1)?;
                it.kind = Reconstruction::Bilinear;
                Ok(it)
            }
            Reconstruction::BSpline(p) => build_bspline(field, p),
            Reconstruction::Lagrange(p) => build_lagrange(field, p),
        }
    }

    pub fn kind(&self) -> Reconstruction {
        self.kind
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    /// Value at one point; `index` only labels the error.
    fn eval_one(&self, index: usize, x: f64, y: f64) -> Result<f64> {
        let (x, y) = self.clamp_to_domain(index, x, y)?;
        Ok(match &self.scheme {
            Scheme::BSpline { p, tx, ty, coeffs } => {
                eval_bspline(*p, tx, ty, coeffs, self.grid.nx(), x, y)
            }
            Scheme::Lagrange { p, values } => eval_lagrange(&self.grid, *p, values, x, y),
        })
    }

    fn clamp_to_domain(&self, index: usize, x: f64, y: f64) -> Result<(f64, f64)> {
        let b = self.grid.bounds();
        let sx = BOUNDARY_SLACK * b.width();
        let sy = BOUNDARY_SLACK * b.height();
        let inside = x >= b.min[0] - sx
            && x <= b.max[0] + sx
            && y >= b.min[1] - sy
            && y <= b.max[1] + sy;
        if !inside {
            return Err(Error::OutOfDomain { index, x, y });
        }
        Ok((x.clamp(b.min[0], b.max[0]), y.clamp(b.min[1], b.max[1])))
    }

    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        self.eval_one(0, x, y)
    }

    /// Serial batch evaluation.
    pub fn evaluate_batch(&self, points: &[[f64; 2]]) -> Result<Vec<f64>> {
        points
            .iter()
            .enumerate()
            .map(|(k, p)| self.eval_one(k, p[0], p[1]))
            .collect()
    }

    /// Batch evaluation on the worker pool. Every point is evaluated
    /// independently, so the output does not depend on the thread count.
    pub fn evaluate_batch_with(&self, points: &[[f64; 2]], opts: ExecOptions) -> Result<Vec<f64>> {
        if opts.is_serial() {
            return self.evaluate_batch(points);
        }
        opts.install(|| {
            points
                .par_iter()
                .enumerate()
                .map(|(k, p)| self.eval_one(k, p[0], p[1]))
                .collect()
        })
    }
}

fn check_size(grid: &StructuredGrid, p: usize) -> Result<()> {
    for (axis, n) in [('x', grid.nx()), ('y', grid.ny())] {
        if n < p + 1 {
            return Err(Error::GridTooSmall {
                axis,
                n,
                degree: p,
                required: p + 1,
            });
        }
    }
    Ok(())
}

pub fn build_lagrange(field: &ScalarField, p: usize) -> Result<Interpolator> {
    if p != 1 && p != 3 {
        return Err(Error::InvalidDegree {
            kind: "Lagrange",
            degree: p,
        });
    }
    check_size(field.grid(), p)?;
    Ok(Interpolator {
        grid: field.grid_arc().clone(),
        kind: Reconstruction::Lagrange(p),
        scheme: Scheme::Lagrange {
            p,
            values: field.values().to_vec(),
        },
    })
}

/// First index of the `p+1`-point stencil around cell `cell`, shifted inward
/// near the boundary.
fn stencil_start(cell: usize, p: usize, n: usize) -> usize {
    let centred = cell.saturating_sub((p - 1) / 2);
    centred.min(n - 1 - p)
}

fn lagrange_weights(nodes: &[f64], x: f64, out: &mut [f64]) {
    for (i, w) in out.iter_mut().enumerate() {
        let mut l = 1.0;
        for (k, &xk) in nodes.iter().enumerate() {
            if k != i {
                l *= (x - xk) / (nodes[i] - xk);
            }
        }
        *w = l;
    }
}

fn eval_lagrange(grid: &StructuredGrid, p: usize, values: &[f64], x: f64, y: f64) -> f64 {
    let nx = grid.nx();
    let i0 = stencil_start(grid.locate_x(x), p, nx);
    let j0 = stencil_start(grid.locate_y(y), p, grid.ny());
    let mut wx = [0.0; 4];
    let mut wy = [0.0; 4];
    lagrange_weights(&grid.xs()[i0..=i0 + p], x, &mut wx[..=p]);
    lagrange_weights(&grid.ys()[j0..=j0 + p], y, &mut wy[..=p]);
    // x pass per stencil row, then y pass
    let mut acc = 0.0;
    for b in 0..=p {
        let row = &values[(j0 + b) * nx + i0..(j0 + b) * nx + i0 + p + 1];
        let mut s = 0.0;
        for a in 0..=p {
            s += wx[a] * row[a];
        }
        acc += wy[b] * s;
    }
    acc
}

/// Clamped knot vector of length `n + p + 1` with interior knots placed by
/// averaging `p` consecutive sites, which keeps the collocation matrix at
/// the sites nonsingular for every degree.
pub fn clamped_knots(sites: &[f64], p: usize) -> Vec<f64> {
    let n = sites.len();
    let mut t = Vec::with_capacity(n + p + 1);
    t.extend(std::iter::repeat_n(sites[0], p + 1));
    for j in 0..n.saturating_sub(p + 1) {
        let s: f64 = sites[j + 1..=j + p].iter().sum();
        t.push(s / p as f64);
    }
    t.extend(std::iter::repeat_n(sites[n - 1], p + 1));
    t
}

/// Knot span `s` with `t[s] <= x < t[s+1]`, restricted to `p..n`.
fn find_span(t: &[f64], p: usize, x: f64) -> usize {
    let n = t.len() - p - 1;
    if x >= t[n] {
        return n - 1;
    }
    let s = t[..=n].partition_point(|&v| v <= x);
    s.saturating_sub(1).clamp(p, n - 1)
}

/// The `p+1` nonzero basis values `B_{s-p..=s}(x)` (Cox-de Boor triangle).
fn basis_values(t: &[f64], p: usize, s: usize, x: f64, out: &mut [f64; 6]) {
    let mut left = [0.0; 6];
    let mut right = [0.0; 6];
    out[0] = 1.0;
    for j in 1..=p {
        left[j] = x - t[s + 1 - j];
        right[j] = t[s + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        out[j] = saved;
    }
}

/// LU factors of a banded matrix, without pivoting. B-spline collocation
/// matrices are totally positive, for which elimination without pivoting is
/// stable.
struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// row-major band: `a[i * w + (j + kl - i)]`, `w = kl + ku + 1`
    a: Vec<f64>,
}

impl BandedLu {
    fn w(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.w() + j + self.kl - i]
    }

    fn get_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let w = self.w();
        &mut self.a[i * w + j + self.kl - i]
    }

    /// Collocation matrix `A[i][j] = B_j(sites[i])`.
    fn collocation(sites: &[f64], t: &[f64], p: usize) -> Result<Self> {
        let n = sites.len();
        let mut rows = Vec::with_capacity(n);
        let (mut kl, mut ku) = (0usize, 0usize);
        let mut vals = [0.0; 6];
        for (i, &x) in sites.iter().enumerate() {
            let s = find_span(t, p, x);
            basis_values(t, p, s, x, &mut vals);
            let first = s - p;
            kl = kl.max(i.saturating_sub(first));
            ku = ku.max((first + p).saturating_sub(i));
            rows.push((first, vals));
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            a: vec![0.0; n * (kl + ku + 1)],
        };
        for (i, (first, vals)) in rows.into_iter().enumerate() {
            for (k, v) in vals.iter().take(p + 1).enumerate() {
                *lu.get_mut(i, first + k) = *v;
            }
        }
        lu.factor()?;
        Ok(lu)
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.n;
        for k in 0..n {
            let piv = self.get(k, k);
            if piv.abs() < 1e-300 || !piv.is_finite() {
                return Err(Error::Config(format!(
                    "singular B-spline collocation matrix at row {k}"
                )));
            }
            let i_end = (k + self.kl + 1).min(n);
            let j_end = (k + self.ku + 1).min(n);
            for i in k + 1..i_end {
                let l = self.get(i, k) / piv;
                *self.get_mut(i, k) = l;
                if l != 0.0 {
                    for j in k + 1..j_end {
                        let u = self.get(k, j);
                        *self.get_mut(i, j) -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves in place for a right-hand side read with stride `stride`.
    fn solve_strided(&self, b: &mut [f64], offset: usize, stride: usize) {
        let n = self.n;
        let idx = |i: usize| offset + i * stride;
        for i in 0..n {
            let j0 = i.saturating_sub(self.kl);
            let mut s = b[idx(i)];
            for j in j0..i {
                s -= self.get(i, j) * b[idx(j)];
            }
            b[idx(i)] = s;
        }
        for i in (0..n).rev() {
            let j_end = (i + self.ku + 1).min(n);
            let mut s = b[idx(i)];
            for j in i + 1..j_end {
                s -= self.get(i, j) * b[idx(j)];
            }
            b[idx(i)] = s / self.get(i, i);
        }
    }
}

pub fn build_bspline(field: &ScalarField, p: usize) -> Result<Interpolator> {
    if !(1..=5).contains(&p) {
        return Err(Error::InvalidDegree {
            kind: "B-spline",
            degree: p,
        });
    }
    let grid = field.grid();
    check_size(grid, p)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let tx = clamped_knots(grid.xs(), p);
    let ty = clamped_knots(grid.ys(), p);
    let ax = BandedLu::collocation(grid.xs(), &tx, p)?;
    let ay = BandedLu::collocation(grid.ys(), &ty, p)?;

    let mut coeffs = field.values().to_vec();
    for j in 0..ny {
        ax.solve_strided(&mut coeffs, j * nx, 1);
    }
    for i in 0..nx {
        ay.solve_strided(&mut coeffs, i, nx);
    }
    Ok(Interpolator {
        grid: field.grid_arc().clone(),
        kind: Reconstruction::BSpline(p),
        scheme: Scheme::BSpline { p, tx, ty, coeffs },
    })
}

fn eval_bspline(p: usize, tx: &[f64], ty: &[f64], coeffs: &[f64], nx: usize, x: f64, y: f64) -> f64 {
    let sx = find_span(tx, p, x);
    let sy = find_span(ty, p, y);
    let mut bx = [0.0; 6];
    let mut by = [0.0; 6];
    basis_values(tx, p, sx, x, &mut bx);
    basis_values(ty, p, sy, y, &mut by);
    let (m0, n0) = (sx - p, sy - p);
    let mut acc = 0.0;
    for b in 0..=p {
        let row = &coeffs[(n0 + b) * nx + m0..(n0 + b) * nx + m0 + p + 1];
        let mut s = 0.0;
        for a in 0..=p {
            s += bx[a] * row[a];
        }
        acc += by[b] * s;
    }
    acc
}
