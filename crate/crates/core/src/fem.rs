//! Bilinear quadrilateral (Q4) meshes, their isoparametric maps, and the
//! quadrature rules used on elements and triangles.

use crate::error::{Error, Result};
use crate::grid::{linspace, Aabb};

/// Reference corner signs, counter-clockwise from `(-1, -1)`.
pub const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Point in the reference square `[-1, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RefPoint {
    pub xi: f64,
    pub eta: f64,
}

impl RefPoint {
    pub fn new(xi: f64, eta: f64) -> Self {
        Self { xi, eta }
    }
}

/// Q4 shape functions and their reference derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeValues {
    pub n: [f64; 4],
    pub dn_dxi: [f64; 4],
    pub dn_deta: [f64; 4],
}

/// `N_j = ¼(1 + ξ_j ξ)(1 + η_j η)` with derivatives.
pub fn shape_functions(p: RefPoint) -> ShapeValues {
    let mut s = ShapeValues {
        n: [0.0; 4],
        dn_dxi: [0.0; 4],
        dn_deta: [0.0; 4],
    };
    for (j, c) in CORNERS.iter().enumerate() {
        let a = 1.0 + c[0] * p.xi;
        let b = 1.0 + c[1] * p.eta;
        s.n[j] = 0.25 * a * b;
        s.dn_dxi[j] = 0.25 * c[0] * b;
        s.dn_deta[j] = 0.25 * a * c[1];
    }
    s
}

/// `∂X/∂ξ` laid out as `[[J11, J12], [J21, J22]] = [[x_ξ, x_η], [y_ξ, y_η]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub m: [[f64; 2]; 2],
    pub det: f64,
}

/// Target mesh: node coordinates and counter-clockwise Q4 connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadMesh {
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 4]>,
}

impl QuadMesh {
    /// Validates indices and rejects elements whose Jacobian determinant is
    /// non-positive at any corner.
    pub fn new(nodes: Vec<[f64; 2]>, elements: Vec<[usize; 4]>) -> Result<Self> {
        if let Some(k) = nodes.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidMesh(format!("node {k} has non-finite coordinates")));
        }
        for (e, conn) in elements.iter().enumerate() {
            if let Some(&bad) = conn.iter().find(|&&i| i >= nodes.len()) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} references node {bad}, mesh has {} nodes",
                    nodes.len()
                )));
            }
            for a in 0..4 {
                for b in a + 1..4 {
                    if conn[a] == conn[b] {
                        return Err(Error::InvalidMesh(format!(
                            "element {e} repeats node {}",
                            conn[a]
                        )));
                    }
                }
            }
        }
        let mesh = Self { nodes, elements };
        for e in 0..mesh.n_elements() {
            for c in CORNERS {
                let det = mesh.jacobian(e, RefPoint::new(c[0], c[1])).det;
                if det <= 0.0 {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} is inverted or degenerate (det J = {det:e} at corner ({}, {}))",
                        c[0], c[1]
                    )));
                }
            }
        }
        Ok(mesh)
    }

    /// Axis-aligned `nx × ny` element mesh over a rectangle; nodes are
    /// numbered lexicographically with x fastest.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Config(format!(
                "mesh needs at least one element per axis, got {nx}x{ny}"
            )));
        }
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::Config(format!(
                "mesh rectangle [{x0}, {x1}] x [{y0}, {y1}] is empty"
            )));
        }
        let xs = linspace(x0, x1, nx + 1);
        let ys = linspace(y0, y1, ny + 1);
        let nodes = ys
            .iter()
            .flat_map(|&y| xs.iter().map(move |&x| [x, y]))
            .collect();
        let row = nx + 1;
        let mut elements = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let n0 = j * row + i;
                elements.push([n0, n0 + 1, n0 + row + 1, n0 + row]);
            }
        }
        Self::new(nodes, elements)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_coords(&self, e: usize) -> [[f64; 2]; 4] {
        self.elements[e].map(|n| self.nodes[n])
    }

    pub fn element_bbox(&self, e: usize) -> Aabb {
        Aabb::from_points(&self.element_coords(e))
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.nodes)
    }

    /// Area of element `e` from the cross product of its diagonals.
    pub fn element_area(&self, e: usize) -> f64 {
        let c = self.element_coords(e);
        let d1 = [c[2][0] - c[0][0], c[2][1] - c[0][1]];
        let d2 = [c[3][0] - c[1][0], c[3][1] - c[1][1]];
        0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
    }

    /// `X(ξ) = Σ N_j(ξ) x_j`.
    pub fn forward_map(&self, e: usize, p: RefPoint) -> [f64; 2] {
        let c = self.element_coords(e);
        let s = shape_functions(p);
        let mut x = [0.0; 2];
        for j in 0..4 {
            x[0] += s.n[j] * c[j][0];
            x[1] += s.n[j] * c[j][1];
        }
        x
    }

    pub fn jacobian(&self, e: usize, p: RefPoint) -> Jacobian {
        jacobian_of(&self.element_coords(e), &shape_functions(p))
    }

    /// Newton-Raphson inversion of the bilinear map for a batch of physical
    /// points, all started at the element centre.
    ///
    /// A point is converged once `‖X(ξ) − x*‖∞ < tol` and the last update
    /// was below `tol` as well.
    pub fn inverse_map_batch(
        &self,
        e: usize,
        points: &[[f64; 2]],
        tol: f64,
        max_iter: usize,
    ) -> Result<Vec<RefPoint>> {
        inverse_map_coords(&self.element_coords(e), e, points, tol, max_iter)
    }
}

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 30;
const SINGULAR_DET: f64 = 1e-14;
/// Accepted reference-coordinate overshoot for points on the element boundary.
pub const REF_TOL: f64 = 1e-8;

fn jacobian_of(c: &[[f64; 2]; 4], s: &ShapeValues) -> Jacobian {
    let mut m = [[0.0; 2]; 2];
    for j in 0..4 {
        m[0][0] += s.dn_dxi[j] * c[j][0];
        m[0][1] += s.dn_deta[j] * c[j][0];
        m[1][0] += s.dn_dxi[j] * c[j][1];
        m[1][1] += s.dn_deta[j] * c[j][1];
    }
    Jacobian {
        m,
        det: m[0][0] * m[1][1] - m[0][1] * m[1][0],
    }
}

pub(crate) fn inverse_map_coords(
    c: &[[f64; 2]; 4],
    element: usize,
    points: &[[f64; 2]],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<RefPoint>> {
    let n = points.len();
    let mut xi = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut active: Vec<usize> = (0..n).collect();

    for _ in 0..max_iter {
        if active.is_empty() {
            break;
        }
        active.retain(|&k| {
            let p = RefPoint::new(xi[k], eta[k]);
            let s = shape_functions(p);
            let (mut fx, mut fy) = (-points[k][0], -points[k][1]);
            for j in 0..4 {
                fx += s.n[j] * c[j][0];
                fy += s.n[j] * c[j][1];
            }
            let jac = jacobian_of(c, &s);
            let [[j11, j12], [j21, j22]] = jac.m;
            let det = jac.det;
            let dxi = (j22 * fx - j12 * fy) / det;
            let deta = (j11 * fy - j21 * fx) / det;
            xi[k] -= dxi;
            eta[k] -= deta;
            // the final step is still applied, which squares its error
            !(fx.abs().max(fy.abs()) < tol && dxi.abs().max(deta.abs()) < tol)
        });
        if let Some(&k) = active.iter().find(|&&k| {
            let det = jacobian_of(c, &shape_functions(RefPoint::new(xi[k], eta[k]))).det;
            det.abs() < SINGULAR_DET || !det.is_finite()
        }) {
            let det = jacobian_of(c, &shape_functions(RefPoint::new(xi[k], eta[k]))).det;
            return Err(Error::SingularMapping {
                element,
                point: k,
                det,
            });
        }
    }
    for &k in &active {
        // the last update may have landed inside tolerance
        let s = shape_functions(RefPoint::new(xi[k], eta[k]));
        let (mut fx, mut fy) = (-points[k][0], -points[k][1]);
        for j in 0..4 {
            fx += s.n[j] * c[j][0];
            fy += s.n[j] * c[j][1];
        }
        let r = fx.abs().max(fy.abs());
        if r.is_nan() || r >= tol {
            return Err(Error::NoConvergence {
                element,
                point: k,
                residual: r,
            });
        }
    }
    Ok(xi.into_iter().zip(eta).map(|(a, b)| RefPoint::new(a, b)).collect())
}

/// Nodes and weights of a quadrature rule. Points are `[ξ, η]` on the
/// reference square, `[ξ]` padded with zero in 1D, or barycentric
/// `[λ1, λ2, λ3]` on triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
}

impl<const D: usize> QuadratureRule<D> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub const MAX_GAUSS_ORDER: usize = 30;

/// Legendre `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`, nodes ascending.
///
/// Roots of `P_n` are found by Newton iteration from the Chebyshev-like
/// guesses `cos(π(k − ¼)/(n + ½))`.
pub fn gauss_legendre_1d(n: usize) -> Result<QuadratureRule<1>> {
    if n == 0 || n > MAX_GAUSS_ORDER {
        return Err(Error::InvalidRuleOrder(n));
    }
    if n == 1 {
        return Ok(QuadratureRule {
            points: vec![[0.0]],
            weights: vec![2.0],
        });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for k in 0..m {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule {
        points: nodes.into_iter().map(|x| [x]).collect(),
        weights,
    })
}

/// Tensor product of the `n`-point rule with itself on `[-1, 1]²`;
/// ξ varies fastest.
pub fn tensor_rule(n: usize) -> Result<QuadratureRule<2>> {
    let g = gauss_legendre_1d(n)?;
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (b, wb) in g.points.iter().zip(&g.weights) {
        for (a, wa) in g.points.iter().zip(&g.weights) {
            points.push([a[0], b[0]]);
            weights.push(wa * wb);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Symmetric six-point rule of polynomial degree 4 on a triangle, in
/// barycentric coordinates with weights summing to one. Physical integrals
/// are `|T| Σ w_q g(x_q)`.
pub fn triangle_rule_6pt() -> QuadratureRule<3> {
    let s10 = 10f64.sqrt();
    let r = (38.0 - 44.0 * (0.4f64).sqrt()).sqrt();
    let a = (8.0 - s10 + r) / 18.0;
    let b = (8.0 - s10 - r) / 18.0;
    let q = (213125.0 - 53320.0 * s10).sqrt();
    let wa = (620.0 + q) / 3720.0;
    let wb = (620.0 - q) / 3720.0;
    let orbit = |t: f64| {
        let c = 1.0 - 2.0 * t;
        [[c, t, t], [t, c, t], [t, t, c]]
    };
    let mut points = Vec::with_capacity(6);
    points.extend(orbit(a));
    points.extend(orbit(b));
    QuadratureRule {
        points,
        weights: vec![wa, wa, wa, wb, wb, wb],
    }
}
