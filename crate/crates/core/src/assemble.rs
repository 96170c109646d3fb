//! Load-vector assembly by per-element Gauss quadrature.
//!
//! The assembly is staged: Gauss points of every element are generated and
//! mapped to physical space first, the field is evaluated at all of them in
//! a single batch, and only then are the element contributions
//! accumulated.

use crate::error::{Error, Result};
use crate::fem::{shape_functions, tensor_rule, QuadMesh, RefPoint, ShapeValues};
use crate::interp::Interpolator;
use crate::parallel::{map_indexed, scatter_local, ExecOptions};
use crate::sum::compensated_sum;

/// Nodal load values `b_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsVector {
    b: Vec<f64>,
}

impl RhsVector {
    pub fn new(b: Vec<f64>) -> Self {
        Self { b }
    }

    pub fn values(&self) -> &[f64] {
        &self.b
    }

    pub fn into_values(self) -> Vec<f64> {
        self.b
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// `Σ_i b_i`, compensated.
    pub fn total(&self) -> f64 {
        compensated_sum(self.b.iter().copied())
    }
}

/// Physical Gauss points of all elements, element-major.
#[derive(Debug, Clone)]
pub struct GaussPoints {
    pub per_element: usize,
    pub weights: Vec<f64>,
    pub shapes: Vec<ShapeValues>,
    pub points: Vec<[f64; 2]>,
    /// `det J` at each entry of `points`.
    pub det_j: Vec<f64>,
}

/// Generates the `n_gauss²` tensor Gauss points of every element and maps
/// them to physical coordinates.
pub fn gauss_points(mesh: &QuadMesh, n_gauss: usize, opts: ExecOptions) -> Result<GaussPoints> {
    let rule = tensor_rule(n_gauss)?;
    let refs: Vec<RefPoint> = rule.points.iter().map(|p| RefPoint::new(p[0], p[1])).collect();
    let q = refs.len();
    let per_elem = map_indexed(mesh.n_elements(), opts, |e| {
        refs.iter()
            .map(|&r| (mesh.forward_map(e, r), mesh.jacobian(e, r).det))
            .collect::<Vec<_>>()
    });
    let mut points = Vec::with_capacity(q * mesh.n_elements());
    let mut det_j = Vec::with_capacity(q * mesh.n_elements());
    for elem in per_elem {
        for (x, d) in elem {
            points.push(x);
            det_j.push(d);
        }
    }
    Ok(GaussPoints {
        per_element: q,
        shapes: refs.iter().map(|&r| shape_functions(r)).collect(),
        weights: rule.weights,
        points,
        det_j,
    })
}

fn accumulate(mesh: &QuadMesh, gp: &GaussPoints, f: &[f64], opts: ExecOptions) -> RhsVector {
    let q = gp.per_element;
    let local = map_indexed(mesh.n_elements(), opts, |e| {
        let mut b = [0.0; 4];
        for k in 0..q {
            let idx = e * q + k;
            let s = gp.weights[k] * f[idx] * gp.det_j[idx];
            let n = &gp.shapes[k].n;
            for a in 0..4 {
                b[a] += s * n[a];
            }
        }
        b
    });
    RhsVector::new(scatter_local(mesh.n_nodes(), mesh.elements(), &local, opts))
}

/// `b_i = Σ_e Σ_q w_q N_i(ξ_q) f_interp(X(ξ_q)) det J(ξ_q)`.
pub fn assemble_quadrature(mesh: &QuadMesh, interp: &Interpolator, n_gauss: usize) -> Result<RhsVector> {
    assemble_quadrature_with(mesh, interp, n_gauss, ExecOptions::serial())
}

pub fn assemble_quadrature_with(
    mesh: &QuadMesh,
    interp: &Interpolator,
    n_gauss: usize,
    opts: ExecOptions,
) -> Result<RhsVector> {
    let gp = gauss_points(mesh, n_gauss, opts)?;
    let q = gp.per_element;
    let f = interp
        .evaluate_batch_with(&gp.points, opts)
        .map_err(|e| match e {
            Error::OutOfDomain { index, x, y } => Error::ElementOutOfDomain {
                element: index / q,
                point: index % q,
                x,
                y,
            },
            other => other,
        })?;
    Ok(accumulate(mesh, &gp, &f, opts))
}

/// Same assembly with the source evaluated exactly at the Gauss points.
pub fn assemble_quadrature_analytic<F>(mesh: &QuadMesh, f: F, n_gauss: usize) -> Result<RhsVector>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    assemble_quadrature_analytic_with(mesh, f, n_gauss, ExecOptions::serial())
}

pub fn assemble_quadrature_analytic_with<F>(
    mesh: &QuadMesh,
    f: F,
    n_gauss: usize,
    opts: ExecOptions,
) -> Result<RhsVector>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let gp = gauss_points(mesh, n_gauss, opts)?;
    let vals = map_indexed(gp.points.len(), opts, |k| f(gp.points[k][0], gp.points[k][1]));
    Ok(accumulate(mesh, &gp, &vals, opts))
}
