//! Cut-cell (supermesh) assembly.
//!
//! Setup builds, per element, the intersection polygons with every grid
//! cell it overlaps (AABB candidate search plus Sutherland-Hodgman
//! clipping), fan-triangulates them, places the six-point triangle rule on
//! each triangle and inverts the element map at those points. The
//! resulting [`SupermeshCache`] is reused for every field on the same
//! grid: execution only evaluates the field and accumulates
//! `b_k = Σ |T_m| Σ_q w_q N_k(ξ_q) f(x_q)`.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::assemble::RhsVector;
use crate::error::{Error, Result};
use crate::fem::{
    shape_functions, triangle_rule_6pt, QuadMesh, DEFAULT_NEWTON_MAX_ITER, DEFAULT_NEWTON_TOL,
};
use crate::grid::{candidate_cells, Aabb, ScalarField, StructuredGrid};
use crate::interp::{Interpolator, Reconstruction};
use crate::parallel::{map_indexed, scatter_local, ExecOptions};

/// Polygons below this fraction of the cell area are dropped.
const DEGENERATE_AREA: f64 = 1e-14;
/// Vertex merge distance as a fraction of the local bounding diagonal.
const DEDUP_TOL: f64 = 1e-13;

/// Counter-clockwise convex polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    pub vertices: Vec<[f64; 2]>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Self {
        Self { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Signed shoelace area, positive for counter-clockwise order.
    /// Coordinates are taken relative to the first vertex.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let o = self.vertices[0];
        let mut a = 0.0;
        for k in 1..n - 1 {
            a += cross(o, self.vertices[k], self.vertices[k + 1]);
        }
        0.5 * a
    }

    /// Every turn is a left turn, up to `tol` times the squared scale.
    pub fn is_convex(&self, tol: f64) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let b = Aabb::from_points(&self.vertices);
        let scale = b.diagonal().powi(2);
        (0..n).all(|k| {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            let c = self.vertices[(k + 2) % n];
            cross(a, b, c) >= -tol * scale
        })
    }

    fn dedup(&mut self, tol: f64) {
        let v = &mut self.vertices;
        v.dedup_by(|b, a| (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol);
        while v.len() > 1 {
            let (f, l) = (v[0], v[v.len() - 1]);
            if (f[0] - l[0]).abs() <= tol && (f[1] - l[1]).abs() <= tol {
                v.pop();
            } else {
                break;
            }
        }
    }
}

fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[derive(Clone, Copy)]
enum Side {
    Left(f64),
    Right(f64),
    Bottom(f64),
    Top(f64),
}

impl Side {
    fn inside(self, p: [f64; 2]) -> bool {
        match self {
            Side::Left(c) => p[0] >= c,
            Side::Right(c) => p[0] <= c,
            Side::Bottom(c) => p[1] >= c,
            Side::Top(c) => p[1] <= c,
        }
    }

    /// Crossing of segment `p–q` with the clip line; the clipped coordinate
    /// is snapped onto the line.
    fn intersect(self, p: [f64; 2], q: [f64; 2]) -> [f64; 2] {
        match self {
            Side::Left(c) | Side::Right(c) => {
                let t = (c - p[0]) / (q[0] - p[0]);
                [c, p[1] + t * (q[1] - p[1])]
            }
            Side::Bottom(c) | Side::Top(c) => {
                let t = (c - p[1]) / (q[1] - p[1]);
                [p[0] + t * (q[0] - p[0]), c]
            }
        }
    }
}

fn clip_side(input: &[[f64; 2]], side: Side, out: &mut Vec<[f64; 2]>) {
    out.clear();
    let n = input.len();
    for k in 0..n {
        let cur = input[k];
        let prev = input[(k + n - 1) % n];
        let (ci, pi) = (side.inside(cur), side.inside(prev));
        if ci {
            if !pi {
                out.push(side.intersect(prev, cur));
            }
            out.push(cur);
        } else if pi {
            out.push(side.intersect(prev, cur));
        }
    }
}

/// Sutherland-Hodgman clip of a convex polygon against an axis-aligned cell.
/// Returns `None` when the intersection is empty or has negligible area.
pub fn clip_to_cell(element: &ConvexPolygon, cell: &Aabb) -> Option<ConvexPolygon> {
    let mut a = element.vertices.clone();
    let mut b = Vec::with_capacity(a.len() + 4);
    for side in [
        Side::Left(cell.min[0]),
        Side::Right(cell.max[0]),
        Side::Bottom(cell.min[1]),
        Side::Top(cell.max[1]),
    ] {
        if a.is_empty() {
            return None;
        }
        clip_side(&a, side, &mut b);
        std::mem::swap(&mut a, &mut b);
    }
    let mut poly = ConvexPolygon::new(a);
    if poly.len() < 3 {
        return None;
    }
    let scale = Aabb::from_points(&element.vertices).diagonal().max(cell.diagonal());
    poly.dedup(DEDUP_TOL * scale);
    if poly.len() < 3 || poly.area() < DEGENERATE_AREA * cell.area() {
        return None;
    }
    Some(poly)
}

pub type Triangle = [[f64; 2]; 3];

pub fn triangle_area(t: &Triangle) -> f64 {
    0.5 * cross(t[0], t[1], t[2])
}

/// Fan triangulation about the vertex centroid: `n` vertices give `n`
/// triangles.
pub fn tessellate(poly: &ConvexPolygon) -> Vec<Triangle> {
    let mut p = poly.clone();
    if p.len() >= 3 {
        let scale = Aabb::from_points(&p.vertices).diagonal();
        p.dedup(DEDUP_TOL * scale);
    }
    let n = p.len();
    if n < 3 {
        return Vec::new();
    }
    let inv = 1.0 / n as f64;
    let c = p
        .vertices
        .iter()
        .fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
    let c = [c[0] * inv, c[1] * inv];
    (0..n)
        .map(|k| [c, p.vertices[k], p.vertices[(k + 1) % n]])
        .collect()
}

/// One intersection polygon of an element with grid cell `(i, j)`; its
/// quadrature points are `points[start..end]` of the owning element.
#[derive(Debug, Clone)]
pub struct CutPiece {
    pub cell: (usize, usize),
    pub polygon: ConvexPolygon,
    pub n_triangles: usize,
    pub start: usize,
    pub end: usize,
}

/// Cached geometry of one element.
#[derive(Debug, Clone, Default)]
pub struct ElementCut {
    pub pieces: Vec<CutPiece>,
    /// Physical quadrature points.
    pub points: Vec<[f64; 2]>,
    /// Rule weight times triangle area.
    pub weights: Vec<f64>,
    /// Shape-function values at the inverse-mapped points.
    pub shapes: Vec<[f64; 4]>,
    /// Sum of triangle areas.
    pub cut_area: f64,
}

/// Setup-phase result, reusable for every field on the same grid.
#[derive(Debug, Clone)]
pub struct SupermeshCache {
    grid: Arc<StructuredGrid>,
    n_nodes: usize,
    connectivity: Vec<[usize; 4]>,
    element_areas: Vec<f64>,
    cuts: Vec<ElementCut>,
}

impl SupermeshCache {
    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn n_elements(&self) -> usize {
        self.cuts.len()
    }

    pub fn element(&self, e: usize) -> &ElementCut {
        &self.cuts[e]
    }

    pub fn element_area(&self, e: usize) -> f64 {
        self.element_areas[e]
    }

    pub fn n_points(&self) -> usize {
        self.cuts.iter().map(|c| c.points.len()).sum()
    }

    pub fn n_polygons(&self) -> usize {
        self.cuts.iter().map(|c| c.pieces.len()).sum()
    }

    /// Elements whose cut area falls short of their own area, i.e. that
    /// stick out of the grid domain, with the uncovered fraction.
    pub fn partially_covered(&self) -> Vec<(usize, f64)> {
        self.cuts
            .iter()
            .zip(&self.element_areas)
            .enumerate()
            .filter_map(|(e, (c, &a))| {
                let frac = 1.0 - c.cut_area / a;
                (frac > 1e-10).then_some((e, frac))
            })
            .collect()
    }

    /// Polygon soup for visualisation: one `e i j x0 y0 x1 y1 ...` line per
    /// intersection polygon.
    pub fn polygon_soup(&self) -> String {
        let mut s = String::new();
        for (e, cut) in self.cuts.iter().enumerate() {
            for p in &cut.pieces {
                let _ = write!(s, "{e} {} {}", p.cell.0, p.cell.1);
                for v in &p.polygon.vertices {
                    let _ = write!(s, " {:.16e} {:.16e}", v[0], v[1]);
                }
                s.push('\n');
            }
        }
        s
    }
}

pub fn build_supermesh(mesh: &QuadMesh, grid: Arc<StructuredGrid>) -> Result<SupermeshCache> {
    build_supermesh_with(mesh, grid, ExecOptions::serial())
}

pub fn build_supermesh_with(
    mesh: &QuadMesh,
    grid: Arc<StructuredGrid>,
    opts: ExecOptions,
) -> Result<SupermeshCache> {
    let rule = triangle_rule_6pt();
    let cuts = map_indexed(mesh.n_elements(), opts, |e| cut_element(mesh, &grid, e, &rule.points, &rule.weights))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(SupermeshCache {
        grid,
        n_nodes: mesh.n_nodes(),
        connectivity: mesh.elements().to_vec(),
        element_areas: (0..mesh.n_elements()).map(|e| mesh.element_area(e)).collect(),
        cuts,
    })
}

fn cut_element(
    mesh: &QuadMesh,
    grid: &StructuredGrid,
    e: usize,
    bary: &[[f64; 3]],
    rule_w: &[f64],
) -> Result<ElementCut> {
    let poly = ConvexPolygon::new(mesh.element_coords(e).to_vec());
    let cells = candidate_cells(grid, &mesh.element_bbox(e));
    let mut cut = ElementCut::default();
    for (i, j) in cells.iter() {
        let Some(piece) = clip_to_cell(&poly, &grid.cell_bounds(i, j)) else {
            continue;
        };
        let tris = tessellate(&piece);
        let start = cut.points.len();
        for t in &tris {
            let area = triangle_area(t);
            cut.cut_area += area;
            for (l, w) in bary.iter().zip(rule_w) {
                cut.points.push([
                    l[0] * t[0][0] + l[1] * t[1][0] + l[2] * t[2][0],
                    l[0] * t[0][1] + l[1] * t[1][1] + l[2] * t[2][1],
                ]);
                cut.weights.push(w * area);
            }
        }
        cut.pieces.push(CutPiece {
            cell: (i, j),
            polygon: piece,
            n_triangles: tris.len(),
            start,
            end: cut.points.len(),
        });
    }
    let refs = mesh.inverse_map_batch(e, &cut.points, DEFAULT_NEWTON_TOL, DEFAULT_NEWTON_MAX_ITER)?;
    cut.shapes = refs.into_iter().map(|r| shape_functions(r).n).collect();
    Ok(cut)
}

/// Bilinear value in a known cell.
fn bilinear_in_cell(field: &ScalarField, i: usize, j: usize, p: [f64; 2]) -> f64 {
    let g = field.grid();
    let (x0, x1) = (g.xs()[i], g.xs()[i + 1]);
    let (y0, y1) = (g.ys()[j], g.ys()[j + 1]);
    let dx = (p[0] - x0) / (x1 - x0);
    let dy = (p[1] - y0) / (y1 - y0);
    (1.0 - dx) * (1.0 - dy) * field.at(i, j)
        + dx * (1.0 - dy) * field.at(i + 1, j)
        + (1.0 - dx) * dy * field.at(i, j + 1)
        + dx * dy * field.at(i + 1, j + 1)
}

fn check_grid(cache: &SupermeshCache, field: &ScalarField) -> Result<()> {
    if !Arc::ptr_eq(&cache.grid, field.grid_arc()) && *cache.grid != *field.grid() {
        return Err(Error::Config(
            "field grid differs from the grid the supermesh was built on".into(),
        ));
    }
    Ok(())
}

pub fn assemble_supermesh(
    cache: &SupermeshCache,
    field: &ScalarField,
    reconstruction: Reconstruction,
) -> Result<RhsVector> {
    assemble_supermesh_with(cache, field, reconstruction, ExecOptions::serial())
}

/// Execution phase. Bilinear reconstruction is evaluated directly in the
/// cell each piece belongs to; other reconstructions go through an
/// [`Interpolator`] built from `field`.
pub fn assemble_supermesh_with(
    cache: &SupermeshCache,
    field: &ScalarField,
    reconstruction: Reconstruction,
    opts: ExecOptions,
) -> Result<RhsVector> {
    check_grid(cache, field)?;
    let local: Vec<[f64; 4]> = match reconstruction {
        Reconstruction::Bilinear => map_indexed(cache.n_elements(), opts, |e| {
            let cut = &cache.cuts[e];
            let mut b = [0.0; 4];
            for piece in &cut.pieces {
                let (i, j) = piece.cell;
                for q in piece.start..piece.end {
                    let s = cut.weights[q] * bilinear_in_cell(field, i, j, cut.points[q]);
                    for a in 0..4 {
                        b[a] += s * cut.shapes[q][a];
                    }
                }
            }
            b
        }),
        other => {
            let interp = Interpolator::build(field, other)?;
            return assemble_supermesh_interp_with(cache, &interp, opts);
        }
    };
    Ok(RhsVector::new(scatter_local(cache.n_nodes, &cache.connectivity, &local, opts)))
}

/// Execution phase with a prebuilt reconstruction.
pub fn assemble_supermesh_interp_with(
    cache: &SupermeshCache,
    interp: &Interpolator,
    opts: ExecOptions,
) -> Result<RhsVector> {
    if *interp.grid() != *cache.grid {
        return Err(Error::Config(
            "interpolator grid differs from the grid the supermesh was built on".into(),
        ));
    }
    let local = map_indexed(cache.n_elements(), opts, |e| -> Result<[f64; 4]> {
        let cut = &cache.cuts[e];
        let f = interp.evaluate_batch(&cut.points)?;
        let mut b = [0.0; 4];
        for q in 0..f.len() {
            let s = cut.weights[q] * f[q];
            for a in 0..4 {
                b[a] += s * cut.shapes[q][a];
            }
        }
        Ok(b)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(RhsVector::new(scatter_local(cache.n_nodes, &cache.connectivity, &local, opts)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::trapezoid_integral;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> ConvexPolygon {
        ConvexPolygon::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    #[test]
    fn clip_overlapping_square() {
        let r = clip_to_cell(&square(0.0, 0.0, 1.0, 1.0), &Aabb::new(0.5, 0.5, 1.5, 1.5)).unwrap();
        assert_relative_eq!(r.area(), 0.25, max_relative = 1e-15);
        let b = Aabb::from_points(&r.vertices);
        assert_eq!((b.min, b.max), ([0.5, 0.5], [1.0, 1.0]));
    }

    #[test]
    fn clip_inside_is_identity() {
        let p = ConvexPolygon::new(vec![[0.2, 0.2], [0.8, 0.3], [0.5, 0.9]]);
        let r = clip_to_cell(&p, &Aabb::new(0.0, 0.0, 1.0, 1.0)).unwrap();
        let mut got = r.vertices.clone();
        let mut want = p.vertices.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn clip_diamond_corner() {
        let d = ConvexPolygon::new(vec![[0.5, 0.0], [1.0, 0.5], [0.5, 1.0], [0.0, 0.5]]);
        let r = clip_to_cell(&d, &Aabb::new(0.0, 0.0, 0.5, 0.5)).unwrap();
        assert_eq!(r.len(), 3);
        assert_relative_eq!(r.area(), 0.125, max_relative = 1e-15);
        for v in [[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]] {
            assert!(r.vertices.contains(&v), "{:?}", r.vertices);
        }
    }

    #[test]
    fn clip_disjoint_and_edge_touching() {
        let s = square(0.0, 0.0, 1.0, 1.0);
        assert!(clip_to_cell(&s, &Aabb::new(2.0, 2.0, 3.0, 3.0)).is_none());
        assert!(clip_to_cell(&s, &Aabb::new(1.0, 0.0, 2.0, 1.0)).is_none());
        assert!(clip_to_cell(&s, &Aabb::new(1.0, 1.0, 2.0, 2.0)).is_none());
    }

    #[test]
    fn tessellation_counts_and_areas() {
        let q = ConvexPolygon::new(vec![[0.0, 0.0], [2.0, 0.0], [2.5, 1.0], [0.2, 1.5]]);
        let t = tessellate(&q);
        assert_eq!(t.len(), 4);
        assert_relative_eq!(t.iter().map(triangle_area).sum::<f64>(), q.area(), max_relative = 1e-13);

        let tri = ConvexPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let t = tessellate(&tri);
        assert_eq!(t.len(), 3);
        assert_relative_eq!(t.iter().map(triangle_area).sum::<f64>(), 0.5, max_relative = 1e-13);

        let hex = ConvexPolygon::new(
            (0..6)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::PI / 3.0;
                    [a.cos(), a.sin()]
                })
                .collect(),
        );
        let t = tessellate(&hex);
        assert_eq!(t.len(), 6);
        assert!(t.iter().all(|tr| triangle_area(tr) > 0.0));
        assert_relative_eq!(
            t.iter().map(triangle_area).sum::<f64>(),
            1.5 * 3f64.sqrt(),
            max_relative = 1e-12
        );

        assert!(tessellate(&ConvexPolygon::new(vec![[0.0, 0.0], [1.0, 1.0]])).is_empty());
        assert!(tessellate(&ConvexPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])).is_empty());
    }

    fn unit_grid(n: usize) -> Arc<StructuredGrid> {
        Arc::new(StructuredGrid::uniform(0.0, 1.0, n, 0.0, 1.0, n).unwrap())
    }

    #[test]
    fn element_over_two_by_two_cells() {
        let mesh = QuadMesh::rectangle(0.0, 0.0, 1.0, 1.0, 1, 1).unwrap();
        let cache = build_supermesh(&mesh, unit_grid(3)).unwrap();
        let cut = cache.element(0);
        assert_eq!(cut.pieces.len(), 4);
        for p in &cut.pieces {
            assert_relative_eq!(p.polygon.area(), 0.25, max_relative = 1e-14);
        }
    }

    #[test]
    fn element_equal_to_cell() {
        let mesh = QuadMesh::rectangle(0.25, 0.5, 0.5, 0.75, 1, 1).unwrap();
        let cache = build_supermesh(&mesh, unit_grid(5)).unwrap();
        let cut = cache.element(0);
        assert_eq!(cut.pieces.len(), 1);
        assert_eq!(cut.pieces[0].cell, (1, 2));
        assert_relative_eq!(cut.pieces[0].polygon.area(), 0.0625, max_relative = 1e-14);
    }

    #[test]
    fn conforming_mesh_closes_area() {
        let mesh = QuadMesh::rectangle(0.0, 0.0, 1.0, 1.0, 10, 10).unwrap();
        let cache = build_supermesh(&mesh, unit_grid(11)).unwrap();
        for e in 0..mesh.n_elements() {
            assert_relative_eq!(cache.element(e).cut_area, mesh.element_area(e), max_relative = 1e-12);
            assert_eq!(cache.element(e).pieces.len(), 1);
        }
        assert!(cache.partially_covered().is_empty());
    }

    #[test]
    fn partially_outside_element_is_reported() {
        let mesh = QuadMesh::rectangle(0.5, 0.0, 1.5, 1.0, 1, 1).unwrap();
        let cache = build_supermesh(&mesh, unit_grid(5)).unwrap();
        let pc = cache.partially_covered();
        assert_eq!(pc.len(), 1);
        assert_relative_eq!(pc[0].1, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn constant_field_gives_area() {
        let mesh = QuadMesh::new(
            vec![[0.1, 0.1], [0.6, 0.15], [0.9, 0.8], [0.2, 0.7]],
            vec![[0, 1, 2, 3]],
        )
        .unwrap();
        let g = StructuredGrid::new(vec![0.0, 0.13, 0.4, 0.41, 0.77, 1.0], vec![0.0, 0.3, 0.5, 1.0]).unwrap();
        let g = Arc::new(g);
        let f = ScalarField::from_fn(g.clone(), |_, _| 1.0).unwrap();
        let cache = build_supermesh(&mesh, g).unwrap();
        let b = assemble_supermesh(&cache, &f, Reconstruction::Bilinear).unwrap();
        assert_relative_eq!(b.total(), mesh.element_area(0), max_relative = 1e-12);
    }

    /// ∫ over a cell of the bilinear interpolant = cell area × corner mean.
    fn cellwise_bilinear_integral(f: &ScalarField) -> f64 {
        let g = f.grid();
        let mut s = 0.0;
        for j in 0..g.ny() - 1 {
            for i in 0..g.nx() - 1 {
                let mean = 0.25 * (f.at(i, j) + f.at(i + 1, j) + f.at(i, j + 1) + f.at(i + 1, j + 1));
                s += g.cell_bounds(i, j).area() * mean;
            }
        }
        s
    }

    #[test]
    fn bilinear_conservation_matches_trapezoid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = Arc::new(StructuredGrid::new(
            vec![0.0, 0.07, 0.2, 0.33, 0.5, 0.61, 0.8, 1.0],
            vec![0.0, 0.15, 0.4, 0.45, 0.7, 1.0],
        ).unwrap());
        let vals: Vec<f64> = (0..48).map(|_| rng.gen_range(-2.0..3.0)).collect();
        let f = ScalarField::new(g.clone(), vals).unwrap();
        let mesh = QuadMesh::rectangle(0.0, 0.0, 1.0, 1.0, 7, 9).unwrap();
        let cache = build_supermesh(&mesh, g).unwrap();
        let b = assemble_supermesh(&cache, &f, Reconstruction::Bilinear).unwrap();
        let trap = trapezoid_integral(&f);
        assert_relative_eq!(trap, cellwise_bilinear_integral(&f), max_relative = 1e-13);
        assert_relative_eq!(b.total(), trap, max_relative = 1e-12);
        // the generic interpolator path agrees with the per-cell path
        let b2 = assemble_supermesh(&cache, &f, Reconstruction::Lagrange(1)).unwrap();
        assert_relative_eq!(b2.total(), trap, max_relative = 1e-12);
    }

    #[test]
    fn sine_on_fine_grid_matches_trapezoid() {
        let k = 2.5 * std::f64::consts::PI;
        let g = unit_grid(201);
        let f = ScalarField::from_fn(g.clone(), |x, y| (k * x).sin() * (k * y).sin()).unwrap();
        let mesh = QuadMesh::rectangle(0.0, 0.0, 1.0, 1.0, 40, 40).unwrap();
        let cache = build_supermesh(&mesh, g).unwrap();
        let b = assemble_supermesh(&cache, &f, Reconstruction::Bilinear).unwrap();
        let trap = trapezoid_integral(&f);
        assert!(((b.total() - trap) / trap).abs() < 1e-12);
        let exact = ((1.0 - k.cos()) / k).powi(2);
        assert!(((b.total() - exact) / exact).abs() > 1e-8);
    }

    /// Per-node oracle for axis-aligned elements: on each element ∩ cell
    /// rectangle the integrand N_k · f is biquadratic, so 2×2 Gauss is exact.
    #[test]
    fn axis_aligned_loads_are_exact() {
        use crate::fem::{gauss_legendre_1d, shape_functions, RefPoint};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = Arc::new(StructuredGrid::new(
            vec![0.0, 0.11, 0.3, 0.42, 0.6, 0.77, 1.0],
            vec![0.0, 0.2, 0.35, 0.6, 0.8, 1.0],
        ).unwrap());
        let vals: Vec<f64> = (0..42).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let f = ScalarField::new(g.clone(), vals).unwrap();
        let mesh = QuadMesh::rectangle(0.13, 0.05, 0.87, 0.91, 3, 4).unwrap();
        let b = assemble_supermesh(&build_supermesh(&mesh, g.clone()).unwrap(), &f, Reconstruction::Bilinear).unwrap();

        let gl = gauss_legendre_1d(2).unwrap();
        let mut oracle = vec![0.0; mesh.n_nodes()];
        for e in 0..mesh.n_elements() {
            let c = mesh.element_coords(e);
            let (ex0, ex1, ey0, ey1) = (c[0][0], c[2][0], c[0][1], c[2][1]);
            for j in 0..g.ny() - 1 {
                for i in 0..g.nx() - 1 {
                    let cb = g.cell_bounds(i, j);
                    let (x0, x1) = (ex0.max(cb.min[0]), ex1.min(cb.max[0]));
                    let (y0, y1) = (ey0.max(cb.min[1]), ey1.min(cb.max[1]));
                    if x1 <= x0 || y1 <= y0 {
                        continue;
                    }
                    for (qa, wa) in gl.points.iter().zip(&gl.weights) {
                        for (qb, wb) in gl.points.iter().zip(&gl.weights) {
                            let x = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * qa[0];
                            let y = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * qb[0];
                            let w = wa * wb * 0.25 * (x1 - x0) * (y1 - y0);
                            let tx = (x - cb.min[0]) / cb.width();
                            let ty = (y - cb.min[1]) / cb.height();
                            let fv = (1.0 - tx) * (1.0 - ty) * f.at(i, j)
                                + tx * (1.0 - ty) * f.at(i + 1, j)
                                + tx * ty * f.at(i + 1, j + 1)
                                + (1.0 - tx) * ty * f.at(i, j + 1);
                            let r = RefPoint::new(
                                2.0 * (x - ex0) / (ex1 - ex0) - 1.0,
                                2.0 * (y - ey0) / (ey1 - ey0) - 1.0,
                            );
                            let n = shape_functions(r).n;
                            for a in 0..4 {
                                oracle[mesh.elements()[e][a]] += w * n[a] * fv;
                            }
                        }
                    }
                }
            }
        }
        let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (got, want) in b.values().iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-12 * scale, "{got} vs {want}");
        }
    }

    /// On a non-affine element the shape functions are not polynomial in
    /// x, y, so the triangle rule is inexact; the defect shrinks as finer
    /// grids cut the element into smaller pieces.
    #[test]
    fn non_affine_defect_vanishes_under_refinement() {
        use crate::assemble::assemble_quadrature_analytic;
        let mesh = QuadMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.7, 1.0], [0.1, 0.8]], vec![[0, 1, 2, 3]]).unwrap();
        let f = |x: f64, y: f64| 1.0 + x + 2.0 * y + 3.0 * x * y;
        // polynomial integrand in reference coordinates: 8-point Gauss is exact
        let exact = assemble_quadrature_analytic(&mesh, f, 8).unwrap();
        let mut errs = Vec::new();
        for n in [2, 5, 9, 17, 33] {
            let g = unit_grid(n);
            let field = ScalarField::from_fn(g.clone(), f).unwrap();
            let b = assemble_supermesh(&build_supermesh(&mesh, g).unwrap(), &field, Reconstruction::Bilinear).unwrap();
            let e = b.values().iter().zip(exact.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert_relative_eq!(b.total(), exact.total(), max_relative = 1e-13);
            errs.push(e);
        }
        assert!(errs[0] > 1e-8, "{errs:?}");
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[4] < errs[0] * 1e-3, "{errs:?}");
    }

    #[test]
    fn rejects_field_on_other_grid() {
        let mesh = QuadMesh::rectangle(0.0, 0.0, 1.0, 1.0, 2, 2).unwrap();
        let cache = build_supermesh(&mesh, unit_grid(5)).unwrap();
        let f = ScalarField::from_fn(unit_grid(6), |_, _| 1.0).unwrap();
        assert!(assemble_supermesh(&cache, &f, Reconstruction::Bilinear).is_err());
    }

    #[test]
    fn soup_has_one_line_per_polygon() {
        let mesh = QuadMesh::rectangle(0.0, 0.0, 1.0, 1.0, 2, 2).unwrap();
        let cache = build_supermesh(&mesh, unit_grid(4)).unwrap();
        let soup = cache.polygon_soup();
        assert_eq!(soup.lines().count(), cache.n_polygons());
        let first: Vec<&str> = soup.lines().next().unwrap().split(' ').collect();
        assert_eq!(&first[..3], &["0", "0", "0"]);
        assert_eq!((first.len() - 3) % 2, 0);
    }

    // Independent oracle: vertex set of polygon ∩ box from inside vertices,
    // box corners inside the polygon and edge/edge crossings.
    fn brute_force_clip(poly: &[[f64; 2]], b: &Aabb) -> Vec<[f64; 2]> {
        let inside_box = |p: [f64; 2]| p[0] >= b.min[0] && p[0] <= b.max[0] && p[1] >= b.min[1] && p[1] <= b.max[1];
        let n = poly.len();
        let inside_poly = |p: [f64; 2]| (0..n).all(|k| cross(poly[k], poly[(k + 1) % n], p) >= 0.0);
        let corners = [[b.min[0], b.min[1]], [b.max[0], b.min[1]], [b.max[0], b.max[1]], [b.min[0], b.max[1]]];
        let mut pts: Vec<[f64; 2]> = poly.iter().copied().filter(|&p| inside_box(p)).collect();
        pts.extend(corners.iter().copied().filter(|&c| inside_poly(c)));
        for k in 0..n {
            let (p, q) = (poly[k], poly[(k + 1) % n]);
            for m in 0..4 {
                let (c, d) = (corners[m], corners[(m + 1) % 4]);
                let den = (q[0] - p[0]) * (d[1] - c[1]) - (q[1] - p[1]) * (d[0] - c[0]);
                if den.abs() < 1e-300 {
                    continue;
                }
                let t = ((c[0] - p[0]) * (d[1] - c[1]) - (c[1] - p[1]) * (d[0] - c[0])) / den;
                let u = ((c[0] - p[0]) * (q[1] - p[1]) - (c[1] - p[1]) * (q[0] - p[0])) / den;
                if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                    pts.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                }
            }
        }
        let mut uniq: Vec<[f64; 2]> = Vec::new();
        for p in pts {
            if !uniq.iter().any(|u| (u[0] - p[0]).abs() < 1e-12 && (u[1] - p[1]).abs() < 1e-12) {
                uniq.push(p);
            }
        }
        uniq
    }

    fn circle_polygon() -> impl Strategy<Value = Vec<[f64; 2]>> {
        (
            prop::collection::vec(0.0f64..std::f64::consts::TAU, 3..9),
            -0.5f64..1.5,
            -0.5f64..1.5,
            0.1f64..1.5,
        )
            .prop_map(|(mut angles, cx, cy, r)| {
                angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
                angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
                angles.iter().map(|a| [cx + r * a.cos(), cy + r * a.sin()]).collect()
            })
            .prop_filter("need a proper polygon", |v: &Vec<[f64; 2]>| {
                v.len() >= 3 && ConvexPolygon::new(v.clone()).area() > 1e-3
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn clip_matches_brute_force(poly in circle_polygon()) {
            let cell = Aabb::new(0.0, 0.0, 1.0, 1.0);
            let subject = ConvexPolygon::new(poly.clone());
            let oracle = brute_force_clip(&poly, &cell);
            let oracle_area = if oracle.len() >= 3 {
                // order the oracle points by angle about their mean
                let c = oracle.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
                let c = [c[0] / oracle.len() as f64, c[1] / oracle.len() as f64];
                let mut o = oracle.clone();
                o.sort_by(|a, b| (a[1] - c[1]).atan2(a[0] - c[0]).partial_cmp(&(b[1] - c[1]).atan2(b[0] - c[0])).unwrap());
                ConvexPolygon::new(o).area()
            } else {
                0.0
            };
            match clip_to_cell(&subject, &cell) {
                None => prop_assert!(oracle_area < 1e-12),
                Some(r) => {
                    prop_assert!(r.is_convex(1e-12));
                    prop_assert!(r.area() > 0.0);
                    prop_assert_eq!(r.len(), oracle.len());
                    for v in &r.vertices {
                        prop_assert!(oracle.iter().any(|o| (o[0] - v[0]).abs() < 1e-12 && (o[1] - v[1]).abs() < 1e-12));
                    }
                    prop_assert!((r.area() - oracle_area).abs() < 1e-12);
                }
            }
        }
    }
}
