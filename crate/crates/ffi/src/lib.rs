//! C interface to `fieldxfer`.
//!
//! Objects are opaque heap handles created by `fx_*_new` style functions
//! and released with the matching `fx_*_free`. Every fallible call returns
//! an [`FxStatus`]; on failure a message is available from
//! [`fx_last_error_message`] on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use fieldxfer::grid::trapezoid_integral;
use fieldxfer::{
    assemble::assemble_quadrature_with, build_supermesh, io, supermesh, Error, ExecOptions, Interpolator,
    QuadMesh, Reconstruction, RhsVector, ScalarField, StructuredGrid, SupermeshCache,
};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidInput = 3,
    OutOfDomain = 4,
    NoConvergence = 5,
    SingularMapping = 6,
    Io = 7,
    Panic = 8,
}

/// Field reconstruction family; the degree is passed separately.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FxReconstruction {
    Bilinear = 0,
    BSpline = 1,
    Lagrange = 2,
}

/// Threading knobs; `threads == 0` uses all cores.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FxExecOptions {
    pub threads: usize,
    pub deterministic: bool,
}

pub struct FxField(Arc<ScalarField>);
pub struct FxMesh(QuadMesh);
pub struct FxInterpolator(Interpolator);
pub struct FxSupermesh(SupermeshCache);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FxStatus {
    match e {
        Error::OutOfDomain { .. } | Error::ElementOutOfDomain { .. } => FxStatus::OutOfDomain,
        Error::NoConvergence { .. } => FxStatus::NoConvergence,
        Error::SingularMapping { .. } => FxStatus::SingularMapping,
        Error::Io { .. } => FxStatus::Io,
        Error::InvalidDegree { .. } | Error::InvalidRuleOrder(_) | Error::Config(_) => FxStatus::InvalidArgument,
        _ => FxStatus::InvalidInput,
    }
}

struct Fail(FxStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FxStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FxStatus::Ok
        }
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            FxStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn utf8_path<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FxStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

fn reconstruction(kind: FxReconstruction, degree: usize) -> Reconstruction {
    match kind {
        FxReconstruction::Bilinear => Reconstruction::Bilinear,
        FxReconstruction::BSpline => Reconstruction::BSpline(degree),
        FxReconstruction::Lagrange => Reconstruction::Lagrange(degree),
    }
}

unsafe fn exec(opts: *const FxExecOptions) -> ExecOptions {
    match opts.as_ref() {
        None => ExecOptions::default(),
        Some(o) => ExecOptions {
            threads: (o.threads > 0).then_some(o.threads),
            deterministic: o.deterministic,
        },
    }
}

unsafe fn copy_out(rhs: RhsVector, out: *mut f64, len: usize) -> Result<(), Fail> {
    if len != rhs.len() {
        return Err(Fail(
            FxStatus::InvalidArgument,
            format!("output length {len} differs from node count {}", rhs.len()),
        ));
    }
    if out.is_null() {
        return Err(null("output vector"));
    }
    ptr::copy_nonoverlapping(rhs.values().as_ptr(), out, len);
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn fx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Grid field from ascending coordinates and `nx * ny` values, x fastest.
#[no_mangle]
pub unsafe extern "C" fn fx_field_new(
    xs: *const f64,
    nx: usize,
    ys: *const f64,
    ny: usize,
    values: *const f64,
    out: *mut *mut FxField,
) -> FxStatus {
    guard(|| {
        let g = StructuredGrid::new(slice(xs, nx, "xs")?.to_vec(), slice(ys, ny, "ys")?.to_vec())?;
        let v = slice(values, nx * ny, "values")?.to_vec();
        let f = ScalarField::new(Arc::new(g), v)?;
        put(out, FxField(Arc::new(f)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn fx_field_read_fdf(path: *const c_char, out: *mut *mut FxField) -> FxStatus {
    guard(|| {
        let f = io::read_fdf(utf8_path(path)?)?;
        put(out, FxField(Arc::new(f)))
    })
}

/// Trapezoidal integral of the field over its grid.
#[no_mangle]
pub unsafe extern "C" fn fx_field_trapezoid(field: *const FxField, out: *mut f64) -> FxStatus {
    guard(|| {
        let f = handle(field, "field")?;
        let out = out.as_mut().ok_or_else(|| null("output"))?;
        *out = trapezoid_integral(&f.0);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fx_field_free(field: *mut FxField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Mesh from `2 * n_nodes` coordinates and `4 * n_elements` counter-clockwise
/// node indices.
#[no_mangle]
pub unsafe extern "C" fn fx_mesh_new(
    nodes: *const f64,
    n_nodes: usize,
    elements: *const usize,
    n_elements: usize,
    out: *mut *mut FxMesh,
) -> FxStatus {
    guard(|| {
        let xy = slice(nodes, 2 * n_nodes, "nodes")?;
        let conn = slice(elements, 4 * n_elements, "elements")?;
        let nodes = xy.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let elements = conn.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        put(out, FxMesh(QuadMesh::new(nodes, elements)?))
    })
}

/// Structured `nx × ny` element mesh of the rectangle.
#[no_mangle]
pub unsafe extern "C" fn fx_mesh_rectangle(
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    nx: usize,
    ny: usize,
    out: *mut *mut FxMesh,
) -> FxStatus {
    guard(|| put(out, FxMesh(QuadMesh::rectangle(x0, y0, x1, y1, nx, ny)?)))
}

#[no_mangle]
pub unsafe extern "C" fn fx_mesh_read_qm1(path: *const c_char, out: *mut *mut FxMesh) -> FxStatus {
    guard(|| put(out, FxMesh(io::read_qm1(utf8_path(path)?)?)))
}

/// Node count, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fx_mesh_n_nodes(mesh: *const FxMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.n_nodes())
}

#[no_mangle]
pub unsafe extern "C" fn fx_mesh_free(mesh: *mut FxMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

#[no_mangle]
pub unsafe extern "C" fn fx_interpolator_new(
    field: *const FxField,
    kind: FxReconstruction,
    degree: usize,
    out: *mut *mut FxInterpolator,
) -> FxStatus {
    guard(|| {
        let f = handle(field, "field")?;
        put(out, FxInterpolator(Interpolator::build(&f.0, reconstruction(kind, degree))?))
    })
}

/// Evaluates `n` points given as interleaved `x, y` pairs.
#[no_mangle]
pub unsafe extern "C" fn fx_interpolator_eval(
    interp: *const FxInterpolator,
    points: *const f64,
    n: usize,
    out: *mut f64,
) -> FxStatus {
    guard(|| {
        let it = handle(interp, "interpolator")?;
        let pts: Vec<[f64; 2]> = slice(points, 2 * n, "points")?.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let vals = it.0.evaluate_batch(&pts)?;
        if n > 0 && out.is_null() {
            return Err(null("output"));
        }
        ptr::copy_nonoverlapping(vals.as_ptr(), out, n);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fx_interpolator_free(interp: *mut FxInterpolator) {
    if !interp.is_null() {
        drop(Box::from_raw(interp));
    }
}

/// Gauss-quadrature load vector; `out` must hold `len == n_nodes` values.
/// `opts` may be null.
#[no_mangle]
pub unsafe extern "C" fn fx_assemble_quadrature(
    mesh: *const FxMesh,
    interp: *const FxInterpolator,
    n_gauss: usize,
    opts: *const FxExecOptions,
    out: *mut f64,
    len: usize,
) -> FxStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        let it = handle(interp, "interpolator")?;
        let b = assemble_quadrature_with(&m.0, &it.0, n_gauss, exec(opts))?;
        copy_out(b, out, len)
    })
}

/// Intersection cache of `mesh` against the grid of `field`.
#[no_mangle]
pub unsafe extern "C" fn fx_supermesh_new(
    mesh: *const FxMesh,
    field: *const FxField,
    out: *mut *mut FxSupermesh,
) -> FxStatus {
    guard(|| {
        let m = handle(mesh, "mesh")?;
        let f = handle(field, "field")?;
        put(out, FxSupermesh(build_supermesh(&m.0, f.0.grid_arc().clone())?))
    })
}

/// Number of intersection polygons in the cache, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn fx_supermesh_n_polygons(sm: *const FxSupermesh) -> usize {
    sm.as_ref().map_or(0, |s| s.0.n_polygons())
}

#[no_mangle]
pub unsafe extern "C" fn fx_supermesh_free(sm: *mut FxSupermesh) {
    if !sm.is_null() {
        drop(Box::from_raw(sm));
    }
}

/// Cut-cell load vector; `field` must live on the grid the cache was built
/// for. `opts` may be null.
#[no_mangle]
pub unsafe extern "C" fn fx_assemble_supermesh(
    sm: *const FxSupermesh,
    field: *const FxField,
    kind: FxReconstruction,
    degree: usize,
    opts: *const FxExecOptions,
    out: *mut f64,
    len: usize,
) -> FxStatus {
    guard(|| {
        let s = handle(sm, "supermesh")?;
        let f = handle(field, "field")?;
        let b = supermesh::assemble_supermesh_with(&s.0, &f.0, reconstruction(kind, degree), exec(opts))?;
        copy_out(b, out, len)
    })
}
