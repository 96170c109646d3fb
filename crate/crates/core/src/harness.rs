//! Automated studies: interpolation convergence, quadrature-order sweeps,
//! FEM h-refinement, weak scaling, and the method comparison table.
//!
//! Every error is measured against a named reference: the analytic integral
//! of a sine test field, or the trapezoidal integral of the sampled grid
//! data.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assemble::{
    assemble_quadrature_analytic_with, assemble_quadrature_with, gauss_points, RhsVector,
};
use crate::error::{Error, Result};
use crate::fem::QuadMesh;
use crate::grid::{trapezoid_integral, ScalarField, StructuredGrid};
use crate::interp::{Interpolator, Reconstruction};
use crate::parallel::ExecOptions;
use crate::sum::compensated_sum;
use crate::supermesh::{assemble_supermesh_with, build_supermesh_with};

/// Errors below this are treated as rounding floor and left out of fits.
pub const FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Domain {
    pub const UNIT: Domain = Domain { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
    /// Shear-layer window used for the surrogate comparisons.
    pub const SHEAR_LAYER: Domain = Domain { x0: 20.0, x1: 150.0, y0: -15.0, y1: 15.0 };

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn grid(&self, nx: usize, ny: usize) -> Result<StructuredGrid> {
        StructuredGrid::uniform(self.x0, self.x1, nx, self.y0, self.y1, ny)
    }

    pub fn mesh(&self, nx: usize, ny: usize) -> Result<QuadMesh> {
        QuadMesh::rectangle(self.x0, self.y0, self.x1, self.y1, nx, ny)
    }

    /// Grid points per axis for spacing close to `h`.
    pub fn points_for_spacing(&self, h: f64) -> (usize, usize) {
        let n = |len: f64| ((len / h).round() as usize).max(1) + 1;
        (n(self.width()), n(self.height()))
    }
}

/// Synthetic stand-ins for flow source terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surrogate {
    /// `sin(0.2x) exp(-(y/5)²)`
    Smooth,
    /// `sin(2x) sin(2y) exp(-(y/5)²) (1 + ½ tanh(4y))`
    Oscillatory,
}

impl Surrogate {
    pub fn eval(self, x: f64, y: f64) -> f64 {
        let env = (-(y / 5.0).powi(2)).exp();
        match self {
            Surrogate::Smooth => (0.2 * x).sin() * env,
            Surrogate::Oscillatory => {
                (2.0 * x).sin() * (2.0 * y).sin() * env * (1.0 + 0.5 * (4.0 * y).tanh())
            }
        }
    }
}

impl std::str::FromStr for Surrogate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Surrogate::Smooth),
            "oscillatory" => Ok(Surrogate::Oscillatory),
            _ => Err(Error::Config(format!("unknown surrogate '{s}' (smooth | oscillatory)"))),
        }
    }
}

/// Source field of a study.
#[derive(Debug, Clone)]
pub enum FieldSpec {
    /// `sin(kx x) sin(ky y)`
    Sine { kx: f64, ky: f64 },
    Surrogate(Surrogate),
    /// Fixed grid data; studies cannot resample it.
    Grid(Arc<ScalarField>),
}

impl FieldSpec {
    /// Parses `4.5pi`, `2.5pi,4.5pi` or plain numbers as sine wavenumbers.
    pub fn parse_sine(spec: &str) -> Result<Self> {
        let parse = |t: &str| -> Result<f64> {
            let t = t.trim();
            let (num, scale) = match t.strip_suffix("pi") {
                Some(n) => (n, std::f64::consts::PI),
                None => (t, 1.0),
            };
            let v: f64 = if num.is_empty() { 1.0 } else {
                num.parse().map_err(|_| Error::Config(format!("bad wavenumber '{t}'")))?
            };
            Ok(v * scale)
        };
        match spec.split_once(',') {
            Some((a, b)) => Ok(FieldSpec::Sine { kx: parse(a)?, ky: parse(b)? }),
            None => {
                let k = parse(spec)?;
                Ok(FieldSpec::Sine { kx: k, ky: k })
            }
        }
    }

    /// `smooth`, `oscillatory`, or a sine wavenumber spec.
    pub fn parse_analytic(spec: &str) -> Result<Self> {
        match spec.parse::<Surrogate>() {
            Ok(s) => Ok(FieldSpec::Surrogate(s)),
            Err(_) => Self::parse_sine(spec),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            FieldSpec::Sine { kx, ky } => (kx * x).sin() * (ky * y).sin(),
            FieldSpec::Surrogate(s) => s.eval(x, y),
            FieldSpec::Grid(_) => f64::NAN,
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, FieldSpec::Grid(_))
    }

    /// Closed-form integral over `d`, when one exists.
    pub fn exact_integral(&self, d: &Domain) -> Option<f64> {
        match *self {
            FieldSpec::Sine { kx, ky } => {
                let ix = ((kx * d.x0).cos() - (kx * d.x1).cos()) / kx;
                let iy = ((ky * d.y0).cos() - (ky * d.y1).cos()) / ky;
                Some(ix * iy)
            }
            _ => None,
        }
    }

    /// Samples the field on an `nx × ny` grid over `d` (grid data is
    /// returned as is).
    pub fn sample(&self, d: &Domain, nx: usize, ny: usize) -> Result<Arc<ScalarField>> {
        match self {
            FieldSpec::Grid(f) => Ok(f.clone()),
            _ => {
                let g = Arc::new(d.grid(nx, ny)?);
                Ok(Arc::new(ScalarField::from_fn(g, |x, y| self.eval(x, y))?))
            }
        }
    }
}

/// A transfer method under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Cut-cell assembly with the given reconstruction.
    Supermesh(Reconstruction),
    /// Gauss quadrature with interpolated field values.
    Quadrature { recon: Reconstruction, n_gauss: usize },
    /// Gauss quadrature with the analytic source evaluated directly.
    AnalyticQuadrature { n_gauss: usize },
}

impl Method {
    pub fn id(&self) -> String {
        let r = |r: &Reconstruction| match r {
            Reconstruction::Bilinear => "bilinear".to_string(),
            Reconstruction::BSpline(p) => format!("bspline{p}"),
            Reconstruction::Lagrange(p) => format!("lagrange{p}"),
        };
        match self {
            Method::Supermesh(Reconstruction::Bilinear) => "supermesh".into(),
            Method::Supermesh(rec) => format!("supermesh_{}", r(rec)),
            Method::Quadrature { recon, n_gauss } => format!("{}_g{n_gauss}", r(recon)),
            Method::AnalyticQuadrature { n_gauss } => format!("analytic_g{n_gauss}"),
        }
    }

    pub fn is_supermesh(&self) -> bool {
        matches!(self, Method::Supermesh(_))
    }

    fn with_gauss(self, n: usize) -> Self {
        match self {
            Method::Quadrature { recon, .. } => Method::Quadrature { recon, n_gauss: n },
            Method::AnalyticQuadrature { .. } => Method::AnalyticQuadrature { n_gauss: n },
            m => m,
        }
    }
}

/// Parses `supermesh`, `supermesh:RECON`, `RECON@N` (quadrature with an
/// `N×N` rule) and `analytic@N`.
impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "supermesh" {
            return Ok(Method::Supermesh(Reconstruction::Bilinear));
        }
        if let Some(r) = s.strip_prefix("supermesh:") {
            return Ok(Method::Supermesh(r.parse()?));
        }
        let (lhs, n) = s
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("bad method '{s}' (supermesh[:RECON] | RECON@N | analytic@N)")))?;
        let n_gauss: usize = n.parse().map_err(|_| Error::Config(format!("bad Gauss order in '{s}'")))?;
        if lhs == "analytic" {
            Ok(Method::AnalyticQuadrature { n_gauss })
        } else {
            Ok(Method::Quadrature { recon: lhs.parse()?, n_gauss })
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Reference integral a study error is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Analytic,
    Trapezoidal,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub domain: Domain,
    pub field: FieldSpec,
    pub methods: Vec<Method>,
    /// Meaning depends on the study: grid spacing, Gauss order, mesh
    /// elements along x, or number of doublings.
    pub sweep: Vec<f64>,
    /// Grid points per axis for sampled fields.
    pub grid_points: (usize, usize),
    /// Fixed FEM mesh resolution.
    pub mesh_elems: (usize, usize),
    pub reference: Reference,
    pub repetitions: usize,
    /// Interior mesh nodes are jittered by this fraction of the element
    /// size (0 keeps the mesh structured).
    pub perturb: f64,
    pub seed: u64,
    pub exec: ExecOptions,
}

impl StudyConfig {
    fn base(domain: Domain, field: FieldSpec) -> Self {
        Self {
            domain,
            field,
            methods: Vec::new(),
            sweep: Vec::new(),
            grid_points: (201, 201),
            mesh_elems: (40, 40),
            reference: Reference::Trapezoidal,
            repetitions: 5,
            perturb: 0.0,
            seed: 0,
            exec: ExecOptions::serial(),
        }
    }

    /// B-spline degrees 1..=5 against ten log-spaced grid spacings from
    /// 2.5e-2 to 1.5e-3 on the unit square, measured on a 40×40 mesh with
    /// 3×3 Gauss points. Halving sequences would keep the Gauss points at
    /// the same few cell-relative positions and bias the fit.
    pub fn interp_convergence() -> Self {
        let mut c = Self::base(Domain::UNIT, FieldSpec::parse_sine("2.5pi").unwrap());
        c.methods = (1..=5)
            .map(|p| Method::Quadrature { recon: Reconstruction::BSpline(p), n_gauss: 3 })
            .collect();
        c.sweep = (0..10).map(|k| 2.5e-2 * (1.5e-3f64 / 2.5e-2).powf(k as f64 / 9.0)).collect();
        c.reference = Reference::Analytic;
        c.repetitions = 1;
        c
    }

    /// Gauss orders 1..=10 for `sin(4.5πx) sin(4.5πy)` on a 40×40 mesh.
    pub fn quadrature_sweep() -> Self {
        let mut c = Self::base(Domain::UNIT, FieldSpec::parse_sine("4.5pi").unwrap());
        c.methods = vec![Method::AnalyticQuadrature { n_gauss: 1 }];
        c.sweep = (1..=10).map(f64::from).collect();
        c.reference = Reference::Analytic;
        c
    }

    /// Gauss-order sweep of cubic and quintic B-spline quadrature on the
    /// shear-layer window with unit element size, against the trapezoidal
    /// integral of the sampled grid.
    pub fn fixed_resolution_sweep(surrogate: Surrogate) -> Self {
        let mut c = Self::base(Domain::SHEAR_LAYER, FieldSpec::Surrogate(surrogate));
        c.methods = vec![
            Method::Quadrature { recon: Reconstruction::BSpline(3), n_gauss: 1 },
            Method::Quadrature { recon: Reconstruction::BSpline(5), n_gauss: 1 },
        ];
        c.sweep = (1..=8).map(f64::from).collect();
        c.grid_points = (521, 121);
        c.mesh_elems = (130, 30);
        c
    }

    /// Supermesh against cubic and quintic B-spline quadrature on the
    /// shear-layer window.
    pub fn href(surrogate: Surrogate) -> Self {
        let mut c = Self::base(Domain::SHEAR_LAYER, FieldSpec::Surrogate(surrogate));
        c.methods = default_comparison_methods();
        c.sweep = vec![26.0, 52.0, 104.0, 208.0];
        c.grid_points = (521, 121);
        c
    }

    /// Five sizes (four doublings of the element count) from a 24×24 mesh
    /// on a grid with 1.5 cells per element and axis.
    pub fn weak_scaling() -> Self {
        let mut c = Self::base(Domain::UNIT, FieldSpec::parse_sine("2.5pi").unwrap());
        c.methods = vec![
            Method::Supermesh(Reconstruction::Bilinear),
            Method::Quadrature { recon: Reconstruction::BSpline(3), n_gauss: 3 },
        ];
        c.sweep = vec![4.0];
        c.mesh_elems = (24, 24);
        c.repetitions = 7;
        c
    }

    fn validate(&self, timing: bool) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::Config("sweep values are empty".into()));
        }
        if let Some(v) = self.sweep.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Config(format!("sweep value {v} must be positive")));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if timing && self.repetitions < 3 {
            return Err(Error::Config(format!(
                "timing studies need at least 3 repetitions, got {}",
                self.repetitions
            )));
        }
        if !(0.0..0.25).contains(&self.perturb) {
            return Err(Error::Config("perturbation must lie in [0, 0.25)".into()));
        }
        Ok(())
    }

    fn mesh(&self, nx: usize, ny: usize) -> Result<QuadMesh> {
        let m = self.domain.mesh(nx, ny)?;
        if self.perturb > 0.0 {
            perturb_interior_nodes(&m, nx, ny, self.perturb, self.seed)
        } else {
            Ok(m)
        }
    }
}

/// Supermesh (bilinear), cubic B-spline with 3×3 Gauss points, and quintic
/// B-spline with 4×4 Gauss points.
pub fn default_comparison_methods() -> Vec<Method> {
    vec![
        Method::Supermesh(Reconstruction::Bilinear),
        Method::Quadrature { recon: Reconstruction::BSpline(3), n_gauss: 3 },
        Method::Quadrature { recon: Reconstruction::BSpline(5), n_gauss: 4 },
    ]
}

/// Moves interior nodes of a structured rectangle mesh by up to `frac` of
/// the local element size; boundary nodes stay fixed.
pub fn perturb_interior_nodes(mesh: &QuadMesh, nx: usize, ny: usize, frac: f64, seed: u64) -> Result<QuadMesh> {
    let b = mesh.bounds();
    let (hx, hy) = (b.width() / nx as f64, b.height() / ny as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = mesh.nodes().to_vec();
    for j in 1..ny {
        for i in 1..nx {
            let n = &mut nodes[j * (nx + 1) + i];
            n[0] += frac * hx * rng.gen_range(-1.0..1.0);
            n[1] += frac * hy * rng.gen_range(-1.0..1.0);
        }
    }
    QuadMesh::new(nodes, mesh.elements().to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub sweep: f64,
    pub method: String,
    pub error: f64,
    pub time_s: f64,
    pub integral: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub study: String,
    pub threads: usize,
    pub rows: Vec<StudyRow>,
}

impl StudyResult {
    fn new(study: &str, exec: ExecOptions) -> Self {
        Self {
            study: study.into(),
            threads: exec.threads.unwrap_or_else(rayon::current_num_threads),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, sweep: f64, method: impl Into<String>, error: f64, time_s: f64, integral: f64) -> Result<()> {
        let method = method.into();
        if !(sweep.is_finite() && error.is_finite() && time_s.is_finite() && integral.is_finite()) || error < 0.0 {
            return Err(Error::Config(format!(
                "non-finite result for {method} at sweep {sweep}: error {error}, integral {integral}"
            )));
        }
        self.rows.push(StudyRow { sweep, method, error, time_s, integral });
        Ok(())
    }

    /// Distinct method ids in first-appearance order.
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a StudyRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Least-squares slope of `log(error)` against `log(sweep)` per method,
    /// skipping floor-level errors. Methods with fewer than two usable
    /// points are omitted.
    pub fn error_slopes(&self) -> Vec<(String, f64)> {
        self.slopes(|r| r.error)
    }

    /// Same fit for wall time.
    pub fn time_slopes(&self) -> Vec<(String, f64)> {
        self.slopes(|r| r.time_s)
    }

    fn slopes(&self, value: impl Fn(&StudyRow) -> f64) -> Vec<(String, f64)> {
        self.methods()
            .into_iter()
            .filter_map(|m| {
                let pts: Vec<(f64, f64)> = self
                    .rows_for(&m)
                    .filter(|r| value(r) > FLOOR)
                    .map(|r| (r.sweep, value(r)))
                    .collect();
                loglog_slope(&pts).map(|s| (m, s))
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sweep,method,error,time_s,integral\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:e},{:e},{:.16e}", r.sweep, r.method, r.error, r.time_s, r.integral);
        }
        s
    }

    pub fn from_csv(study: &str, text: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: study.into(), line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "sweep,method,error,time_s,integral" => {}
            _ => return Err(perr(1, "missing CSV header sweep,method,error,time_s,integral".into())),
        }
        let mut out = StudyResult { study: study.into(), threads: 1, rows: Vec::new() };
        for (k, l) in lines {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 5 {
                return Err(perr(k + 1, format!("expected 5 columns, found {}", cols.len())));
            }
            let num = |c: &str| c.trim().parse::<f64>().map_err(|_| perr(k + 1, format!("bad number '{c}'")));
            out.rows.push(StudyRow {
                sweep: num(cols[0])?,
                method: cols[1].trim().into(),
                error: num(cols[2])?,
                time_s: num(cols[3])?,
                integral: num(cols[4])?,
            });
        }
        Ok(out)
    }

    /// Gnuplot data: one block per method, separated by two blank lines.
    pub fn to_dat(&self) -> String {
        let mut s = format!("# {} (threads={})\n", self.study, self.threads);
        for (k, m) in self.methods().iter().enumerate() {
            if k > 0 {
                s.push_str("\n\n");
            }
            let _ = writeln!(s, "# method {m}\n# sweep error time_s integral");
            for r in self.rows_for(m) {
                let _ = writeln!(s, "{} {:e} {:e} {:.16e}", r.sweep, r.error, r.time_s, r.integral);
            }
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv())
    }

    pub fn write_dat(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_dat())
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Least-squares slope through `(log x, log y)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn relative_error(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        value.abs()
    } else {
        ((value - reference) / reference).abs()
    }
}

/// Median wall time of `reps` runs after one warm-up run, plus the last
/// result.
pub fn time_median<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut out = f()?;
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let t0 = Instant::now();
        out = f()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((times[times.len() / 2], out))
}

fn reference_integral(cfg: &StudyConfig, field: &ScalarField) -> Result<f64> {
    match cfg.reference {
        Reference::Trapezoidal => Ok(trapezoid_integral(field)),
        Reference::Analytic => cfg.field.exact_integral(&cfg.domain).ok_or_else(|| {
            Error::Config("analytic reference requested for a field without a closed-form integral".into())
        }),
    }
}

fn reconstruction_of(m: &Method) -> Result<Reconstruction> {
    match m {
        Method::Quadrature { recon, .. } | Method::Supermesh(recon) => Ok(*recon),
        Method::AnalyticQuadrature { .. } => Err(Error::Config(
            "this study needs a reconstruction, not analytic evaluation".into(),
        )),
    }
}

/// Relative L2 interpolation error on the Gauss points of the fixed mesh,
/// per grid spacing and reconstruction. Spacings are rounded to whole cell
/// counts and the realised x spacing is reported. The `integral` column
/// holds the quadrature integral of the reconstruction.
pub fn run_interp_convergence(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate(false)?;
    if !cfg.field.is_analytic() {
        return Err(Error::Config("interpolation convergence needs an analytic field".into()));
    }
    let mesh = cfg.mesh(cfg.mesh_elems.0, cfg.mesh_elems.1)?;
    let gp = gauss_points(&mesh, 3, cfg.exec)?;
    let q = gp.per_element;
    let w: Vec<f64> = (0..gp.points.len()).map(|k| gp.weights[k % q] * gp.det_j[k]).collect();
    let exact: Vec<f64> = gp.points.iter().map(|p| cfg.field.eval(p[0], p[1])).collect();
    let norm = compensated_sum(w.iter().zip(&exact).map(|(w, f)| w * f * f)).sqrt();

    let mut res = StudyResult::new("interp-convergence", cfg.exec);
    for &h in &cfg.sweep {
        let (nx, ny) = cfg.domain.points_for_spacing(h);
        let field = cfg.field.sample(&cfg.domain, nx, ny)?;
        let h = cfg.domain.width() / (nx - 1) as f64;
        for m in &cfg.methods {
            let recon = reconstruction_of(m)?;
            let t0 = Instant::now();
            let it = Interpolator::build(&field, recon)?;
            let vals = it.evaluate_batch_with(&gp.points, cfg.exec)?;
            let dt = t0.elapsed().as_secs_f64();
            let err2 = compensated_sum(w.iter().zip(vals.iter().zip(&exact)).map(|(w, (a, b))| w * (a - b).powi(2)));
            let integral = compensated_sum(w.iter().zip(&vals).map(|(w, v)| w * v));
            res.push(h, recon_id(recon), err2.sqrt() / norm, dt, integral)?;
        }
    }
    Ok(res)
}

fn recon_id(r: Reconstruction) -> String {
    match r {
        Reconstruction::Bilinear => "bilinear".into(),
        Reconstruction::BSpline(p) => format!("bspline{p}"),
        Reconstruction::Lagrange(p) => format!("lagrange{p}"),
    }
}

/// Total-integral error against Gauss order. Each method's `n_gauss` is
/// replaced by the sweep value; supermesh methods are evaluated once per
/// sweep value as a flat reference line.
pub fn run_quadrature_sweep(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate(true)?;
    let (ex, ey) = cfg.mesh_elems;
    let mesh = cfg.mesh(ex, ey)?;
    let needs_grid = cfg.methods.iter().any(|m| !matches!(m, Method::AnalyticQuadrature { .. }));
    let field = if needs_grid || !cfg.field.is_analytic() {
        Some(cfg.field.sample(&cfg.domain, cfg.grid_points.0, cfg.grid_points.1)?)
    } else {
        None
    };
    let reference = match &field {
        Some(f) => reference_integral(cfg, f)?,
        None => cfg
            .field
            .exact_integral(&cfg.domain)
            .ok_or_else(|| Error::Config("analytic field without closed-form integral".into()))?,
    };
    let mut res = StudyResult::new("quad-sweep", cfg.exec);
    let mut interps: Vec<(Reconstruction, Interpolator)> = Vec::new();
    let mut smesh = None;
    for &ng in &cfg.sweep {
        let n_gauss = ng.round() as usize;
        for m in &cfg.methods {
            let m = m.with_gauss(n_gauss);
            let (t, b) = match m {
                Method::AnalyticQuadrature { n_gauss } => {
                    let fs = &cfg.field;
                    time_median(cfg.repetitions, || {
                        assemble_quadrature_analytic_with(&mesh, |x, y| fs.eval(x, y), n_gauss, cfg.exec)
                    })?
                }
                Method::Quadrature { recon, n_gauss } => {
                    let f = field.as_ref().expect("grid field sampled");
                    if !interps.iter().any(|(r, _)| *r == recon) {
                        interps.push((recon, Interpolator::build(f, recon)?));
                    }
                    let it = &interps.iter().find(|(r, _)| *r == recon).unwrap().1;
                    time_median(cfg.repetitions, || assemble_quadrature_with(&mesh, it, n_gauss, cfg.exec))?
                }
                Method::Supermesh(recon) => {
                    let f = field.as_ref().expect("grid field sampled");
                    if smesh.is_none() {
                        smesh = Some(build_supermesh_with(&mesh, f.grid_arc().clone(), cfg.exec)?);
                    }
                    let cache = smesh.as_ref().unwrap();
                    time_median(cfg.repetitions, || assemble_supermesh_with(cache, f, recon, cfg.exec))?
                }
            };
            let total = b.total();
            res.push(ng, m.id_without_gauss(), relative_error(total, reference), t, total)?;
        }
    }
    Ok(res)
}

impl Method {
    fn id_without_gauss(&self) -> String {
        match self {
            Method::Quadrature { recon, .. } => recon_id(*recon),
            Method::AnalyticQuadrature { .. } => "analytic".into(),
            m => m.id(),
        }
    }
}

/// Runs `method` once on `mesh`; returns (setup seconds, median execution
/// seconds, load vector).
fn run_method(
    cfg: &StudyConfig,
    method: &Method,
    mesh: &QuadMesh,
    field: &Arc<ScalarField>,
) -> Result<(f64, f64, RhsVector)> {
    match *method {
        Method::Supermesh(recon) => {
            let t0 = Instant::now();
            let cache = build_supermesh_with(mesh, field.grid_arc().clone(), cfg.exec)?;
            let setup = t0.elapsed().as_secs_f64();
            let (t, b) = time_median(cfg.repetitions, || assemble_supermesh_with(&cache, field, recon, cfg.exec))?;
            Ok((setup, t, b))
        }
        Method::Quadrature { recon, n_gauss } => {
            let t0 = Instant::now();
            let it = Interpolator::build(field, recon)?;
            let setup = t0.elapsed().as_secs_f64();
            let (t, b) = time_median(cfg.repetitions, || assemble_quadrature_with(mesh, &it, n_gauss, cfg.exec))?;
            Ok((setup, t, b))
        }
        Method::AnalyticQuadrature { n_gauss } => {
            let fs = &cfg.field;
            let (t, b) = time_median(cfg.repetitions, || {
                assemble_quadrature_analytic_with(mesh, |x, y| fs.eval(x, y), n_gauss, cfg.exec)
            })?;
            Ok((0.0, t, b))
        }
    }
}

/// Mesh refinement at a fixed grid. Sweep values are element counts along
/// x; the y count keeps the elements square. Setup times are reported as
/// separate `<method>:setup` rows.
pub fn run_href_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate(true)?;
    let field = cfg.field.sample(&cfg.domain, cfg.grid_points.0, cfg.grid_points.1)?;
    let reference = reference_integral(cfg, &field)?;
    let mut res = StudyResult::new("href", cfg.exec);
    for &nx in &cfg.sweep {
        let nx_e = nx.round() as usize;
        let ny_e = ((nx_e as f64 * cfg.domain.height() / cfg.domain.width()).round() as usize).max(1);
        let mesh = cfg.mesh(nx_e, ny_e)?;
        for m in &cfg.methods {
            let (setup, t, b) = run_method(cfg, m, &mesh, &field)?;
            let total = b.total();
            let err = relative_error(total, reference);
            res.push(nx, m.id(), err, t, total)?;
            res.push(nx, format!("{}:setup", m.id()), err, setup, total)?;
        }
    }
    Ok(res)
}

/// Grid cells per mesh element and axis in the weak-scaling study.
pub const WEAK_SCALING_GRID_RATIO: f64 = 1.5;

/// Doubles the element count `sweep[0]` times starting from `mesh_elems`,
/// alternating the axis, and grows the grid in proportion. Rows are keyed
/// by element count; execution phases only, setup in `:setup` rows.
pub fn run_weak_scaling(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate(true)?;
    let doublings = cfg.sweep[0].round() as usize;
    let mut res = StudyResult::new("weak-scaling", cfg.exec);
    let (mut nx, mut ny) = cfg.mesh_elems;
    for step in 0..=doublings {
        if step > 0 {
            if step % 2 == 1 {
                nx *= 2;
            } else {
                ny *= 2;
            }
        }
        let mesh = cfg.mesh(nx, ny)?;
        let gx = (nx as f64 * WEAK_SCALING_GRID_RATIO).round() as usize + 1;
        let gy = (ny as f64 * WEAK_SCALING_GRID_RATIO).round() as usize + 1;
        let field = cfg.field.sample(&cfg.domain, gx, gy)?;
        let reference = trapezoid_integral(&field);
        let n_e = mesh.n_elements() as f64;
        for m in &cfg.methods {
            let (setup, t, b) = run_method(cfg, m, &mesh, &field)?;
            let total = b.total();
            let err = relative_error(total, reference);
            res.push(n_e, m.id(), err, t, total)?;
            res.push(n_e, format!("{}:setup", m.id()), err, setup, total)?;
        }
    }
    Ok(res)
}

/// Inputs of [`emit_table1`]; any subset may be present.
#[derive(Debug, Default, Clone, Copy)]
pub struct Table1Inputs<'a> {
    pub href: Option<&'a StudyResult>,
    pub weak_scaling: Option<&'a StudyResult>,
}

fn is_setup(m: &str) -> bool {
    m.ends_with(":setup")
}

/// Markdown comparison of supermesh and interpolation-based methods built
/// from measured results.
pub fn emit_table1(inputs: &Table1Inputs<'_>) -> Result<String> {
    let href = inputs.href.filter(|r| !r.rows.is_empty());
    let scaling = inputs.weak_scaling.filter(|r| !r.rows.is_empty());
    if href.is_none() && scaling.is_none() {
        return Err(Error::EmptyResults);
    }
    let na = || "n/a".to_string();
    let split = |r: &StudyResult| -> (Vec<String>, Vec<String>) {
        r.methods()
            .into_iter()
            .filter(|m| !is_setup(m))
            .partition(|m| m.starts_with("supermesh"))
    };
    let mut conservation = (na(), na());
    let mut refinement = (na(), na());
    if let Some(r) = href {
        let (sm, other) = split(r);
        let max_err = |ms: &[String]| {
            ms.iter()
                .flat_map(|m| r.rows_for(m))
                .map(|row| row.error)
                .fold(f64::NAN, f64::max)
        };
        if !sm.is_empty() {
            let e = max_err(&sm);
            conservation.0 = if e < FLOOR {
                format!("Machine precision (max {e:.1e})")
            } else {
                format!("max {e:.1e}")
            };
            refinement.0 = if e < FLOOR {
                "Exact at all scales".into()
            } else {
                format!("Varies with h (max {e:.1e})")
            };
        }
        if !other.is_empty() {
            let lo = other
                .iter()
                .flat_map(|m| r.rows_for(m))
                .map(|row| row.error)
                .fold(f64::INFINITY, f64::min);
            conservation.1 = format!("Interpolation/Quadrature limited ({lo:.1e} to {:.1e})", max_err(&other));
            let floors: Vec<String> = other
                .iter()
                .filter_map(|m| {
                    r.rows_for(m)
                        .max_by(|a, b| a.sweep.partial_cmp(&b.sweep).unwrap())
                        .map(|row| format!("{m} {:.1e}", row.error))
                })
                .collect();
            refinement.1 = format!("Systematic error floor ({})", floors.join(", "));
        }
    }
    let mut scaling_row = (na(), na());
    if let Some(r) = scaling {
        let slopes: Vec<(String, f64)> = r.time_slopes().into_iter().filter(|(m, _)| !is_setup(m)).collect();
        let fmt = |sel: &dyn Fn(&str) -> bool| {
            let s: Vec<String> = slopes
                .iter()
                .filter(|(m, _)| sel(m))
                .map(|(m, s)| {
                    let kind = if (0.75..=1.25).contains(s) { "Linear (Weak)" } else { "Nonlinear" };
                    format!("{kind}, {m} slope {s:.2}")
                })
                .collect();
            if s.is_empty() { na() } else { s.join("; ") }
        };
        scaling_row = (fmt(&|m| m.starts_with("supermesh")), fmt(&|m| !m.starts_with("supermesh")));
    }
    let mut s = String::from("| | Supermesh | B-Spline |\n|---|---|---|\n");
    for (name, (a, b)) in [
        ("Conservation Error", conservation),
        ("Target h-Refinement", refinement),
        ("Scaling", scaling_row),
    ] {
        let _ = writeln!(s, "| {name} | {a} | {b} |");
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{shape_functions, RefPoint};

    #[test]
    fn sine_spec_parsing() {
        match FieldSpec::parse_sine("4.5pi").unwrap() {
            FieldSpec::Sine { kx, ky } => {
                assert_eq!(kx, 4.5 * std::f64::consts::PI);
                assert_eq!(ky, kx);
            }
            _ => unreachable!(),
        }
        match FieldSpec::parse_sine("2, pi").unwrap() {
            FieldSpec::Sine { kx, ky } => assert_eq!((kx, ky), (2.0, std::f64::consts::PI)),
            _ => unreachable!(),
        }
        assert!(FieldSpec::parse_sine("fourpi").is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("supermesh".parse::<Method>().unwrap(), Method::Supermesh(Reconstruction::Bilinear));
        assert_eq!(
            "supermesh:bspline:3".parse::<Method>().unwrap(),
            Method::Supermesh(Reconstruction::BSpline(3))
        );
        assert_eq!(
            "lagrange:3@4".parse::<Method>().unwrap(),
            Method::Quadrature { recon: Reconstruction::Lagrange(3), n_gauss: 4 }
        );
        assert_eq!("analytic@5".parse::<Method>().unwrap(), Method::AnalyticQuadrature { n_gauss: 5 });
        assert!("bspline:3".parse::<Method>().is_err());
        assert!(matches!(FieldSpec::parse_analytic("smooth").unwrap(), FieldSpec::Surrogate(Surrogate::Smooth)));
    }

    #[test]
    fn exact_sine_integral() {
        let f = FieldSpec::parse_sine("4.5pi").unwrap();
        let v = f.exact_integral(&Domain::UNIT).unwrap();
        assert!((v - 0.00500352).abs() < 1e-8);
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h: &f64| (h, 3.0 * h.powi(4))).collect();
        assert!((loglog_slope(&pts).unwrap() - 4.0).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_none());
    }

    #[test]
    fn midpoint_equals_one_point_gauss() {
        let mut cfg = StudyConfig::quadrature_sweep();
        cfg.sweep = vec![1.0];
        cfg.repetitions = 3;
        cfg.mesh_elems = (12, 9);
        let res = run_quadrature_sweep(&cfg).unwrap();
        let mesh = cfg.domain.mesh(12, 9).unwrap();
        let mut direct = 0.0;
        for e in 0..mesh.n_elements() {
            let c = RefPoint::default();
            let x = mesh.forward_map(e, c);
            let _ = shape_functions(c);
            direct += cfg.field.eval(x[0], x[1]) * mesh.element_area(e);
        }
        let got = res.rows[0].integral;
        assert!(((got - direct) / direct).abs() < 1e-14, "{got} vs {direct}");
    }

    #[test]
    fn interp_convergence_reproduces_nodes() {
        // evaluating at the grid nodes themselves: mesh = grid
        let mut cfg = StudyConfig::interp_convergence();
        cfg.sweep = vec![0.05];
        let (nx, ny) = cfg.domain.points_for_spacing(0.05);
        let field = cfg.field.sample(&cfg.domain, nx, ny).unwrap();
        for p in 1..=5 {
            let it = Interpolator::build(&field, Reconstruction::BSpline(p)).unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for (j, &y) in field.grid().ys().iter().enumerate() {
                for (i, &x) in field.grid().xs().iter().enumerate() {
                    num += (it.evaluate(x, y).unwrap() - field.at(i, j)).powi(2);
                    den += field.at(i, j).powi(2);
                }
            }
            assert!((num / den).sqrt() < 1e-12);
        }
    }

    /// Reference values from FITPACK tensor-product interpolation (s = 0)
    /// of the same samples, measured on the same Gauss points.
    #[test]
    fn interp_errors_match_fitpack() {
        let mut cfg = StudyConfig::interp_convergence();
        cfg.sweep = vec![1.0 / 40.0, 1.0 / 75.0];
        let r = run_interp_convergence(&cfg).unwrap();
        let expect = [
            ("bspline1", 6.720e-3, 1.921e-3),
            ("bspline2", 8.813e-5, 1.177e-5),
            ("bspline3", 1.048e-5, 6.101e-7),
            ("bspline4", 1.241e-6, 3.672e-8),
            ("bspline5", 1.725e-7, 2.826e-9),
        ];
        for (m, a, b) in expect {
            let got: Vec<f64> = r.rows_for(m).map(|row| row.error).collect();
            assert!(((got[0] - a) / a).abs() < 1e-3, "{m}: {} vs {a}", got[0]);
            assert!(((got[1] - b) / b).abs() < 1e-3, "{m}: {} vs {b}", got[1]);
        }
    }

    #[test]
    fn fixed_resolution_sweep_plateaus() {
        let mut cfg = StudyConfig::fixed_resolution_sweep(Surrogate::Smooth);
        cfg.sweep = vec![1.0, 4.0, 8.0];
        cfg.repetitions = 3;
        let r = run_quadrature_sweep(&cfg).unwrap();
        for m in ["bspline3", "bspline5"] {
            let e: Vec<f64> = r.rows_for(m).map(|row| row.error).collect();
            assert!(e[1] < e[0], "{m}: {e:?}");
            // at high order the reconstruction, not the rule, limits accuracy
            assert!(e[2] > 1e-9 && (e[2] / e[1]) > 0.1, "{m}: {e:?}");
        }
    }

    #[test]
    fn interp_convergence_rejects_coarse_grid() {
        let mut cfg = StudyConfig::interp_convergence();
        cfg.sweep = vec![0.5];
        assert!(matches!(run_interp_convergence(&cfg), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn config_validation() {
        let mut cfg = StudyConfig::href(Surrogate::Smooth);
        cfg.sweep = vec![];
        assert!(run_href_study(&cfg).is_err());
        let mut cfg = StudyConfig::weak_scaling();
        cfg.repetitions = 2;
        assert!(run_weak_scaling(&cfg).is_err());
        let mut cfg = StudyConfig::href(Surrogate::Smooth);
        cfg.sweep = vec![-1.0];
        assert!(run_href_study(&cfg).is_err());
    }

    #[test]
    fn gauss_point_count_scales_with_elements() {
        for (nx, ny) in [(10, 10), (20, 10), (20, 20)] {
            let m = Domain::UNIT.mesh(nx, ny).unwrap();
            for ng in [2, 3, 4] {
                let gp = gauss_points(&m, ng, ExecOptions::serial()).unwrap();
                assert_eq!(gp.points.len(), nx * ny * ng * ng);
            }
        }
    }

    #[test]
    fn small_href_has_conservative_supermesh() {
        let mut cfg = StudyConfig::href(Surrogate::Oscillatory);
        cfg.sweep = vec![13.0, 26.0];
        cfg.grid_points = (131, 31);
        cfg.repetitions = 3;
        cfg.perturb = 0.2;
        cfg.seed = 9;
        let r = run_href_study(&cfg).unwrap();
        for row in r.rows_for("supermesh") {
            assert!(row.error < 1e-12, "{row:?}");
        }
        for row in r.rows_for("bspline3_g3") {
            assert!(row.error > 1e-8);
        }
    }

    #[test]
    fn csv_roundtrip_and_dat() {
        let mut r = StudyResult::new("t", ExecOptions::serial());
        r.push(1.0, "supermesh", 1e-15, 0.01, 0.25).unwrap();
        r.push(2.0, "bspline3_g3", 1e-4, 0.02, 0.2500001).unwrap();
        let back = StudyResult::from_csv("t", &r.to_csv()).unwrap();
        assert_eq!(back.rows, r.rows);
        let dat = r.to_dat();
        assert!(dat.contains("# method supermesh") && dat.contains("\n\n\n# method bspline3_g3"));
        assert!(r.push(1.0, "x", f64::NAN, 0.0, 0.0).is_err());
        assert!(StudyResult::from_csv("t", "a,b\n").is_err());
    }

    #[test]
    fn table1_variants() {
        assert!(matches!(emit_table1(&Table1Inputs::default()), Err(Error::EmptyResults)));
        let mut href = StudyResult::new("href", ExecOptions::serial());
        href.push(10.0, "supermesh", 2e-15, 0.1, 1.0).unwrap();
        href.push(20.0, "supermesh", 3e-15, 0.1, 1.0).unwrap();
        href.push(10.0, "supermesh:setup", 3e-15, 0.5, 1.0).unwrap();
        href.push(10.0, "bspline3_g3", 2e-4, 0.1, 1.0).unwrap();
        href.push(20.0, "bspline3_g3", 1e-4, 0.1, 1.0).unwrap();
        let t = emit_table1(&Table1Inputs { href: Some(&href), weak_scaling: None }).unwrap();
        assert!(t.contains("| Conservation Error | Machine precision"));
        assert!(t.contains("Exact at all scales"));
        assert!(t.contains("bspline3_g3 1.0e-4"));
        assert!(t.contains("| Scaling | n/a | n/a |"));

        let mut ws = StudyResult::new("ws", ExecOptions::serial());
        for (n, t) in [(100.0, 0.01), (200.0, 0.02), (400.0, 0.041)] {
            ws.push(n, "supermesh", 0.0, t, 1.0).unwrap();
        }
        let t = emit_table1(&Table1Inputs { href: None, weak_scaling: Some(&ws) }).unwrap();
        assert!(t.contains("Linear (Weak), supermesh slope"));
        assert!(t.contains("| Conservation Error | n/a | n/a |"));
    }
}
