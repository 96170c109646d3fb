//! Command-line front end.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::assemble::{assemble_quadrature_analytic_with, assemble_quadrature_with};
use crate::error::{Error, Result};
use crate::fem::QuadMesh;
use crate::grid::{trapezoid_integral, ScalarField};
use crate::harness::{
    self, emit_table1, perturb_interior_nodes, relative_error, Domain, FieldSpec, Method, Reference,
    StudyConfig, StudyResult, Surrogate, Table1Inputs,
};
use crate::interp::{Interpolator, Reconstruction};
use crate::io;
use crate::parallel::ExecOptions;
use crate::supermesh::{assemble_supermesh_with, build_supermesh_with};

#[derive(Debug, Parser)]
#[command(name = "fieldxfer", version, about = "Grid-to-mesh field transfer by quadrature or supermesh assembly")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble the load vector of a grid field on a quadrilateral mesh.
    Transfer(TransferArgs),
    /// Run one of the convergence or performance studies.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Write a structured rectangle mesh.
    Genmesh(GenmeshArgs),
    /// Sample an analytic field on a uniform grid.
    Genfield(GenfieldArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransferMethod {
    Supermesh,
    Quad,
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Worker threads (default: all cores).
    #[arg(long, env = "FIELDXFER_THREADS")]
    pub threads: Option<usize>,
    /// Reduce in element order so results do not depend on the thread count.
    #[arg(long)]
    pub deterministic: bool,
}

impl ExecArgs {
    fn options(&self) -> Result<ExecOptions> {
        if self.threads == Some(0) {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        Ok(ExecOptions { threads: self.threads, deterministic: self.deterministic })
    }
}

#[derive(Debug, Args)]
#[group(id = "mesh_source", required = true, multiple = false)]
pub struct MeshSource {
    /// QM1 mesh file.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Generate a rectangle mesh instead (requires --mesh-elems).
    #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"], allow_negative_numbers = true, requires = "mesh_elems")]
    pub mesh_rect: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long, value_enum)]
    pub method: TransferMethod,
    /// FDF grid field file.
    #[arg(long, group = "field_source")]
    pub field: Option<PathBuf>,
    /// Analytic source: `smooth`, `oscillatory` or a sine spec like `2.5pi`.
    #[arg(long, group = "field_source")]
    pub analytic: Option<String>,
    #[command(flatten)]
    pub mesh: MeshSource,
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    pub mesh_elems: Option<Vec<usize>>,
    /// Grid points used to sample an analytic source, over the mesh bounds.
    #[arg(long, num_args = 2, value_names = ["NX", "NY"], default_values_t = [201, 201])]
    pub grid_points: Vec<usize>,
    /// Reconstruction for quadrature assembly; an analytic source without
    /// it is evaluated exactly at the Gauss points.
    #[arg(long)]
    pub interp: Option<Reconstruction>,
    #[arg(long, default_value_t = 3)]
    pub gauss: usize,
    /// Reconstruction used inside the supermesh pieces.
    #[arg(long, default_value = "bilinear")]
    pub reconstruction: Reconstruction,
    /// RHS output file.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Write the intersection polygons, one per line.
    #[arg(long)]
    pub soup: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Subcommand)]
pub enum StudyCommand {
    /// Interpolation error against grid spacing.
    InterpConvergence(StudyArgs),
    /// Integral error against Gauss order (analytic sine by default; with
    /// --surrogate, B-spline quadrature at unit element size).
    QuadSweep(StudyArgs),
    /// Mesh refinement at a fixed grid.
    Href(StudyArgs),
    /// Execution time against element count.
    WeakScaling(StudyArgs),
    /// Comparison table from previous study CSVs.
    Table1(Table1Args),
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, num_args = 4, value_names = ["X0", "X1", "Y0", "Y1"], allow_negative_numbers = true)]
    pub domain: Option<Vec<f64>>,
    /// Analytic source: sine spec like `4.5pi` or a surrogate name.
    #[arg(long, group = "study_field")]
    pub analytic: Option<String>,
    #[arg(long, value_parser = parse_surrogate, group = "study_field")]
    pub surrogate: Option<Surrogate>,
    /// FDF grid field; fixes the domain and grid.
    #[arg(long, group = "study_field")]
    pub field: Option<PathBuf>,
    /// Comma-separated methods: supermesh[:RECON], RECON@N, analytic@N.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    pub mesh_elems: Option<Vec<usize>>,
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    pub grid_points: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub reference: Option<RefArg>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Jitter interior mesh nodes by this fraction of the element size.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; a gnuplot `.dat` file is written alongside.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefArg {
    Analytic,
    Trapezoidal,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    #[arg(long, default_value = "href.csv")]
    pub href: PathBuf,
    #[arg(long, default_value = "weak-scaling.csv")]
    pub weak_scaling: PathBuf,
    /// Markdown output (default: standard output).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenmeshArgs {
    #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"], allow_negative_numbers = true, default_values_t = [0.0, 0.0, 1.0, 1.0])]
    pub rect: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    pub elems: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub perturb: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenfieldArgs {
    #[arg(long)]
    pub analytic: String,
    #[arg(long, num_args = 4, value_names = ["X0", "X1", "Y0", "Y1"], allow_negative_numbers = true, default_values_t = [0.0, 1.0, 0.0, 1.0])]
    pub domain: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    pub points: Vec<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn parse_surrogate(s: &str) -> std::result::Result<Surrogate, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses the process arguments and runs the selected command.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fieldxfer: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        1
    } else {
        2
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Transfer(a) => cmd_transfer(&a, out),
        Command::Study(s) => cmd_study(s, out),
        Command::Genmesh(a) => cmd_genmesh(&a, out),
        Command::Genfield(a) => cmd_genfield(&a, out),
    }
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|source| Error::Io { path: "<stdout>".into(), source })
}

fn pair(v: &[usize], what: &str) -> Result<(usize, usize)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::Config(format!("{what} needs two values"))),
    }
}

fn load_mesh(src: &MeshSource, elems: Option<&Vec<usize>>) -> Result<QuadMesh> {
    match (&src.mesh, &src.mesh_rect) {
        (Some(p), _) => io::read_qm1(p),
        (None, Some(r)) => {
            let (nx, ny) = pair(elems.ok_or_else(|| Error::Config("--mesh-rect needs --mesh-elems".into()))?, "--mesh-elems")?;
            QuadMesh::rectangle(r[0], r[1], r[2], r[3], nx, ny)
        }
        (None, None) => Err(Error::Config("give --mesh or --mesh-rect".into())),
    }
}

pub fn cmd_transfer(a: &TransferArgs, out: &mut dyn Write) -> Result<()> {
    let opts = a.exec.options()?;
    let mesh = load_mesh(&a.mesh, a.mesh_elems.as_ref())?;
    let analytic = a.analytic.as_deref().map(FieldSpec::parse_analytic).transpose()?;
    let field: Option<Arc<ScalarField>> = match (&a.field, &analytic) {
        (Some(p), _) => Some(Arc::new(io::read_fdf(p)?)),
        (None, Some(spec)) if a.method == TransferMethod::Supermesh || a.interp.is_some() => {
            let b = mesh.bounds();
            let (nx, ny) = pair(&a.grid_points, "--grid-points")?;
            let d = Domain { x0: b.min[0], x1: b.max[0], y0: b.min[1], y1: b.max[1] };
            Some(spec.sample(&d, nx, ny)?)
        }
        (None, Some(_)) => None,
        (None, None) => return Err(Error::Config("give --field or --analytic".into())),
    };

    let rhs = match a.method {
        TransferMethod::Supermesh => {
            let f = field.as_ref().expect("grid field for supermesh");
            let cache = build_supermesh_with(&mesh, f.grid_arc().clone(), opts)?;
            for (e, frac) in cache.partially_covered() {
                eprintln!("warning: element {e} lies {:.1}% outside the grid", 100.0 * frac);
            }
            if let Some(p) = &a.soup {
                std::fs::write(p, cache.polygon_soup()).map_err(|source| Error::Io { path: p.clone(), source })?;
            }
            assemble_supermesh_with(&cache, f, a.reconstruction, opts)?
        }
        TransferMethod::Quad => match &field {
            Some(f) => {
                let it = Interpolator::build(f, a.interp.unwrap_or(Reconstruction::BSpline(3)))?;
                assemble_quadrature_with(&mesh, &it, a.gauss, opts)?
            }
            None => {
                let spec = analytic.as_ref().expect("analytic source");
                assemble_quadrature_analytic_with(&mesh, |x, y| spec.eval(x, y), a.gauss, opts)?
            }
        },
    };

    if let Some(p) = &a.output {
        io::write_rhs(p, &rhs)?;
    }
    let total = rhs.total();
    say(out, format_args!("nodes = {}", rhs.len()))?;
    say(out, format_args!("sum_b = {total:.16e}"))?;
    if let Some(f) = &field {
        let t = trapezoid_integral(f);
        say(out, format_args!("trapezoid = {t:.16e}"))?;
        say(out, format_args!("conservation_rel_err = {:.3e}", relative_error(total, t)))?;
    }
    if let Some(exact) = analytic.as_ref().and_then(|s| {
        let b = mesh.bounds();
        s.exact_integral(&Domain { x0: b.min[0], x1: b.max[0], y0: b.min[1], y1: b.max[1] })
    }) {
        say(out, format_args!("analytic = {exact:.16e}"))?;
        say(out, format_args!("analytic_rel_err = {:.3e}", relative_error(total, exact)))?;
    }
    Ok(())
}

fn study_config(base: StudyConfig, a: &StudyArgs) -> Result<StudyConfig> {
    let mut c = base;
    if let Some(d) = &a.domain {
        c.domain = Domain { x0: d[0], x1: d[1], y0: d[2], y1: d[3] };
        if !(c.domain.width() > 0.0 && c.domain.height() > 0.0) {
            return Err(Error::Config("--domain needs X0 < X1 and Y0 < Y1".into()));
        }
    }
    if let Some(s) = &a.analytic {
        c.field = FieldSpec::parse_analytic(s)?;
    }
    if let Some(s) = a.surrogate {
        c.field = FieldSpec::Surrogate(s);
    }
    if let Some(p) = &a.field {
        let f = io::read_fdf(p)?;
        let b = f.grid().bounds();
        c.domain = Domain { x0: b.min[0], x1: b.max[0], y0: b.min[1], y1: b.max[1] };
        c.grid_points = (f.grid().nx(), f.grid().ny());
        c.field = FieldSpec::Grid(Arc::new(f));
        c.reference = Reference::Trapezoidal;
    }
    if let Some(m) = &a.methods {
        c.methods = m.clone();
    }
    if let Some(s) = &a.sweep {
        c.sweep = s.clone();
    }
    if let Some(m) = &a.mesh_elems {
        c.mesh_elems = pair(m, "--mesh-elems")?;
    }
    if let Some(g) = &a.grid_points {
        c.grid_points = pair(g, "--grid-points")?;
    }
    if let Some(r) = a.reference {
        c.reference = match r {
            RefArg::Analytic => Reference::Analytic,
            RefArg::Trapezoidal => Reference::Trapezoidal,
        };
    }
    if let Some(r) = a.reps {
        c.repetitions = r;
    }
    if let Some(p) = a.perturb {
        c.perturb = p;
    }
    c.seed = a.seed;
    c.exec = a.exec.options()?;
    Ok(c)
}

fn write_study(res: &StudyResult, output: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let csv = output.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(format!("{}.csv", res.study)));
    res.write_csv(&csv)?;
    res.write_dat(csv.with_extension("dat"))?;
    say(out, format_args!("{} rows written to {}", res.rows.len(), csv.display()))?;
    for (m, s) in res.error_slopes().into_iter().filter(|(m, _)| !m.ends_with(":setup")) {
        say(out, format_args!("error slope {m}: {s:.3}"))?;
    }
    Ok(())
}

pub fn cmd_study(s: StudyCommand, out: &mut dyn Write) -> Result<()> {
    let (res, output) = match s {
        StudyCommand::InterpConvergence(a) => {
            (harness::run_interp_convergence(&study_config(StudyConfig::interp_convergence(), &a)?)?, a.output)
        }
        StudyCommand::QuadSweep(a) => {
            let base = match a.surrogate {
                Some(s) => StudyConfig::fixed_resolution_sweep(s),
                None => StudyConfig::quadrature_sweep(),
            };
            (harness::run_quadrature_sweep(&study_config(base, &a)?)?, a.output)
        }
        StudyCommand::Href(a) => {
            let surrogate = a.surrogate.unwrap_or(Surrogate::Smooth);
            (harness::run_href_study(&study_config(StudyConfig::href(surrogate), &a)?)?, a.output)
        }
        StudyCommand::WeakScaling(a) => {
            let res = harness::run_weak_scaling(&study_config(StudyConfig::weak_scaling(), &a)?)?;
            for (m, s) in res.time_slopes() {
                say(out, format_args!("time slope {m}: {s:.3}"))?;
            }
            (res, a.output)
        }
        StudyCommand::Table1(a) => return cmd_table1(&a, out),
    };
    write_study(&res, output.as_deref(), out)
}

fn read_optional_csv(study: &str, path: &Path) -> Result<Option<StudyResult>> {
    match std::fs::read_to_string(path) {
        Ok(text) => StudyResult::from_csv(&path.display().to_string(), &text).map(|mut r| {
            r.study = study.into();
            Some(r)
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(Error::Io { path: path.to_path_buf(), source }),
    }
}

pub fn cmd_table1(a: &Table1Args, out: &mut dyn Write) -> Result<()> {
    let href = read_optional_csv("href", &a.href)?;
    let ws = read_optional_csv("weak-scaling", &a.weak_scaling)?;
    let table = emit_table1(&Table1Inputs { href: href.as_ref(), weak_scaling: ws.as_ref() })?;
    match &a.output {
        Some(p) => std::fs::write(p, &table).map_err(|source| Error::Io { path: p.clone(), source }),
        None => out.write_all(table.as_bytes()).map_err(|source| Error::Io { path: "<stdout>".into(), source }),
    }
}

pub fn cmd_genmesh(a: &GenmeshArgs, out: &mut dyn Write) -> Result<()> {
    let (nx, ny) = pair(&a.elems, "--elems")?;
    let r = &a.rect;
    let mut mesh = QuadMesh::rectangle(r[0], r[1], r[2], r[3], nx, ny)?;
    if a.perturb > 0.0 {
        if a.perturb >= 0.25 {
            return Err(Error::Config("--perturb must be below 0.25".into()));
        }
        mesh = perturb_interior_nodes(&mesh, nx, ny, a.perturb, a.seed)?;
    }
    io::write_qm1(&a.output, &mesh)?;
    say(out, format_args!("nodes = {}, elements = {}", mesh.n_nodes(), mesh.n_elements()))
}

pub fn cmd_genfield(a: &GenfieldArgs, out: &mut dyn Write) -> Result<()> {
    let spec = FieldSpec::parse_analytic(&a.analytic)?;
    let (nx, ny) = pair(&a.points, "--points")?;
    let d = &a.domain;
    let f = spec.sample(&Domain { x0: d[0], x1: d[1], y0: d[2], y1: d[3] }, nx, ny)?;
    io::write_fdf(&a.output, &f)?;
    say(out, format_args!("points = {nx} x {ny}, trapezoid = {:.16e}", trapezoid_integral(&f)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::NoConvergence { element: 0, point: 0, residual: 1.0 }), 1);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::EmptyResults), 2);
    }

    #[test]
    fn rejects_two_field_sources() {
        let r = Cli::try_parse_from([
            "fieldxfer", "transfer", "--method", "quad", "--field", "a.fdf", "--analytic", "2pi",
            "--mesh", "m.qm1",
        ]);
        assert!(r.is_err());
        let r = Cli::try_parse_from(["fieldxfer", "transfer", "--method", "quad", "--analytic", "2pi"]);
        assert!(r.is_err());
    }

    #[test]
    fn study_overrides() {
        let cli = Cli::try_parse_from([
            "fieldxfer", "study", "href", "--domain", "20", "150", "-15", "15", "--surrogate", "oscillatory",
            "--sweep", "13,26", "--methods", "supermesh,bspline:3@3",
        ])
        .unwrap();
        let Command::Study(StudyCommand::Href(a)) = cli.command else { panic!() };
        let c = study_config(StudyConfig::href(Surrogate::Smooth), &a).unwrap();
        assert_eq!(c.domain, Domain::SHEAR_LAYER);
        assert!(matches!(c.field, FieldSpec::Surrogate(Surrogate::Oscillatory)));
        assert_eq!(c.sweep, vec![13.0, 26.0]);
        assert_eq!(c.methods.len(), 2);
    }
}
