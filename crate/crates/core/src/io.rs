//! Text file formats.
//!
//! * `FDF 1` grid fields: `nx ny`, the x and y coordinates, then `ny` rows
//!   of `nx` values (row `j` ascending).
//! * `QM 1` quad meshes: `n_nodes n_elems`, one `x y` line per node, then
//!   one `i0 i1 i2 i3` line (0-based, counter-clockwise) per element.
//! * `RHS 1` load vectors: `n_nodes`, then one value per line.
//!
//! Floats are written with 17 significant digits so every `f64` survives a
//! write/read cycle bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::assemble::RhsVector;
use crate::error::{Error, Result};
use crate::fem::QuadMesh;
use crate::grid::{ScalarField, StructuredGrid};

fn fmt_f64(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn join_f64(out: &mut String, vals: &[f64]) {
    for (k, &v) in vals.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        fmt_f64(out, v);
    }
    out.push('\n');
}

/// Line-oriented reader tracking 1-based line numbers for messages.
struct Lines<'a> {
    name: &'a str,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(name: &'a str, text: &'a str) -> Self {
        Self {
            name,
            iter: text.lines().enumerate(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.name.to_string(),
            line: self.line,
            msg: msg.into(),
        }
    }

    /// Next non-blank line.
    fn next_line(&mut self, what: &str) -> Result<&'a str> {
        for (k, l) in self.iter.by_ref() {
            self.line = k + 1;
            if !l.trim().is_empty() {
                return Ok(l);
            }
        }
        self.line += 1;
        Err(self.err(format!("unexpected end of file, expected {what}")))
    }

    fn values<T: FromStr>(&mut self, what: &str, count: usize) -> Result<Vec<T>> {
        let l = self.next_line(what)?;
        let vals: Vec<T> = l
            .split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| self.err(format!("cannot parse '{t}' in {what}"))))
            .collect::<Result<_>>()?;
        if vals.len() != count {
            return Err(self.err(format!("{what}: expected {count} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn header(&mut self, magic: &str) -> Result<()> {
        let l = self.next_line("header")?;
        if l.split_whitespace().collect::<Vec<_>>() != magic.split(' ').collect::<Vec<_>>() {
            return Err(self.err(format!("expected header '{magic}', found '{}'", l.trim())));
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        for (k, l) in self.iter.by_ref() {
            if !l.trim().is_empty() {
                self.line = k + 1;
                return Err(self.err("trailing data after end of content"));
            }
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn format_fdf(field: &ScalarField) -> String {
    let g = field.grid();
    let mut s = String::new();
    let _ = writeln!(s, "FDF 1\n{} {}", g.nx(), g.ny());
    join_f64(&mut s, g.xs());
    join_f64(&mut s, g.ys());
    for j in 0..g.ny() {
        join_f64(&mut s, field.row(j));
    }
    s
}

pub fn parse_fdf(name: &str, text: &str) -> Result<ScalarField> {
    let mut r = Lines::new(name, text);
    r.header("FDF 1")?;
    let dims: Vec<usize> = r.values("grid dimensions", 2)?;
    let (nx, ny) = (dims[0], dims[1]);
    let xs = r.values("x coordinates", nx)?;
    let ys = r.values("y coordinates", ny)?;
    let line = r.line;
    let grid = StructuredGrid::new(xs, ys).map_err(|e| Error::Parse {
        path: name.to_string(),
        line,
        msg: e.to_string(),
    })?;
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        values.extend(r.values::<f64>(&format!("value row {j}"), nx)?);
    }
    r.finish()?;
    let line = r.line;
    ScalarField::new(Arc::new(grid), values).map_err(|e| Error::Parse {
        path: name.to_string(),
        line,
        msg: e.to_string(),
    })
}

pub fn read_fdf(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    parse_fdf(&path.display().to_string(), &read_text(path)?)
}

pub fn write_fdf(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    write_text(path.as_ref(), &format_fdf(field))
}

pub fn format_qm1(mesh: &QuadMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "QM 1\n{} {}", mesh.n_nodes(), mesh.n_elements());
    for p in mesh.nodes() {
        join_f64(&mut s, p);
    }
    for e in mesh.elements() {
        let _ = writeln!(s, "{} {} {} {}", e[0], e[1], e[2], e[3]);
    }
    s
}

pub fn parse_qm1(name: &str, text: &str) -> Result<QuadMesh> {
    let mut r = Lines::new(name, text);
    r.header("QM 1")?;
    let dims: Vec<usize> = r.values("mesh dimensions", 2)?;
    let mut nodes = Vec::with_capacity(dims[0]);
    for k in 0..dims[0] {
        let v: Vec<f64> = r.values(&format!("node {k}"), 2)?;
        nodes.push([v[0], v[1]]);
    }
    let mut elements = Vec::with_capacity(dims[1]);
    for k in 0..dims[1] {
        let v: Vec<usize> = r.values(&format!("element {k}"), 4)?;
        elements.push([v[0], v[1], v[2], v[3]]);
    }
    r.finish()?;
    let line = r.line;
    QuadMesh::new(nodes, elements).map_err(|e| Error::Parse {
        path: name.to_string(),
        line,
        msg: e.to_string(),
    })
}

pub fn read_qm1(path: impl AsRef<Path>) -> Result<QuadMesh> {
    let path = path.as_ref();
    parse_qm1(&path.display().to_string(), &read_text(path)?)
}

pub fn write_qm1(path: impl AsRef<Path>, mesh: &QuadMesh) -> Result<()> {
    write_text(path.as_ref(), &format_qm1(mesh))
}

pub fn format_rhs(rhs: &RhsVector) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "RHS 1\n{}", rhs.len());
    for &v in rhs.values() {
        fmt_f64(&mut s, v);
        s.push('\n');
    }
    s
}

pub fn parse_rhs(name: &str, text: &str) -> Result<RhsVector> {
    let mut r = Lines::new(name, text);
    r.header("RHS 1")?;
    let n: Vec<usize> = r.values("node count", 1)?;
    let mut b = Vec::with_capacity(n[0]);
    for k in 0..n[0] {
        b.push(r.values::<f64>(&format!("value {k}"), 1)?[0]);
    }
    r.finish()?;
    Ok(RhsVector::new(b))
}

pub fn read_rhs(path: impl AsRef<Path>) -> Result<RhsVector> {
    let path = path.as_ref();
    parse_rhs(&path.display().to_string(), &read_text(path)?)
}

pub fn write_rhs(path: impl AsRef<Path>, rhs: &RhsVector) -> Result<()> {
    write_text(path.as_ref(), &format_rhs(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fdf_layout() {
        let g = Arc::new(StructuredGrid::new(vec![0.0, 0.5, 1.0], vec![0.0, 2.0]).unwrap());
        let f = ScalarField::from_fn(g, |x, y| x + 10.0 * y).unwrap();
        let text = format_fdf(&f);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "FDF 1");
        assert_eq!(lines[1], "3 2");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[2].split(' ').count(), 3);
        assert!(lines[5].starts_with("2.0000000000000000e1 "));
    }

    #[test]
    fn fdf_errors_name_the_line() {
        let bad = "FDF 1\n2 2\n0 1\n0 1\n1 2\n3 x\n";
        match parse_fdf("f.fdf", bad) {
            Err(Error::Parse { line: 6, path, .. }) => assert_eq!(path, "f.fdf"),
            other => panic!("{other:?}"),
        }
        assert!(parse_fdf("f", "FDX 1\n").is_err());
        assert!(parse_fdf("f", "FDF 1\n2 2\n0 1\n0 1\n1 2\n").is_err());
        assert!(parse_fdf("f", "FDF 1\n2 2\n1 0\n0 1\n1 2\n3 4\n").is_err());
        assert!(parse_fdf("f", "FDF 1\n2 2\n0 1\n0 1\n1 2\n3 4\n5\n").is_err());
    }

    #[test]
    fn qm1_roundtrip_and_validation() {
        let m = QuadMesh::rectangle(0.0, 0.0, 1.0, 0.3, 3, 2).unwrap();
        let back = parse_qm1("m", &format_qm1(&m)).unwrap();
        assert_eq!(back, m);
        let inverted = "QM 1\n4 1\n0 0\n1 0\n1 1\n0 1\n0 3 2 1\n";
        assert!(matches!(parse_qm1("m", inverted), Err(Error::Parse { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = read_fdf("/nonexistent/field.fdf").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/field.fdf"));
    }

    proptest! {
        #[test]
        fn float_roundtrip_is_bit_exact(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..50)) {
            let rhs = RhsVector::new(vals.clone());
            let back = parse_rhs("r", &format_rhs(&rhs)).unwrap();
            prop_assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            vals.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn fdf_roundtrip_is_bit_exact(vals in prop::collection::vec(-1e300f64..1e300, 12), x0 in -1e3f64..1e3) {
            let g = Arc::new(StructuredGrid::new(vec![x0, x0 + 0.1, x0 + 0.7], vec![0.0, 1.0 / 3.0, 0.5, 1.0]).unwrap());
            let f = ScalarField::new(g, vals).unwrap();
            let back = parse_fdf("f", &format_fdf(&f)).unwrap();
            prop_assert_eq!(back.grid(), f.grid());
            prop_assert_eq!(back.values(), f.values());
        }
    }
}
