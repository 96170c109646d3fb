use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field shape mismatch: expected {expected_ny}x{expected_nx} values, got {got}")]
    ShapeMismatch {
        expected_nx: usize,
        expected_ny: usize,
        got: usize,
    },

    #[error("non-finite field value at (i={i}, j={j})")]
    NonFinite { i: usize, j: usize },

    #[error("grid too small for degree {degree}: {axis} has {n} points, need at least {required}")]
    GridTooSmall {
        axis: char,
        n: usize,
        degree: usize,
        required: usize,
    },

    #[error("unsupported {kind} degree {degree}")]
    InvalidDegree { kind: &'static str, degree: usize },

    #[error("point {index} ({x}, {y}) lies outside the grid domain")]
    OutOfDomain { index: usize, x: f64, y: f64 },

    #[error("element {element}: quadrature point {point} ({x}, {y}) lies outside the grid domain")]
    ElementOutOfDomain {
        element: usize,
        point: usize,
        x: f64,
        y: f64,
    },

    #[error("inverse map did not converge for element {element}, point {point}: residual {residual:e}")]
    NoConvergence {
        element: usize,
        point: usize,
        residual: f64,
    },

    #[error("singular mapping in element {element} at point {point}: det J = {det:e}")]
    SingularMapping { element: usize, point: usize, det: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("Gauss-Legendre order {0} out of range 1..=30")]
    InvalidRuleOrder(usize),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no study results to report")]
    EmptyResults,
}

impl Error {
    /// True for failures of the numerics (divergence, singular maps, domain
    /// violations) as opposed to bad input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::SingularMapping { .. }
                | Error::OutOfDomain { .. }
                | Error::ElementOutOfDomain { .. }
        )
    }
}
