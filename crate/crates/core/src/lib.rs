//! Transfer of scalar fields from structured finite-difference grids onto
//! unstructured bilinear quadrilateral finite-element meshes.
//!
//! Two assembly routes produce the FEM load vector `b_i = ∫ N_i f dΩ`:
//!
//! * [`assemble`]: Gauss quadrature per element with the field reconstructed
//!   at the Gauss points by a B-spline or Lagrange [`interp::Interpolator`].
//! * [`supermesh`]: exact geometric intersection of every element with the
//!   grid cells it overlaps, followed by triangle quadrature on the pieces.
//!   With bilinear reconstruction the assembled total reproduces the
//!   trapezoidal integral of the grid data to rounding.
//!
//! [`grid::trapezoid_integral`] gives the reference integral of the discrete
//! field, and [`harness`] drives the convergence, refinement and scaling
//! studies.

#![allow(clippy::needless_range_loop)]

pub mod assemble;
pub mod cli;
pub mod error;
pub mod fem;
pub mod grid;
pub mod harness;
pub mod interp;
pub mod io;
pub mod parallel;
pub mod supermesh;
mod sum;


pub use assemble::{assemble_quadrature, assemble_quadrature_analytic, RhsVector};
pub use error::{Error, Result};
pub use fem::{QuadMesh, QuadratureRule, RefPoint};
pub use grid::{Aabb, ScalarField, StructuredGrid, TrapezoidWeights};
pub use interp::{Interpolator, Reconstruction};
pub use parallel::ExecOptions;
pub use supermesh::{assemble_supermesh, build_supermesh, ConvexPolygon, SupermeshCache};

