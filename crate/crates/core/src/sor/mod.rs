//! Pressure Poisson solvers: the in-place red-black SOR iteration and the
//! twinned double-buffer sweep, plus the boundary-range work decomposition.

mod boundary;
mod grid;
mod solver;

use thiserror::Error;

pub use boundary::{
    audit_boundary, boundary_range, map_boundary_gid, padded_range, AuditReport, AuditViolation, BoundaryPoint, Face,
    GidTarget,
};
pub use grid::{build_uniform_coeffs, AxisCoeffs, Grid, SorCoeffs};
pub use solver::{pack_twinned, redblack_iteration, solve_pressure, twinned_sweep, Scheme, TwinnedField3D};

pub const DEFAULT_N_ITER: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
