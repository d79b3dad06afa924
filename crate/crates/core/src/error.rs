use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("malformed sparse structure: {0}")]
    MalformedSparse(String),

    #[error("operator is not symmetric: |a({row},{col}) - a({col},{row})| = {deviation:e}")]
    NotSymmetric {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("{what} must be strictly positive (index {index}, value {value:e})")]
    NonPositive {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("nullspace does not span the kernel: relative residual {residual:e}")]
    BadNullspace { residual: f64 },

    #[error("eigensolver did not converge for eigenvalue {index}")]
    EigenNoConvergence { index: usize },

    #[error("axis {axis}: {cells} cells are not divisible into {blocks} blocks")]
    Divisibility {
        axis: char,
        cells: usize,
        blocks: usize,
    },

    #[error("{what} index {index} out of bounds (limit {bound})")]
    OutOfBounds {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field file {path}: expected {expected} values, found {found}")]
    FieldLength {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("level-c basis is not mass-normalized: max deviation from identity {deviation:e}")]
    NonIdentityMass { deviation: f64 },

    #[error("indefinite operator detected at iteration {iteration} (curvature {curvature:e})")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("solver did not converge in {iterations} iterations (relative residual {relres:e})")]
    NotConverged { iterations: usize, relres: f64 },

    #[error("dense computation limited to n <= {cap}, got n = {n}")]
    SizeCap { n: usize, cap: usize },

    #[error("smoother violates M + M^T - A > 0 (lambda_min = {lambda_min:e})")]
    SmootherContract { lambda_min: f64 },

    #[error("saturation {value} in cell {cell} outside admissible range")]
    SaturationOutOfRange { cell: usize, value: f64 },

    #[error("wellbore radius {r_wb} not smaller than equivalent radii ({r1}, {r2})")]
    WellboreTooLarge { r_wb: f64, r1: f64, r2: f64 },

    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
