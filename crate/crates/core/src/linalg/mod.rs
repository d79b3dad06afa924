//! Dense and sparse kernels: CSR operators, dense symmetric eigensolvers,
//! Cholesky factorizations and the deflated pseudo-inverse solve.

mod cholesky;
mod deflated;
mod dense;
mod eigen;
mod sparse;

pub use cholesky::{CholeskyFactor, DenseCholesky};
pub use deflated::{deflated_solve, DeflatedSolver, GroundedSolver};
pub use dense::DenseMatrix;
pub use eigen::{
    dense_sym_eig, sym_eig, sym_eig_generalized, sym_eigenvalues, tridiagonal_eigenvalues,
    EigenDecomposition,
};
pub use sparse::SparseOperator;

/// A square linear map applied out of place.
pub trait Operator: Sync {
    fn dim(&self) -> usize;

    /// `y <- Op x`; both slices have length `dim()`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y);
        y
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl Operator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

impl<T: Operator + ?Sized> Operator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `y <- y + alpha x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Removes the component of `x` along the unit vector `n`.
pub fn project_out(x: &mut [f64], n: &[f64]) {
    let c = dot(x, n);
    axpy(-c, n, x);
}

/// Assembles an operator column by column into a dense matrix.
pub fn to_dense<O: Operator + ?Sized>(op: &O) -> DenseMatrix {
    use rayon::prelude::*;
    let n = op.dim();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            op.apply_vec(&e)
        })
        .collect();
    let mut out = DenseMatrix::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            out[(i, j)] = col[i];
        }
    }
    out
}

/// Orthonormal basis of the complement of the unit vector `n`, as the
/// columns of an `n x (n-1)` matrix (one Householder reflection).
pub fn complement_basis(n: &[f64]) -> DenseMatrix {
    let m = n.len();
    let s = if n[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut w = n.to_vec();
    w[0] += s;
    let ww = dot(&w, &w);
    let mut q = DenseMatrix::zeros(m, m - 1);
    for i in 0..m {
        for j in 1..m {
            let id = if i == j { 1.0 } else { 0.0 };
            q[(i, j - 1)] = id - 2.0 * w[i] * w[j] / ww;
        }
    }
    q
}
