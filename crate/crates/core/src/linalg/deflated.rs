//! Pseudo-inverse solve for symmetric positive semidefinite operators with a
//! known one-dimensional kernel.

use crate::error::{Error, Result};

use super::{
    axpy, dot, norm2, project_out, CholeskyFactor, DenseCholesky, Operator, SparseOperator,
};

const KERNEL_CHECK_TOL: f64 = 1e-10;

/// Factorization of `A + sigma n n^T`, `sigma = trace(A) / nrows`, applied
/// between two projections onto the orthogonal complement of `n`.
#[derive(Debug, Clone)]
pub struct DeflatedSolver {
    nullspace: Vec<f64>,
    factor: DenseCholesky,
}

impl DeflatedSolver {
    pub fn new(a: &SparseOperator, nullspace: &[f64]) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dims("deflated operator", n, a.ncols()));
        }
        if nullspace.len() != n {
            return Err(Error::dims("nullspace vector", n, nullspace.len()));
        }
        let nn = norm2(nullspace);
        if !(nn > 0.0) {
            return Err(Error::BadNullspace {
                residual: f64::INFINITY,
            });
        }
        let unit: Vec<f64> = nullspace.iter().map(|v| v / nn).collect();
        let sigma = (a.trace() / n as f64).max(f64::MIN_POSITIVE);
        let mut shifted = a.to_dense();
        for i in 0..n {
            for j in 0..n {
                shifted[(i, j)] += sigma * unit[i] * unit[j];
            }
        }
        let factor = DenseCholesky::factor(&shifted).map_err(|_| Error::BadNullspace {
            residual: f64::INFINITY,
        })?;
        let solver = Self {
            nullspace: unit,
            factor,
        };
        solver.check_kernel(a)?;
        Ok(solver)
    }

    fn check_kernel(&self, a: &SparseOperator) -> Result<()> {
        let n = self.nullspace.len();
        // deterministic probe with no special structure
        let mut b: Vec<f64> = (0..n)
            .map(|i| ((i as f64 + 1.0) * 0.754_877_666).sin())
            .collect();
        project_out(&mut b, &self.nullspace);
        let nb = norm2(&b);
        if nb == 0.0 {
            return Ok(());
        }
        let x = self.solve(&b)?;
        let mut r = a.spmv(&x)?;
        axpy(-1.0, &b, &mut r);
        let residual = norm2(&r) / nb;
        if residual > KERNEL_CHECK_TOL {
            return Err(Error::BadNullspace { residual });
        }
        Ok(())
    }

    pub fn nullspace(&self) -> &[f64] {
        &self.nullspace
    }

    pub fn dim(&self) -> usize {
        self.nullspace.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(Error::dims("deflated solve", self.dim(), b.len()));
        }
        let mut x = vec![0.0; b.len()];
        self.apply(b, &mut x);
        Ok(x)
    }
}

impl Operator for DeflatedSolver {
    fn dim(&self) -> usize {
        self.nullspace.len()
    }

    fn apply(&self, b: &[f64], x: &mut [f64]) {
        let mut bp = b.to_vec();
        project_out(&mut bp, &self.nullspace);
        let mut y = self.factor.solve(&bp).expect("dimension checked");
        let c = dot(&y, &self.nullspace);
        axpy(-c, &self.nullspace, &mut y);
        x.copy_from_slice(&y);
    }
}

/// One-shot `A^+ b` for a PSD `A` whose kernel is spanned by `nullspace`.
pub fn deflated_solve(a: &SparseOperator, nullspace: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    DeflatedSolver::new(a, nullspace)?.solve(b)
}

/// Sparse pseudo-inverse for a PSD `A` with one-dimensional kernel `n`:
/// the unknown with the largest `|n_k|` is fixed to zero, the remaining SPD
/// block is factored, and the result is projected orthogonal to `n`.
#[derive(Debug, Clone)]
pub struct GroundedSolver {
    nullspace: Vec<f64>,
    ground: usize,
    factor: CholeskyFactor,
}

impl GroundedSolver {
    pub fn new(a: &SparseOperator, nullspace: &[f64]) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dims("grounded operator", n, a.ncols()));
        }
        if nullspace.len() != n || n == 0 {
            return Err(Error::dims("nullspace vector", n, nullspace.len()));
        }
        let nn = norm2(nullspace);
        if !(nn > 0.0) {
            return Err(Error::BadNullspace {
                residual: f64::INFINITY,
            });
        }
        let unit: Vec<f64> = nullspace.iter().map(|v| v / nn).collect();
        let ground = (0..n)
            .max_by(|&i, &j| unit[i].abs().total_cmp(&unit[j].abs()))
            .expect("non-empty");
        let keep: Vec<usize> = (0..n).filter(|&i| i != ground).collect();
        let factor = CholeskyFactor::factor(&a.principal_submatrix(&keep)).map_err(|_| {
            Error::BadNullspace {
                residual: f64::INFINITY,
            }
        })?;
        let solver = Self {
            nullspace: unit,
            ground,
            factor,
        };
        let mut b: Vec<f64> = (0..n)
            .map(|i| ((i as f64 + 1.0) * 0.754_877_666).sin())
            .collect();
        project_out(&mut b, &solver.nullspace);
        let nb = norm2(&b);
        if nb > 0.0 {
            let x = solver.apply_vec(&b);
            let mut r = a.spmv(&x)?;
            axpy(-1.0, &b, &mut r);
            let residual = norm2(&r) / nb;
            if residual > KERNEL_CHECK_TOL {
                return Err(Error::BadNullspace { residual });
            }
        }
        Ok(solver)
    }
}

impl Operator for GroundedSolver {
    fn dim(&self) -> usize {
        self.nullspace.len()
    }

    fn apply(&self, b: &[f64], x: &mut [f64]) {
        let mut bp = b.to_vec();
        project_out(&mut bp, &self.nullspace);
        bp.remove(self.ground);
        let mut y = vec![0.0; bp.len()];
        self.factor.solve_into(&bp, &mut y);
        y.insert(self.ground, 0.0);
        let c = dot(&y, &self.nullspace);
        axpy(-c, &self.nullspace, &mut y);
        x.copy_from_slice(&y);
    }
}
