//! Block Jacobi smoothers and the three-grid preconditioner: an inexact
//! two-grid cycle whose coarse solve is itself a two-grid cycle over the
//! coarse-coarse space, or an exact two-grid cycle for comparison.

use std::ops::Range;
use std::time::Instant;

use rayon::prelude::*;

use crate::coarse::SpectralSpaces;
use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, Level};
use crate::linalg::{
    axpy, sym_eigenvalues, to_dense, CholeskyFactor, DeflatedSolver, DenseCholesky, DenseMatrix,
    GroundedSolver, Operator, SparseOperator,
};
use crate::tpfa::PressureSystem;

/// Blocks up to this size use the dense Cholesky path.
const DENSE_BLOCK: usize = 128;

/// Singular operators up to this size use the dense deflated solve.
const DENSE_DEFLATED: usize = 2048;

/// Direct solver for an SPD or singular-with-known-kernel operator.
#[derive(Debug, Clone)]
pub enum DirectSolver {
    Dense(DenseCholesky),
    Sparse(CholeskyFactor),
    Deflated(DeflatedSolver),
    Grounded(GroundedSolver),
}

impl DirectSolver {
    /// Pseudo-inverse when `nullspace` is given and `a` annihilates it,
    /// Cholesky otherwise.
    pub fn new(a: &SparseOperator, nullspace: Option<&[f64]>) -> Result<Self> {
        let n = a.nrows();
        if let Some(ns) = nullspace.filter(|ns| annihilates(a, ns)) {
            return if n <= DENSE_DEFLATED {
                DeflatedSolver::new(a, ns).map(DirectSolver::Deflated)
            } else {
                GroundedSolver::new(a, ns).map(DirectSolver::Grounded)
            };
        }
        if n <= DENSE_BLOCK {
            DenseCholesky::factor(&a.to_dense()).map(DirectSolver::Dense)
        } else {
            CholeskyFactor::factor(a).map(DirectSolver::Sparse)
        }
    }
}

fn annihilates(a: &SparseOperator, v: &[f64]) -> bool {
    let nv = crate::linalg::norm2(v);
    if v.len() != a.nrows() || nv == 0.0 {
        return false;
    }
    let av = a.spmv(v).expect("length checked");
    crate::linalg::norm2(&av) <= 1e-10 * a.norm_inf() * nv
}

impl Operator for DirectSolver {
    fn dim(&self) -> usize {
        match self {
            DirectSolver::Dense(s) => s.dim(),
            DirectSolver::Sparse(s) => s.dim(),
            DirectSolver::Deflated(s) => Operator::dim(s),
            DirectSolver::Grounded(s) => s.dim(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            DirectSolver::Dense(s) => s.apply(x, y),
            DirectSolver::Sparse(s) => s.solve_into(x, y),
            DirectSolver::Deflated(s) => s.apply(x, y),
            DirectSolver::Grounded(s) => s.apply(x, y),
        }
    }
}

/// `nu` damped block Jacobi sweeps from a zero initial guess.
#[derive(Debug, Clone)]
pub struct BlockJacobiSmoother {
    n: usize,
    blocks: Vec<Vec<usize>>,
    solvers: Vec<DirectSolver>,
    sweeps: usize,
    omega: f64,
}

impl BlockJacobiSmoother {
    /// `blocks` must partition `0..a.nrows()`; each index list is sorted.
    /// `nullspace` is used only for a block that turns out to be singular.
    pub fn new(
        a: &SparseOperator,
        blocks: Vec<Vec<usize>>,
        sweeps: usize,
        omega: f64,
        nullspace: Option<&[f64]>,
    ) -> Result<Self> {
        let n = a.nrows();
        if sweeps == 0 {
            return Err(Error::InvalidArgument("smoother needs at least one sweep".into()));
        }
        if !(omega > 0.0 && omega <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping {omega} outside (0, 1]"
            )));
        }
        let mut seen = vec![false; n];
        for b in &blocks {
            for &i in b {
                if i >= n || seen[i] {
                    return Err(Error::InvalidArgument(format!(
                        "smoother blocks do not partition 0..{n} (index {i})"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "smoother blocks miss index {i}"
            )));
        }
        let solvers = blocks
            .par_iter()
            .map(|b| {
                let sub = a.principal_submatrix(b);
                let local_ns = nullspace.map(|ns| b.iter().map(|&i| ns[i]).collect::<Vec<_>>());
                DirectSolver::new(&sub, local_ns.as_deref())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n,
            blocks,
            solvers,
            sweeps,
            omega,
        })
    }

    /// Blocks given as contiguous index ranges.
    pub fn from_ranges(
        a: &SparseOperator,
        ranges: &[Range<usize>],
        sweeps: usize,
        omega: f64,
        nullspace: Option<&[f64]>,
    ) -> Result<Self> {
        let blocks = ranges.iter().map(|r| r.clone().collect()).collect();
        Self::new(a, blocks, sweeps, omega, nullspace)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `e += omega D_B^{-1} res`.
    fn block_correct(&self, res: &[f64], e: &mut [f64]) {
        let updates: Vec<Vec<f64>> = self
            .blocks
            .par_iter()
            .zip(&self.solvers)
            .map(|(b, s)| {
                let local: Vec<f64> = b.iter().map(|&i| res[i]).collect();
                s.apply_vec(&local)
            })
            .collect();
        for (b, u) in self.blocks.iter().zip(updates) {
            for (&i, v) in b.iter().zip(u) {
                e[i] += self.omega * v;
            }
        }
    }

    /// `M^{-1} r` for the level operator `a`.
    pub fn apply_with(&self, a: &SparseOperator, r: &[f64], e: &mut [f64]) {
        e.iter_mut().for_each(|v| *v = 0.0);
        self.block_correct(r, e);
        let mut res = vec![0.0; self.n];
        for _ in 1..self.sweeps {
            a.spmv_into(e, &mut res);
            for (x, &b) in res.iter_mut().zip(r) {
                *x = b - *x;
            }
            self.block_correct(&res, e);
        }
    }
}

/// A smoother bound to its level operator.
pub struct BoundSmoother<'a> {
    pub smoother: &'a BlockJacobiSmoother,
    pub a: &'a SparseOperator,
}

impl Operator for BoundSmoother<'_> {
    fn dim(&self) -> usize {
        self.smoother.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.smoother.apply_with(self.a, x, y)
    }
}

/// Outcome of the smoother contract check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractCheck {
    pub holds: bool,
    pub lambda_min: f64,
}

/// Dense `M` from the smoother's action: inverse of the assembled `M^{-1}`.
pub fn dense_smoother_matrix(s: &BlockJacobiSmoother, a: &SparseOperator) -> Result<DenseMatrix> {
    let mut minv = to_dense(&BoundSmoother { smoother: s, a });
    minv.symmetrize();
    Ok(DenseCholesky::factor(&minv)?.inverse())
}

/// `λ_min(M + M^T - A) > 0`, by dense eigenvalues.
pub fn smoother_contract_check(
    s: &BlockJacobiSmoother,
    a: &SparseOperator,
) -> Result<ContractCheck> {
    let m = dense_smoother_matrix(s, a)?;
    let mut t = m.clone();
    t.scale(2.0);
    t.add_scaled(-1.0, &a.to_dense())?;
    t.symmetrize();
    let lambda_min = sym_eigenvalues(&t)?[0];
    let scale = t.norm_inf().max(f64::MIN_POSITIVE);
    Ok(ContractCheck {
        holds: lambda_min > 1e-12 * scale,
        lambda_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Coarse solve replaced by a two-grid cycle over the coarse-coarse space.
    Inexact,
    /// Direct coarse solve.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecConfig {
    pub nu: usize,
    pub nu_c: usize,
    pub omega: f64,
    pub mode: Mode,
}

impl Default for PrecConfig {
    fn default() -> Self {
        Self {
            nu: 1,
            nu_c: 1,
            omega: 1.0,
            mode: Mode::Inexact,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThreeGridPreconditioner {
    pub a: SparseOperator,
    pub a_c: SparseOperator,
    pub a_cc: SparseOperator,
    pub r_c: SparseOperator,
    pub r_cc: SparseOperator,
    pub fine: BlockJacobiSmoother,
    pub coarse: BlockJacobiSmoother,
    coarsest: Option<DirectSolver>,
    exact_c: Option<DirectSolver>,
    pub mode: Mode,
    pub setup_seconds: f64,
}

impl ThreeGridPreconditioner {
    pub fn new(
        sys: &PressureSystem,
        spaces: &SpectralSpaces,
        grid: &GridHierarchy,
        cfg: PrecConfig,
    ) -> Result<Self> {
        let start = Instant::now();
        let map = grid.block_map(Level::Coarse);
        let fine_blocks = (0..map.n_blocks())
            .map(|b| map.block_cells(b))
            .collect::<Result<Vec<_>>>()?;
        let fine = BlockJacobiSmoother::new(
            &sys.a,
            fine_blocks,
            cfg.nu,
            cfg.omega,
            sys.nullspace.as_deref(),
        )?;
        let per = grid.coarse_per_cc();
        let cc_ranges: Vec<Range<usize>> = (0..grid.m_cc())
            .map(|b| spaces.c.offsets[b * per]..spaces.c.offsets[(b + 1) * per])
            .collect();
        let coarse = BlockJacobiSmoother::from_ranges(
            &spaces.c.a,
            &cc_ranges,
            cfg.nu_c,
            cfg.omega,
            spaces.c.nullspace.as_deref(),
        )?;
        let (coarsest, exact_c) = match cfg.mode {
            Mode::Inexact => (
                Some(DirectSolver::new(
                    &spaces.cc.a,
                    spaces.cc.nullspace.as_deref(),
                )?),
                None,
            ),
            Mode::Exact => (
                None,
                Some(DirectSolver::new(
                    &spaces.c.a,
                    spaces.c.nullspace.as_deref(),
                )?),
            ),
        };
        Ok(Self {
            a: sys.a.clone(),
            a_c: spaces.c.a.clone(),
            a_cc: spaces.cc.a.clone(),
            r_c: spaces.c.r.clone(),
            r_cc: spaces.cc.r.clone(),
            fine,
            coarse,
            coarsest,
            exact_c,
            mode: cfg.mode,
            setup_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_c(&self) -> usize {
        self.a_c.nrows()
    }

    pub fn n_cc(&self) -> usize {
        self.a_cc.nrows()
    }

    /// Inner coarse map `r_c -> e_c`: pre-smoothing, coarse-coarse
    /// correction and post-smoothing on the level-c operator.
    pub fn apply_bc_inv(&self, r_c: &[f64], e_c: &mut [f64]) {
        let nc = self.n_c();
        let coarsest = self.coarsest.as_ref().expect("inexact mode");
        let mut u0 = vec![0.0; nc];
        self.coarse.apply_with(&self.a_c, r_c, &mut u0);
        let mut res = self.residual_c(r_c, &u0);
        let mut r_cc = vec![0.0; self.n_cc()];
        self.r_cc.spmv_into(&res, &mut r_cc);
        let e_cc = coarsest.apply_vec(&r_cc);
        let mut corr = vec![0.0; nc];
        self.r_cc.spmv_transpose_into(&e_cc, &mut corr);
        axpy(1.0, &corr, &mut u0);
        res = self.residual_c(r_c, &u0);
        self.coarse.apply_with(&self.a_c, &res, e_c);
        axpy(1.0, &u0, e_c);
    }

    fn residual_c(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; b.len()];
        self.a_c.spmv_into(x, &mut r);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        r
    }

    fn residual(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; b.len()];
        self.a.spmv_into(x, &mut r);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        r
    }

    fn coarse_solve(&self, r_c: &[f64], e_c: &mut [f64]) {
        match self.mode {
            Mode::Inexact => self.apply_bc_inv(r_c, e_c),
            Mode::Exact => self
                .exact_c
                .as_ref()
                .expect("exact mode")
                .apply(r_c, e_c),
        }
    }

    pub fn smoother_fine(&self) -> BoundSmoother<'_> {
        BoundSmoother {
            smoother: &self.fine,
            a: &self.a,
        }
    }

    pub fn smoother_coarse(&self) -> BoundSmoother<'_> {
        BoundSmoother {
            smoother: &self.coarse,
            a: &self.a_c,
        }
    }

    /// The inner coarse map as an operator on level c.
    pub fn bc_inv(&self) -> BcInverse<'_> {
        BcInverse(self)
    }
}

impl Operator for ThreeGridPreconditioner {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, f: &[f64], u: &mut [f64]) {
        let n = self.n();
        let mut u1 = vec![0.0; n];
        self.fine.apply_with(&self.a, f, &mut u1);
        let res = self.residual(f, &u1);
        let mut r_c = vec![0.0; self.n_c()];
        self.r_c.spmv_into(&res, &mut r_c);
        let mut e_c = vec![0.0; self.n_c()];
        self.coarse_solve(&r_c, &mut e_c);
        let mut corr = vec![0.0; n];
        self.r_c.spmv_transpose_into(&e_c, &mut corr);
        axpy(1.0, &corr, &mut u1);
        let res = self.residual(f, &u1);
        self.fine.apply_with(&self.a, &res, u);
        axpy(1.0, &u1, u);
    }
}

pub struct BcInverse<'a>(&'a ThreeGridPreconditioner);

impl Operator for BcInverse<'_> {
    fn dim(&self) -> usize {
        self.0.n_c()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply_bc_inv(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> SparseOperator {
        SparseOperator::from_dense(
            &DenseMatrix::from_rows(&[&[1.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 1.0]])
                .unwrap(),
        )
    }

    fn spd3() -> SparseOperator {
        SparseOperator::from_dense(
            &DenseMatrix::from_rows(&[&[2.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 2.0]])
                .unwrap(),
        )
    }

    #[test]
    fn single_block_is_exact() {
        let a = spd3();
        let s = BlockJacobiSmoother::new(&a, vec![vec![0, 1, 2]], 1, 1.0, None).unwrap();
        let mut e = vec![0.0; 3];
        s.apply_with(&a, &[1.0, 0.0, 0.0], &mut e);
        let want = [0.75, 0.5, 0.25];
        for (x, y) in e.iter().zip(want) {
            assert!((x - y).abs() < 1e-14);
        }
        s.apply_with(&a, &[0.0; 3], &mut e);
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_block_sweep_on_chain() {
        // blocks {0,1} and {2}; the {0,1} block of the chain is [[1,-1],[-1,2]]
        let a = chain3();
        let s = BlockJacobiSmoother::new(&a, vec![vec![0, 1], vec![2]], 1, 1.0, None).unwrap();
        let mut e = vec![0.0; 3];
        s.apply_with(&a, &[1.0, 1.0, 1.0], &mut e);
        // [[1,-1],[-1,2]]^{-1} = [[2,1],[1,1]]
        assert_eq!(e, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn rejects_bad_partition() {
        let a = spd3();
        assert!(BlockJacobiSmoother::new(&a, vec![vec![0, 1]], 1, 1.0, None).is_err());
        assert!(BlockJacobiSmoother::new(&a, vec![vec![0, 1], vec![1, 2]], 1, 1.0, None).is_err());
        assert!(BlockJacobiSmoother::new(&a, vec![vec![0, 1, 2]], 1, 0.0, None).is_err());
    }

    #[test]
    fn contract_on_diagonal_and_full_block() {
        let a = SparseOperator::from_dense(&DenseMatrix::from_diagonal(&[1.0, 5.0, 2.0]));
        let s = BlockJacobiSmoother::new(&a, vec![vec![0], vec![1, 2]], 1, 1.0, None).unwrap();
        assert!(smoother_contract_check(&s, &a).unwrap().holds);
        let a = spd3();
        let s = BlockJacobiSmoother::new(&a, vec![vec![0, 1, 2]], 1, 1.0, None).unwrap();
        let c = smoother_contract_check(&s, &a).unwrap();
        assert!(c.holds);
        assert!((c.lambda_min - (2.0 - 2f64.sqrt())).abs() < 1e-12);
    }
}
