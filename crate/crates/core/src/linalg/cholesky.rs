//! Cholesky factorizations: a sparse up-looking `L L^T` on a reverse
//! Cuthill-McKee ordering, and a dense variant for small blocks.

use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::{DenseMatrix, Operator, SparseOperator};

/// Pivots below this fraction of the original diagonal are treated as
/// loss of definiteness.
const PIVOT_TOL: f64 = 1e-12;

/// Sparse Cholesky factor `P A P^T = L L^T`, `L` stored by columns with the
/// diagonal first in each column.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CholeskyFactor {
    pub fn factor(a: &SparseOperator) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dims("cholesky", a.nrows(), a.ncols()));
        }
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &SparseOperator, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        if perm.len() != n {
            return Err(Error::dims("cholesky ordering", n, perm.len()));
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        // permuted lower-triangular rows: row k holds (j, a) with j <= k
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (k, row) in rows.iter_mut().enumerate() {
            let (cols, vals) = a.row(perm[k]);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = inv[c];
                if j <= k {
                    row.push((j, v));
                }
            }
            row.sort_by_key(|e| e.0);
        }

        let parent = etree(&rows);

        // symbolic: column counts via row subtrees
        let mut mark = vec![usize::MAX; n];
        let mut stack = Vec::new();
        let mut counts = vec![1usize; n];
        for k in 0..n {
            ereach(&rows[k], k, &parent, &mut mark, &mut stack);
            for &j in &stack {
                counts[j] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        let mut fill = col_ptr.clone();

        mark.iter_mut().for_each(|m| *m = usize::MAX);
        let mut x = vec![0.0; n];
        for k in 0..n {
            ereach(&rows[k], k, &parent, &mut mark, &mut stack);
            let mut diag = 0.0;
            for &(j, v) in &rows[k] {
                if j == k {
                    diag = v;
                } else {
                    x[j] = v;
                }
            }
            let orig_diag = diag;
            // stack is in topological order of the elimination tree
            for &j in stack.iter() {
                let ljj = vals[col_ptr[j]];
                let lkj = x[j] / ljj;
                x[j] = 0.0;
                for p in (col_ptr[j] + 1)..fill[j] {
                    x[row_idx[p]] -= vals[p] * lkj;
                }
                diag -= lkj * lkj;
                let p = fill[j];
                row_idx[p] = k;
                vals[p] = lkj;
                fill[j] += 1;
            }
            if !(diag > PIVOT_TOL * orig_diag.abs()) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: perm[k],
                    value: diag,
                });
            }
            let p = fill[k];
            row_idx[p] = k;
            vals[p] = diag.sqrt();
            fill[k] += 1;
        }
        Ok(Self {
            n,
            perm,
            col_ptr,
            row_idx,
            vals,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::dims("cholesky solve", self.n, b.len()));
        }
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        Ok(x)
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            let p0 = self.col_ptr[j];
            y[j] /= self.vals[p0];
            let yj = y[j];
            for p in (p0 + 1)..self.col_ptr[j + 1] {
                y[self.row_idx[p]] -= self.vals[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let p0 = self.col_ptr[j];
            let mut s = y[j];
            for p in (p0 + 1)..self.col_ptr[j + 1] {
                s -= self.vals[p] * y[self.row_idx[p]];
            }
            y[j] = s / self.vals[p0];
        }
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
    }
}

impl Operator for CholeskyFactor {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.solve_into(x, y);
    }
}

fn etree(rows: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let n = rows.len();
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for k in 0..n {
        for &(start, _) in &rows[k] {
            let mut i = start;
            while i != usize::MAX && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == usize::MAX {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` (excluding the diagonal), ascending.
/// Ascending column order is a valid elimination order for the lower
/// triangular solve.
fn ereach(
    row: &[(usize, f64)],
    k: usize,
    parent: &[usize],
    mark: &mut [usize],
    out: &mut Vec<usize>,
) {
    out.clear();
    mark[k] = k;
    for &(j, _) in row {
        if j >= k {
            continue;
        }
        let mut i = j;
        while mark[i] != k {
            out.push(i);
            mark[i] = k;
            i = parent[i];
        }
    }
    out.sort_unstable();
}

/// Reverse Cuthill-McKee ordering on the symmetric pattern of `a`.
pub(crate) fn reverse_cuthill_mckee(a: &SparseOperator) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nbrs = Vec::new();
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .unwrap();
        let start = pseudo_peripheral(a, seed, &visited);
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).0.iter().copied().filter(|&u| !visited[u]));
            nbrs.sort_by_key(|&u| (degree[u], u));
            for &u in &nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(a: &SparseOperator, seed: usize, blocked: &[bool]) -> usize {
    let mut root = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let (far, depth) = bfs_far(a, root, blocked);
        if depth <= ecc {
            break;
        }
        ecc = depth;
        root = far;
    }
    root
}

fn bfs_far(a: &SparseOperator, root: usize, blocked: &[bool]) -> (usize, usize) {
    let n = a.nrows();
    let mut level = vec![usize::MAX; n];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut last = (root, 0);
    while let Some(v) = queue.pop_front() {
        let lv = level[v];
        if lv > last.1 || (lv == last.1 && a.row(v).0.len() < a.row(last.0).0.len()) {
            last = (v, lv);
        }
        for &u in a.row(v).0 {
            if !blocked[u] && level[u] == usize::MAX {
                level[u] = lv + 1;
                queue.push_back(u);
            }
        }
    }
    last
}

/// Dense Cholesky `A = L L^T` (row-major lower factor).
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    pub fn factor(a: &DenseMatrix) -> Result<Self> {
        use rayon::prelude::*;
        if !a.is_square() {
            return Err(Error::dims("dense cholesky", a.nrows(), a.ncols()));
        }
        let n = a.nrows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                l[i * n + j] = a[(i, j)];
            }
        }
        for j in 0..n {
            let lj: Vec<f64> = l[j * n..j * n + j].to_vec();
            let d = l[j * n + j] - lj.iter().map(|v| v * v).sum::<f64>();
            if !(d > PIVOT_TOL * a[(j, j)].abs()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            let update = |ri: &mut [f64]| {
                let s: f64 = ri[..j].iter().zip(&lj).map(|(x, y)| x * y).sum();
                ri[j] = (ri[j] - s) / djj;
            };
            let rest = &mut l[(j + 1) * n..];
            if n - j > 192 {
                rest.par_chunks_mut(n).for_each(update);
            } else {
                rest.chunks_mut(n).for_each(update);
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `L^{-1} b`
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.l[i * n + i];
        }
        y
    }

    /// `L^{-T} y`
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[i * n + i];
            let xi = x[i];
            for k in 0..i {
                x[k] -= self.l[i * n + k] * xi;
            }
        }
        x
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::dims("dense cholesky solve", self.n, b.len()));
        }
        Ok(self.backward(&self.forward(b)))
    }

    /// The lower factor as a dense matrix.
    pub fn lower(&self) -> DenseMatrix {
        DenseMatrix::from_row_major(self.n, self.n, self.l.clone()).expect("square storage")
    }

    pub fn inverse(&self) -> DenseMatrix {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.backward(&self.forward(&e));
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        inv.symmetrize();
        inv
    }
}

impl Operator for DenseCholesky {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.backward(&self.forward(x)));
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;

    fn random_spd(n: usize, seed: u64) -> SparseOperator {
        // sparse random SPD: random symmetric pattern, diagonally dominant
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        let mut rowsum = vec![0.0; n];
        for i in 0..n {
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                if j == i {
                    continue;
                }
                let v: f64 = rng.gen_range(-1.0..1.0);
                trip.push((i, j, v));
                trip.push((j, i, v));
                rowsum[i] += v.abs();
                rowsum[j] += v.abs();
            }
        }
        for (i, s) in rowsum.iter().enumerate() {
            trip.push((i, i, s + rng.gen_range(0.1..1.0)));
        }
        SparseOperator::from_triplets(n, n, &trip)
            .unwrap()
            .symmetrized()
            .unwrap()
    }

    #[test]
    fn scalar_and_two_by_two() {
        let a = SparseOperator::from_triplets(1, 1, &[(0, 0, 4.0)]).unwrap();
        let f = CholeskyFactor::factor(&a).unwrap();
        assert_eq!(f.solve(&[8.0]).unwrap(), vec![2.0]);

        let a = SparseOperator::from_dense(
            &DenseMatrix::from_rows(&[&[2.0, -1.0], &[-1.0, 2.0]]).unwrap(),
        );
        let x = CholeskyFactor::factor(&a)
            .unwrap()
            .solve(&[1.0, 0.0])
            .unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((x[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = SparseOperator::from_dense(
            &DenseMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap(),
        );
        assert!(matches!(
            CholeskyFactor::factor(&a),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let z = SparseOperator::from_triplets(2, 2, &[(1, 1, 1.0)]).unwrap();
        assert!(matches!(
            CholeskyFactor::factor(&z),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let d = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert!(DenseCholesky::factor(&d).is_err());
    }

    #[test]
    fn reproduces_identity_columns_on_random_spd() {
        for (n, seed) in [(1usize, 1u64), (5, 2), (37, 3), (120, 4), (200, 5)] {
            let a = random_spd(n, seed);
            let f = CholeskyFactor::factor(&a).unwrap();
            let dense = DenseCholesky::factor(&a.to_dense()).unwrap();
            let mut e = vec![0.0; n];
            for j in 0..n {
                e[j] = 1.0;
                for x in [f.solve(&e).unwrap(), dense.solve(&e).unwrap()] {
                    let ax = a.spmv(&x).unwrap();
                    for (i, v) in ax.iter().enumerate() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((v - want).abs() < 1e-12, "n={n} col={j}");
                    }
                }
                e[j] = 0.0;
            }
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = random_spd(50, 9);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
