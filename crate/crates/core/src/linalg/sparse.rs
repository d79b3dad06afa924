use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{DenseMatrix, Operator};

const PARALLEL_ROWS: usize = 16_384;

/// Compressed-row sparse matrix. Column indices are strictly increasing
/// within each row; operators flagged symmetric store `a(i,j) == a(j,i)`
/// bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != nrows + 1 {
            return Err(Error::dims("row offsets", nrows + 1, row_offsets.len()));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::MalformedSparse(
                "row offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::dims(
                "sparse values",
                col_indices.len(),
                values.len(),
            ));
        }
        for i in 0..nrows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if hi < lo {
                return Err(Error::MalformedSparse(format!(
                    "row offsets decrease at row {i}"
                )));
            }
            let cols = &col_indices[lo..hi];
            for (k, &c) in cols.iter().enumerate() {
                if c >= ncols {
                    return Err(Error::OutOfBounds {
                        what: "column",
                        index: c,
                        bound: ncols,
                    });
                }
                if k > 0 && cols[k - 1] >= c {
                    return Err(Error::MalformedSparse(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// input order.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows {
                return Err(Error::OutOfBounds {
                    what: "row",
                    index: i,
                    bound: nrows,
                });
            }
            if j >= ncols {
                return Err(Error::OutOfBounds {
                    what: "column",
                    index: j,
                    bound: ncols,
                });
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            let p = next[i];
            cols[p] = j;
            vals[p] = v;
            next[i] += 1;
        }
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_indices.len() > row_offsets[i] && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: false,
        };
        m.symmetric = true;
        m
    }

    pub fn from_dense(a: &DenseMatrix) -> Self {
        let mut trip = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    trip.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &trip).expect("indices in range")
    }

    /// Validates exact symmetry and flags the operator.
    pub fn into_symmetric(mut self) -> Result<Self> {
        if self.nrows != self.ncols {
            return Err(Error::dims("symmetric operator", self.nrows, self.ncols));
        }
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let w = self.get(j, i);
                if w != v {
                    return Err(Error::NotSymmetric {
                        row: i,
                        col: j,
                        deviation: (w - v).abs(),
                    });
                }
            }
        }
        self.symmetric = true;
        Ok(self)
    }

    /// Averages `a(i,j)` and `a(j,i)` over the union pattern and flags the
    /// result symmetric.
    pub fn symmetrized(&self) -> Result<Self> {
        if self.nrows != self.ncols {
            return Err(Error::dims("symmetrize", self.nrows, self.ncols));
        }
        let t = self.transpose();
        let mut trip = Vec::with_capacity(2 * self.nnz());
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            trip.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, 0.5 * x)));
            let (c, v) = t.row(i);
            trip.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, 0.5 * x)));
        }
        let mut m = Self::from_triplets(self.nrows, self.ncols, &trip)?;
        // summation order differs between (i,j) and (j,i); copy the upper value down
        for i in 0..m.nrows {
            for p in m.row_offsets[i]..m.row_offsets[i + 1] {
                let j = m.col_indices[p];
                if j < i {
                    m.values[p] = m.get(j, i);
                }
            }
        }
        m.symmetric = true;
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    /// Max absolute row sum; the norm scale used by relative tolerances.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::dims("spmv", self.ncols, x.len()));
        }
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y <- A x` without dimension checks beyond debug assertions.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        let row_dot = |i: usize| -> f64 {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut s = 0.0;
            for p in lo..hi {
                s += self.values[p] * x[self.col_indices[p]];
            }
            s
        };
        if self.nrows >= PARALLEL_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(i);
            }
        }
    }

    /// `y <- A^T x`
    pub fn spmv_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.nrows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                let p = next[j];
                cols[p] = i;
                vals[p] = x;
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_offsets: counts,
            col_indices: cols,
            values: vals,
            symmetric: self.symmetric,
        }
    }

    /// Sparse product `self * other` (Gustavson, dense accumulator).
    pub fn matmul(&self, other: &SparseOperator) -> Result<SparseOperator> {
        if self.ncols != other.nrows {
            return Err(Error::dims("sparse matmul", self.ncols, other.nrows));
        }
        let n = other.ncols;
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..self.nrows)
            .into_par_iter()
            .map_init(
                || (vec![0.0; n], vec![usize::MAX; n]),
                |(acc, mark), i| {
                    let mut pattern = Vec::new();
                    let (ca, va) = self.row(i);
                    for (&k, &a) in ca.iter().zip(va) {
                        let (cb, vb) = other.row(k);
                        for (&j, &b) in cb.iter().zip(vb) {
                            if mark[j] != i {
                                mark[j] = i;
                                acc[j] = 0.0;
                                pattern.push(j);
                            }
                            acc[j] += a * b;
                        }
                    }
                    pattern.sort_unstable();
                    let vals = pattern.iter().map(|&j| acc[j]).collect();
                    (pattern, vals)
                },
            )
            .collect();
        let mut row_offsets = Vec::with_capacity(self.nrows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for (c, v) in rows {
            col_indices.extend(c);
            values.extend(v);
            row_offsets.push(col_indices.len());
        }
        Ok(SparseOperator {
            nrows: self.nrows,
            ncols: n,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        })
    }

    /// Galerkin triple product `R A R^T` for `self = A`, returned exactly
    /// symmetric.
    pub fn galerkin(&self, r: &SparseOperator) -> Result<SparseOperator> {
        if r.ncols != self.nrows {
            return Err(Error::dims("galerkin restriction", self.nrows, r.ncols));
        }
        let art = self.matmul(&r.transpose())?;
        r.matmul(&art)?.symmetrized()
    }

    /// Principal submatrix on sorted `indices`, renumbered locally.
    pub fn principal_submatrix(&self, indices: &[usize]) -> SparseOperator {
        let mut local = std::collections::HashMap::with_capacity(indices.len());
        for (k, &g) in indices.iter().enumerate() {
            local.insert(g, k);
        }
        let mut row_offsets = Vec::with_capacity(indices.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for &g in indices {
            let (c, v) = self.row(g);
            let mut entries: Vec<(usize, f64)> = c
                .iter()
                .zip(v)
                .filter_map(|(j, x)| local.get(j).map(|&lj| (lj, *x)))
                .collect();
            entries.sort_by_key(|e| e.0);
            for (lj, x) in entries {
                col_indices.push(lj);
                values.push(x);
            }
            row_offsets.push(col_indices.len());
        }
        SparseOperator {
            nrows: indices.len(),
            ncols: indices.len(),
            row_offsets,
            col_indices,
            values,
            symmetric: self.symmetric,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                d[(i, j)] = x;
            }
        }
        d
    }
}

impl Operator for SparseOperator {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y);
    }
}
