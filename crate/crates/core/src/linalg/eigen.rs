//! Symmetric eigensolvers: Householder tridiagonalization followed by the
//! implicit-shift QL iteration, plus the generalized variants built on it.

use crate::error::{Error, Result};

use super::{DenseCholesky, DenseMatrix};

const SYMMETRY_TOL: f64 = 1e-12;
const MAX_QL_SWEEPS: usize = 60;

/// Eigenpairs with eigenvalues ascending and eigenvectors stored as the
/// columns of `eigenvectors`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k)
    }
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::dims("symmetric eigenproblem", a.nrows(), a.ncols()));
    }
    let (dev, i, j) = a.max_asymmetry();
    if dev > SYMMETRY_TOL * a.norm_inf().max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric {
            row: i,
            col: j,
            deviation: dev,
        });
    }
    Ok(())
}

/// Standard symmetric eigenproblem `A w = lambda w`.
pub fn sym_eig(a: &DenseMatrix) -> Result<EigenDecomposition> {
    check_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: vec![],
            eigenvectors: DenseMatrix::zeros(0, 0),
        });
    }
    let mut v = symmetric_copy(a);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e, true);
    // rows of z are the eigenvector candidates, so QL rotations touch contiguous memory
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            z[j * n + i] = v[i * n + j];
        }
    }
    tql2(n, &mut d, &mut e, Some(&mut z))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| d[x].total_cmp(&d[y]));
    let eigenvalues = order.iter().map(|&k| d[k]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let zk = &z[k * n..(k + 1) * n];
        for i in 0..n {
            vectors[(i, col)] = zk[i];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut v = symmetric_copy(a);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e, false);
    tql2(n, &mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (`off.len() == diag.len() - 1`), ascending.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(vec![]);
    }
    if off.len() + 1 != n {
        return Err(Error::dims("tridiagonal off-diagonal", n - 1, off.len()));
    }
    let mut d = diag.to_vec();
    // tql2 expects the subdiagonal in e[1..n]
    let mut e = vec![0.0; n];
    e[1..].copy_from_slice(off);
    tql2(n, &mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Generalized problem `A w = lambda B w` with `B` diagonal and strictly
/// positive. Solved through the similarity `B^{-1/2} A B^{-1/2}`; the
/// returned vectors are `B`-orthonormal.
pub fn dense_sym_eig(a: &DenseMatrix, b: &DenseMatrix) -> Result<EigenDecomposition> {
    check_symmetric(a)?;
    let n = a.nrows();
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::dims("generalized eigenproblem rhs", n, b.nrows()));
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && b[(i, j)] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "right-hand operator must be diagonal, found b({i},{j}) = {:e}",
                    b[(i, j)]
                )));
            }
        }
    }
    let diag = b.diagonal();
    dense_sym_eig_diag(a, &diag)
}

pub(crate) fn dense_sym_eig_diag(a: &DenseMatrix, b_diag: &[f64]) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let mut inv_sqrt = Vec::with_capacity(n);
    for (i, &bi) in b_diag.iter().enumerate() {
        if !(bi > 0.0) {
            return Err(Error::NonPositive {
                what: "right-hand diagonal entry",
                index: i,
                value: bi,
            });
        }
        inv_sqrt.push(1.0 / bi.sqrt());
    }
    let mut c = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = inv_sqrt[i] * a[(i, j)] * inv_sqrt[j];
        }
    }
    c.symmetrize();
    let mut eig = sym_eig(&c)?;
    for i in 0..n {
        for k in 0..n {
            eig.eigenvectors[(i, k)] *= inv_sqrt[i];
        }
    }
    Ok(eig)
}

/// Generalized problem `A w = lambda B w` with `B` symmetric positive
/// definite (dense). Vectors are `B`-orthonormal.
pub fn sym_eig_generalized(a: &DenseMatrix, b: &DenseMatrix) -> Result<EigenDecomposition> {
    check_symmetric(a)?;
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::dims("generalized eigenproblem rhs", n, b.nrows()));
    }
    let chol = DenseCholesky::factor(b)?;
    // C = L^{-1} A L^{-T}
    let mut y = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let col = chol.forward(&a.column(j));
        for i in 0..n {
            y[(i, j)] = col[i];
        }
    }
    // y = L^{-1} A; C = (L^{-1} (L^{-1} A)^T)^T = L^{-1} A L^{-T}
    let yt = y.transpose();
    let mut c = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let col = chol.forward(&yt.column(j));
        for i in 0..n {
            c[(j, i)] = col[i];
        }
    }
    c.symmetrize();
    let eig = sym_eig(&c)?;
    let mut vectors = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let w = chol.backward(&eig.eigenvectors.column(k));
        for i in 0..n {
            vectors[(i, k)] = w[i];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues: eig.eigenvalues,
        eigenvectors: vectors,
    })
}

fn symmetric_copy(a: &DenseMatrix) -> Vec<f64> {
    let n = a.nrows();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    v
}

/// Householder reduction to tridiagonal form (EISPACK tred2 ordering).
/// On exit `d` holds the diagonal, `e[1..]` the subdiagonal and, when
/// `accumulate` is set, `v` the orthogonal transformation.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64], accumulate: bool) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        for j in 0..n {
            d[j] = v[at(j, j)];
        }
        e[0] = 0.0;
        return;
    }

    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on a symmetric tridiagonal matrix. `z`, when given,
/// holds the accumulated transformation with one vector per row.
fn tql2(n: usize, d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > MAX_QL_SWEEPS {
                    return Err(Error::EigenNoConvergence { index: l });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        let (lo, hi) = z.split_at_mut((i + 1) * n);
                        let zi = &mut lo[i * n..];
                        let zi1 = &mut hi[..n];
                        for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                            let hv = *b;
                            *b = s * *a + c * hv;
                            *a = c * *a - s * hv;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &DenseMatrix, b: &[f64], lam: f64, w: &[f64]) -> f64 {
        let aw = a.matvec(w).unwrap();
        aw.iter()
            .zip(b.iter().zip(w))
            .map(|(x, (bi, wi))| (x - lam * bi * wi).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn two_by_two_laplacian_with_mass() {
        let a = DenseMatrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]).unwrap();
        let b = DenseMatrix::from_diagonal(&[2.0, 2.0]);
        let eig = dense_sym_eig(&a, &b).unwrap();
        // det(A - lambda B) = (1 - 2l)^2 - 1 = 0  =>  l in {0, 1}
        assert!(eig.eigenvalues[0].abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-14);
        let w0 = eig.eigenvector(0);
        assert!((w0[0] - w0[1]).abs() < 1e-14);
        // B-normalized: 2 (w0^2 + w1^2) = 1
        assert!((2.0 * (w0[0] * w0[0] + w0[1] * w0[1]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_pair_gives_unit_spectrum() {
        let i = DenseMatrix::identity(5);
        let eig = dense_sym_eig(&i, &i).unwrap();
        assert!(eig.eigenvalues.iter().all(|l| (l - 1.0).abs() < 1e-14));
    }

    #[test]
    fn diagonal_pair() {
        let a = DenseMatrix::from_diagonal(&[1.0, 4.0]);
        let b = DenseMatrix::from_diagonal(&[1.0, 2.0]);
        let eig = dense_sym_eig(&a, &b).unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonsymmetric_and_nonpositive_mass() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]).unwrap();
        assert!(matches!(
            dense_sym_eig(&a, &DenseMatrix::identity(2)),
            Err(Error::NotSymmetric { .. })
        ));
        let s = DenseMatrix::identity(2);
        let b = DenseMatrix::from_diagonal(&[1.0, 0.0]);
        assert!(matches!(
            dense_sym_eig(&s, &b),
            Err(Error::NonPositive { .. })
        ));
    }

    #[test]
    fn residual_and_orthonormality_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 3, 7, 20, 45] {
            let mut a = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            let bd: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
            let b = DenseMatrix::from_diagonal(&bd);
            let eig = dense_sym_eig(&a, &b).unwrap();
            let na = a.norm_inf();
            let nb = b.norm_inf();
            for k in 0..n {
                let lam = eig.eigenvalues[k];
                let w = eig.eigenvector(k);
                assert!(residual(&a, &bd, lam, &w) <= 1e-10 * (na + lam.abs() * nb));
                if k > 0 {
                    assert!(eig.eigenvalues[k - 1] <= lam);
                }
            }
            for p in 0..n {
                for q in 0..n {
                    let g: f64 = (0..n)
                        .map(|i| eig.eigenvectors[(i, p)] * bd[i] * eig.eigenvectors[(i, q)])
                        .sum();
                    let want = if p == q { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn values_only_path_matches_full_path() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let full = sym_eig(&a).unwrap();
        let vals = sym_eigenvalues(&a).unwrap();
        for (x, y) in full.eigenvalues.iter().zip(&vals) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_path_laplacian() {
        // path Laplacian with Dirichlet ends: 2 - 2 cos(k pi / (n+1))
        let n = 9;
        let d = vec![2.0; n];
        let o = vec![-1.0; n - 1];
        let vals = tridiagonal_eigenvalues(&d, &o).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let want = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - want).abs() < 1e-13);
        }
    }

    #[test]
    fn generalized_spd_pair() {
        let a = DenseMatrix::from_rows(&[&[2.0, -1.0], &[-1.0, 2.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let eig = sym_eig_generalized(&a, &b).unwrap();
        // det(A - l B) = (2-2l)^2 - (1+l)^2  =>  l = 1/3, 3
        assert!((eig.eigenvalues[0] - 1.0 / 3.0).abs() < 1e-13);
        assert!((eig.eigenvalues[1] - 3.0).abs() < 1e-13);
    }
}
