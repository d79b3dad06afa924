use darcy_core::linalg::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn random_spd(n: usize, seed: u64) -> DenseMatrix {
    let mut s = seed | 1;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let b: Vec<f64> = (0..n * n).map(|_| next()).collect();
    let b = DMatrix::from_row_slice(n, n, &b);
    let a = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
    DenseMatrix::from_row_major(n, n, a.transpose().as_slice().to_vec()).unwrap()
}

fn path_laplacian(n: usize, w: &[f64]) -> SparseOperator {
    let mut t = Vec::new();
    for i in 0..n - 1 {
        let c = w[i % w.len()];
        t.extend([(i, i, c), (i + 1, i + 1, c), (i, i + 1, -c), (i + 1, i, -c)]);
    }
    SparseOperator::from_triplets(n, n, &t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigen_residuals(n in 2usize..24, seed in any::<u64>()) {
        let a = random_spd(n, seed);
        let e = sym_eig(&a).unwrap();
        for k in 0..n {
            let v = e.eigenvector(k);
            let av = a.matvec(&v).unwrap();
            let r: f64 = av.iter().zip(&v).map(|(x, y)| (x - e.eigenvalues[k] * y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(r <= 1e-10 * a.norm_inf());
        }
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn generalized_eigen_b_orthonormal(n in 2usize..16, seed in any::<u64>()) {
        let a = random_spd(n, seed);
        let d: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin().abs()).collect();
        let b = DenseMatrix::from_diagonal(&d);
        let e = dense_sym_eig(&a, &b).unwrap();
        for i in 0..n {
            let vi = e.eigenvector(i);
            let av = a.matvec(&vi).unwrap();
            for k in 0..n {
                prop_assert!((av[k] - e.eigenvalues[i] * d[k] * vi[k]).abs() <= 1e-9 * a.norm_inf());
            }
            for j in 0..n {
                let vj = e.eigenvector(j);
                let m: f64 = (0..n).map(|k| vi[k] * d[k] * vj[k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((m - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn cholesky_solves(n in 1usize..30, seed in any::<u64>()) {
        let a = random_spd(n, seed);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = DenseCholesky::factor(&a).unwrap().solve(&b).unwrap();
        let sx = CholeskyFactor::factor(&SparseOperator::from_dense(&a)).unwrap().solve(&b).unwrap();
        let ax = a.matvec(&x).unwrap();
        for i in 0..n {
            prop_assert!((ax[i] - b[i]).abs() <= 1e-9 * a.norm_inf());
            prop_assert!((x[i] - sx[i]).abs() <= 1e-8 * (1.0 + x[i].abs()));
        }
    }

    /// Deflated and grounded solves against a pseudo-inverse from the nalgebra symmetric eigendecomposition.
    #[test]
    fn pseudo_inverse_matches_spectral(n in 3usize..20, w1 in 0.1f64..10.0, w2 in 0.1f64..10.0) {
        let a = path_laplacian(n, &[w1, w2, 1.0]);
        let ns = vec![1.0 / (n as f64).sqrt(); n];
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).sin()).collect();
        let dense = DMatrix::from_row_slice(n, n, a.to_dense().values());
        let e = dense.symmetric_eigen();
        let inv = e.eigenvalues.map(|l| if l.abs() > 1e-10 { 1.0 / l } else { 0.0 });
        let pinv = &e.eigenvectors * DMatrix::from_diagonal(&inv) * e.eigenvectors.transpose();
        let want = pinv * nalgebra::DVector::from_vec(b.clone());
        let x = deflated_solve(&a, &ns, &b).unwrap();
        let g = GroundedSolver::new(&a, &ns).unwrap().apply_vec(&b);
        let scale = want.amax();
        for i in 0..n {
            prop_assert!((x[i] - want[i]).abs() <= 1e-8 * scale);
            prop_assert!((g[i] - want[i]).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn sparse_dense_agree(n in 2usize..20, seed in any::<u64>()) {
        let a = random_spd(n, seed);
        let s = SparseOperator::from_dense(&a);
        let x: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let y1 = s.spmv(&x).unwrap();
        let y2 = a.matvec(&x).unwrap();
        for i in 0..n {
            prop_assert!((y1[i] - y2[i]).abs() <= 1e-13 * a.norm_inf());
        }
        prop_assert!(s.clone().into_symmetric().unwrap().is_symmetric());
        let gal = s.galerkin(&SparseOperator::identity(n)).unwrap();
        prop_assert!(gal.to_dense().values().iter().zip(a.values()).all(|(p, q)| (p - q).abs() <= 1e-13 * a.norm_inf()));
    }
}

#[test]
fn tridiagonal_matches_dense() {
    let d = [2.0, 3.0, 1.0, 4.0];
    let o = [0.5, -0.7, 0.2];
    let mut rows = vec![vec![0.0; 4]; 4];
    for i in 0..4 {
        rows[i][i] = d[i];
        if i < 3 {
            rows[i][i + 1] = o[i];
            rows[i + 1][i] = o[i];
        }
    }
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let dense = DenseMatrix::from_rows(&refs).unwrap();
    let a = sym_eigenvalues(&dense).unwrap();
    let b = tridiagonal_eigenvalues(&d, &o).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn not_spd_is_reported() {
    let rows: [&[f64]; 2] = [&[1.0, 2.0], &[2.0, 1.0]];
    let a = DenseMatrix::from_rows(&rows).unwrap();
    assert!(DenseCholesky::factor(&a).is_err());
    assert!(CholeskyFactor::factor(&SparseOperator::from_dense(&a)).is_err());
}
