//! Preconditioned CG and right-preconditioned restarted GMRES, spectrum
//! estimates of preconditioned operators and the dense theory report.

use std::io::Write;
use std::time::Instant;

use crate::coarse::SpectralSpaces;
use crate::error::{Error, Result};
use crate::grid::GridHierarchy;
use crate::linalg::{
    axpy, complement_basis, dot, norm2, project_out, sym_eig_generalized, sym_eigenvalues,
    to_dense, tridiagonal_eigenvalues, DenseCholesky, DenseMatrix, Operator, SparseOperator,
};
use crate::mgprec::{dense_smoother_matrix, Mode, PrecConfig, ThreeGridPreconditioner};
use crate::tpfa::PressureSystem;

/// Largest order for dense spectral computations.
pub const DENSE_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cg,
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub rtol: f64,
    pub max_iters: usize,
    pub restart: usize,
    /// Collect CG coefficients and report a Lanczos spectrum estimate.
    pub lanczos: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Cg,
            rtol: 1e-6,
            max_iters: 1000,
            restart: 30,
            lanczos: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rtol {} outside (0, 1)",
                self.rtol
            )));
        }
        if self.max_iters == 0 || self.restart == 0 {
            return Err(Error::InvalidArgument(
                "max_iters and restart must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub cond: f64,
}

impl SpectrumEstimate {
    fn from_extremes(lambda_min: f64, lambda_max: f64) -> Self {
        Self {
            lambda_min,
            lambda_max,
            cond: lambda_max / lambda_min,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residuals, starting with the initial one.
    pub history: Vec<f64>,
    pub converged: bool,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    pub spectrum: Option<SpectrumEstimate>,
}

impl SolveReport {
    pub fn final_relres(&self) -> f64 {
        self.history.last().copied().unwrap_or(0.0)
    }

    pub fn write_history_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,relres")?;
        for (k, r) in self.history.iter().enumerate() {
            writeln!(out, "{k},{r:e}")?;
        }
        Ok(())
    }
}

fn check_len(context: &'static str, n: usize, v: &[f64]) -> Result<()> {
    if v.len() != n {
        return Err(Error::dims(context, n, v.len()));
    }
    Ok(())
}

/// Preconditioned conjugate gradients. With `nullspace` (unit vector) the
/// right-hand side and every iterate are kept orthogonal to it.
pub fn pcg<A, P>(
    a: &A,
    p: &P,
    b: &[f64],
    x0: Option<&[f64]>,
    nullspace: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)>
where
    A: Operator + ?Sized,
    P: Operator + ?Sized,
{
    cfg.validate()?;
    let n = a.dim();
    check_len("right-hand side", n, b)?;
    if p.dim() != n {
        return Err(Error::dims("preconditioner", n, p.dim()));
    }
    let start = Instant::now();
    let project = |v: &mut [f64]| {
        if let Some(ns) = nullspace {
            project_out(v, ns);
        }
    };
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let bnorm = norm2(&rhs);
    let mut x = match x0 {
        Some(x0) => {
            check_len("initial guess", n, x0)?;
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    project(&mut x);
    let mut report = SolveReport::default();
    if bnorm == 0.0 {
        report.converged = true;
        report.history.push(0.0);
        return Ok((vec![0.0; n], report));
    }
    let mut r = a.apply_vec(&x);
    for (ri, bi) in r.iter_mut().zip(&rhs) {
        *ri = bi - *ri;
    }
    project(&mut r);
    report.history.push(norm2(&r) / bnorm);
    if report.history[0] <= cfg.rtol {
        report.converged = true;
        report.solve_seconds = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let mut z = p.apply_vec(&r);
    project(&mut z);
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut ad = vec![0.0; n];
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    for it in 1..=cfg.max_iters {
        if !(rz > 0.0) {
            return Err(Error::Indefinite {
                iteration: it,
                curvature: rz,
            });
        }
        a.apply(&d, &mut ad);
        let curvature = dot(&d, &ad);
        if !(curvature > 0.0) {
            return Err(Error::Indefinite {
                iteration: it,
                curvature,
            });
        }
        let alpha = rz / curvature;
        axpy(alpha, &d, &mut x);
        axpy(-alpha, &ad, &mut r);
        project(&mut x);
        project(&mut r);
        alphas.push(alpha);
        let rel = norm2(&r) / bnorm;
        report.history.push(rel);
        report.iterations = it;
        if rel <= cfg.rtol {
            report.converged = true;
            break;
        }
        p.apply(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        betas.push(beta);
        rz = rz_new;
        for (di, zi) in d.iter_mut().zip(&z) {
            *di = zi + beta * *di;
        }
    }
    if cfg.lanczos && !alphas.is_empty() {
        report.spectrum = Some(lanczos_estimate(&alphas, &betas)?);
    }
    report.solve_seconds = start.elapsed().as_secs_f64();
    Ok((x, report))
}

/// Extreme eigenvalues of the Lanczos tridiagonal built from CG
/// coefficients.
pub fn lanczos_estimate(alphas: &[f64], betas: &[f64]) -> Result<SpectrumEstimate> {
    let k = alphas.len();
    let mut diag = Vec::with_capacity(k);
    let mut off = Vec::with_capacity(k.saturating_sub(1));
    for j in 0..k {
        let mut t = 1.0 / alphas[j];
        if j > 0 {
            t += betas[j - 1] / alphas[j - 1];
        }
        diag.push(t);
        if j + 1 < k {
            off.push(betas[j].sqrt() / alphas[j]);
        }
    }
    let eigs = tridiagonal_eigenvalues(&diag, &off)?;
    Ok(SpectrumEstimate::from_extremes(eigs[0], eigs[k - 1]))
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt.
pub fn gmres<A, P>(
    a: &A,
    p: &P,
    b: &[f64],
    x0: Option<&[f64]>,
    nullspace: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)>
where
    A: Operator + ?Sized,
    P: Operator + ?Sized,
{
    cfg.validate()?;
    let n = a.dim();
    check_len("right-hand side", n, b)?;
    if p.dim() != n {
        return Err(Error::dims("preconditioner", n, p.dim()));
    }
    let start = Instant::now();
    let project = |v: &mut [f64]| {
        if let Some(ns) = nullspace {
            project_out(v, ns);
        }
    };
    let mut rhs = b.to_vec();
    project(&mut rhs);
    let bnorm = norm2(&rhs);
    let mut x = match x0 {
        Some(x0) => {
            check_len("initial guess", n, x0)?;
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    project(&mut x);
    let mut report = SolveReport::default();
    if bnorm == 0.0 {
        report.converged = true;
        report.history.push(0.0);
        return Ok((vec![0.0; n], report));
    }
    let m = cfg.restart.min(n.max(1));
    let mut total = 0;
    loop {
        let mut r = a.apply_vec(&x);
        for (ri, bi) in r.iter_mut().zip(&rhs) {
            *ri = bi - *ri;
        }
        project(&mut r);
        let beta = norm2(&r);
        let rel = beta / bnorm;
        if report.history.is_empty() {
            report.history.push(rel);
        } else if let Some(last) = report.history.last_mut() {
            *last = rel;
        }
        if rel <= cfg.rtol {
            report.converged = true;
            break;
        }
        if total >= cfg.max_iters {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < cfg.max_iters {
            let mut z = p.apply_vec(&v[k]);
            project(&mut z);
            let mut w = a.apply_vec(&z);
            project(&mut w);
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                axpy(-h[i][k], &v[i], &mut w);
            }
            h[k + 1][k] = norm2(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            let hk1 = h[k + 1][k];
            h[k][k] = cs[k] * h[k][k] + sn[k] * hk1;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k += 1;
            let est = g[k].abs() / bnorm;
            report.history.push(est);
            let breakdown = hk1 <= 1e-14 * beta;
            if est <= cfg.rtol || breakdown {
                break;
            }
            v.push(w.iter().map(|wi| wi / hk1).collect());
        }
        // back substitution and update x += P^{-1} V y
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in (i + 1)..k {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        let mut u = vec![0.0; n];
        for (vi, yi) in v.iter().zip(&y) {
            axpy(*yi, vi, &mut u);
        }
        let mut pu = p.apply_vec(&u);
        project(&mut pu);
        axpy(1.0, &pu, &mut x);
        project(&mut x);
        if k == 0 {
            break;
        }
    }
    report.iterations = total;
    report.solve_seconds = start.elapsed().as_secs_f64();
    Ok((x, report))
}

pub fn solve<A, P>(
    a: &A,
    p: &P,
    b: &[f64],
    x0: Option<&[f64]>,
    nullspace: Option<&[f64]>,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)>
where
    A: Operator + ?Sized,
    P: Operator + ?Sized,
{
    match cfg.method {
        Method::Cg => pcg(a, p, b, x0, nullspace, cfg),
        Method::Gmres => gmres(a, p, b, x0, nullspace, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    Dense,
    Lanczos,
}

/// Eigenvalues of `X` restricted to the complement of `nullspace`:
/// `Q^T X Q` with `Q` an orthonormal complement basis.
pub fn restrict(x: &DenseMatrix, q: Option<&DenseMatrix>) -> Result<DenseMatrix> {
    match q {
        Some(q) => {
            let mut r = x.congruence(q)?;
            r.symmetrize();
            Ok(r)
        }
        None => Ok(x.clone()),
    }
}

/// Ascending eigenvalues of `P^{-1} A` (on the complement of the kernel),
/// from dense `A` and `P^{-1}`, via `L^T P^{-1} L` where `A = L L^T`.
pub fn dense_preconditioned_eigenvalues(
    a: &DenseMatrix,
    pinv: &DenseMatrix,
    nullspace: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = a.nrows();
    if n > DENSE_CAP {
        return Err(Error::SizeCap { n, cap: DENSE_CAP });
    }
    let q = nullspace.map(complement_basis);
    let ah = restrict(a, q.as_ref())?;
    let mut ph = restrict(pinv, q.as_ref())?;
    ph.symmetrize();
    let l = DenseCholesky::factor(&ah)?.lower();
    let mut t = ph.congruence(&l)?;
    t.symmetrize();
    sym_eigenvalues(&t)
}

pub fn estimate_condition<P: Operator + ?Sized>(
    a: &SparseOperator,
    p: &P,
    nullspace: Option<&[f64]>,
    mode: EstimateMode,
) -> Result<SpectrumEstimate> {
    let n = a.nrows();
    match mode {
        EstimateMode::Dense => {
            if n > DENSE_CAP {
                return Err(Error::SizeCap { n, cap: DENSE_CAP });
            }
            let pinv = to_dense(p);
            let eigs = dense_preconditioned_eigenvalues(&a.to_dense(), &pinv, nullspace)?;
            Ok(SpectrumEstimate::from_extremes(eigs[0], eigs[eigs.len() - 1]))
        }
        EstimateMode::Lanczos => {
            let b: Vec<f64> = (0..n)
                .map(|i| ((i as f64 + 1.0) * 0.618_033_988_75).fract() - 0.5)
                .collect();
            let cfg = SolverConfig {
                rtol: 1e-10,
                max_iters: 500.min(n.max(1)),
                lanczos: true,
                ..SolverConfig::default()
            };
            let (_, report) = pcg(a, p, &b, None, nullspace, &cfg)?;
            report
                .spectrum
                .ok_or_else(|| Error::InvalidArgument("no Lanczos coefficients".into()))
        }
    }
}

/// Dense evaluation of the two-grid theory on a small instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub c_s: f64,
    /// `λ_max` of `M̃ x = λ A x`.
    pub c_star: f64,
    pub c_lambda: f64,
    pub c_c_lambda: f64,
    pub lambda_max_mtilde_c: f64,
    pub smoother_lambda_min: f64,
    pub coarse_smoother_lambda_min: f64,
    pub exact: SpectrumEstimate,
    pub inexact: SpectrumEstimate,
    pub bc: SpectrumEstimate,
    /// `max_v min_vc ||v - R_c^T v_c||²_M̃ / ||v||²_A` by direct projection.
    pub maxmin_value: f64,
    pub maxmin_relative_error: f64,
    pub itg_upper_slack: f64,
    pub itg_lower_slack: f64,
    pub tg_cond_bound: f64,
    pub tg_cond_slack: f64,
    pub itg_cond_bound: f64,
    pub itg_cond_slack: f64,
}

/// Constant in the bound `A <= C_s sum_i E_i^T S_i E_i`.
pub const C_S: f64 = 8.0;

fn mtilde(m: &DenseMatrix, a: &DenseMatrix) -> Result<(DenseMatrix, f64)> {
    let mut t = m.clone();
    t.scale(2.0);
    t.add_scaled(-1.0, a)?;
    t.symmetrize();
    let lambda_min = sym_eigenvalues(&t)?[0];
    if !(lambda_min > 0.0) {
        return Err(Error::SmootherContract { lambda_min });
    }
    let tinv = DenseCholesky::factor(&t)?.inverse();
    let mut mt = m.matmul(&tinv.matmul(m)?)?;
    mt.symmetrize();
    Ok((mt, lambda_min))
}

fn max_generalized(x: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    let e = sym_eig_generalized(x, y)?;
    Ok(e.eigenvalues[e.eigenvalues.len() - 1])
}

pub fn verify_theory(
    sys: &PressureSystem,
    grid: &GridHierarchy,
    spaces: &SpectralSpaces,
    cfg: PrecConfig,
) -> Result<TheoryReport> {
    let n = sys.a.nrows();
    if n > DENSE_CAP {
        return Err(Error::SizeCap { n, cap: DENSE_CAP });
    }
    let inexact = ThreeGridPreconditioner::new(
        sys,
        spaces,
        grid,
        PrecConfig {
            mode: Mode::Inexact,
            ..cfg
        },
    )?;
    let exact = ThreeGridPreconditioner::new(
        sys,
        spaces,
        grid,
        PrecConfig {
            mode: Mode::Exact,
            ..cfg
        },
    )?;
    let ns = sys.nullspace.as_deref();
    let ns_c = spaces.c.nullspace.as_deref();
    let q = ns.map(complement_basis);

    let a = sys.a.to_dense();
    let m = dense_smoother_matrix(&inexact.fine, &sys.a)?;
    let (mt, smoother_lambda_min) = mtilde(&m, &a)?;
    let a_c = spaces.c.a.to_dense();
    let m_c = dense_smoother_matrix(&inexact.coarse, &spaces.c.a)?;
    let (mt_c, coarse_smoother_lambda_min) = mtilde(&m_c, &a_c)?;

    let ah = restrict(&a, q.as_ref())?;
    let c_star = max_generalized(&restrict(&mt, q.as_ref())?, &ah)?;
    let lambda_max_mtilde_c = *sym_eigenvalues(&mt_c)?.last().expect("non-empty");

    // max-min by direct projection: T = M̃ - M̃ R^T (R M̃ R^T)^{-1} R M̃
    let r = spaces.c.r.to_dense();
    let mrt = mt.matmul(&r.transpose())?;
    let mut rmr = r.matmul(&mrt)?;
    rmr.symmetrize();
    let rmr_inv = DenseCholesky::factor(&rmr)?.inverse();
    let mut t = mt.clone();
    t.add_scaled(-1.0, &mrt.matmul(&rmr_inv.matmul(&mrt.transpose())?)?)?;
    t.symmetrize();
    let maxmin_value = max_generalized(&restrict(&t, q.as_ref())?, &ah)?;

    let extremes = |eigs: Vec<f64>| SpectrumEstimate::from_extremes(eigs[0], eigs[eigs.len() - 1]);
    let tg = extremes(dense_preconditioned_eigenvalues(&a, &to_dense(&exact), ns)?);
    let itg = extremes(dense_preconditioned_eigenvalues(
        &a,
        &to_dense(&inexact),
        ns,
    )?);
    let bc = extremes(dense_preconditioned_eigenvalues(
        &a_c,
        &to_dense(&inexact.bc_inv()),
        ns_c,
    )?);

    let c_lambda = spaces.c.c_lambda();
    let c_c_lambda = spaces.cc.c_lambda();
    let tg_cond_bound = (C_S * c_star / c_lambda).max(1.0);
    let itg_cond_bound = (C_S * c_star * lambda_max_mtilde_c / (c_lambda * c_c_lambda)).max(1.0);
    let maxmin_relative_error = ((1.0 / tg.lambda_min) - maxmin_value).abs() / maxmin_value;
    Ok(TheoryReport {
        c_s: C_S,
        c_star,
        c_lambda,
        c_c_lambda,
        lambda_max_mtilde_c,
        smoother_lambda_min,
        coarse_smoother_lambda_min,
        exact: tg,
        inexact: itg,
        bc,
        maxmin_value,
        maxmin_relative_error,
        itg_upper_slack: tg.lambda_max * bc.lambda_max.max(1.0) - itg.lambda_max,
        itg_lower_slack: itg.lambda_min - tg.lambda_min * bc.lambda_min.min(1.0),
        tg_cond_bound,
        tg_cond_slack: tg_cond_bound - tg.cond,
        itg_cond_bound,
        itg_cond_slack: itg_cond_bound - itg.cond,
    })
}
