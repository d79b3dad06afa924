//! Nested spectral coarse spaces. Level c: per coarse block, generalized
//! eigenpairs of the block-internal operator against `diag(Tr κ̃)`. Level cc:
//! per coarse-coarse block, eigenpairs of the same kind of operator projected
//! onto the level-c basis, where the mass matrix is the identity.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridHierarchy, Level};
use crate::linalg::{dense_sym_eig, sym_eig, DenseMatrix, EigenDecomposition, SparseOperator};
use crate::tpfa::{local_internal_matrix, PressureSystem};

/// Relative gap under which neighboring eigenvalues count as one group.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Default candidate cap for threshold selection.
pub const DEFAULT_CAP: usize = 20;

/// Tolerance on the level-cc mass matrix being the identity.
pub const MASS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Keep the lowest `l` eigenpairs.
    Fixed(usize),
    /// Keep eigenpairs below `bound`, at least one and at most `cap`.
    Threshold { bound: f64, cap: usize },
}

/// Selection for both levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionRule {
    pub c: Selection,
    pub cc: Selection,
}

impl SelectionRule {
    pub fn fixed(l_c: usize, l_cc: usize) -> Self {
        Self {
            c: Selection::Fixed(l_c),
            cc: Selection::Fixed(l_cc),
        }
    }

    pub fn threshold(b_c: f64, b_cc: f64) -> Self {
        Self {
            c: Selection::Threshold {
                bound: b_c,
                cap: DEFAULT_CAP,
            },
            cc: Selection::Threshold {
                bound: b_cc,
                cap: DEFAULT_CAP,
            },
        }
    }
}

/// Number of eigenvalues below `bound`, clamped to `[1, cap]`; the flag is
/// set when the cap is reached.
pub fn select_by_threshold(eigs: &[f64], bound: f64, cap: usize) -> (usize, bool) {
    let cap = cap.max(1);
    let below = eigs.iter().take_while(|&&l| l < bound).count();
    let kept = below.clamp(1, cap);
    (kept, kept == cap)
}

/// Extends `kept` so a degenerate group is never split.
pub fn extend_ties(eigs: &[f64], mut kept: usize) -> usize {
    let scale = eigs
        .iter()
        .fold(0.0f64, |m, l| m.max(l.abs()))
        .max(f64::MIN_POSITIVE);
    while kept > 0 && kept < eigs.len() {
        let gap = (eigs[kept] - eigs[kept - 1]).abs();
        let local = eigs[kept].abs().max(eigs[kept - 1].abs());
        if gap <= TIE_TOLERANCE * local.max(TIE_TOLERANCE * scale) {
            kept += 1;
        } else {
            break;
        }
    }
    kept
}

fn kept_count(eigs: &[f64], sel: Selection) -> (usize, bool) {
    let (base, saturated) = match sel {
        Selection::Fixed(l) => (l.clamp(1, eigs.len()), false),
        Selection::Threshold { bound, cap } => {
            let (k, s) = select_by_threshold(eigs, bound, cap);
            (k.min(eigs.len()), s)
        }
    };
    (extend_ties(eigs, base), saturated)
}

/// Eigenpairs of one block, ascending; the first `kept` columns span the
/// block's share of the coarse space.
#[derive(Debug, Clone)]
pub struct LocalSpectralBasis {
    pub block: usize,
    /// Global indices of the block's degrees of freedom at the level below.
    pub dofs: Vec<usize>,
    pub eig: EigenDecomposition,
    pub kept: usize,
    pub saturated: bool,
}

impl LocalSpectralBasis {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig.eigenvalues
    }

    /// First excluded eigenvalue, or infinity when the full space is kept.
    pub fn first_excluded(&self) -> f64 {
        self.eig
            .eigenvalues
            .get(self.kept)
            .copied()
            .unwrap_or(f64::INFINITY)
    }
}

/// Generalized eigenproblem `A_i w = λ S_i w` with diagonal `S_i`.
pub fn local_spectral_c(
    block: usize,
    dofs: Vec<usize>,
    a_local: &DenseMatrix,
    s_diag: &[f64],
    sel: Selection,
) -> Result<LocalSpectralBasis> {
    let eig = dense_sym_eig(a_local, &DenseMatrix::from_diagonal(s_diag))?;
    let (kept, saturated) = kept_count(&eig.eigenvalues, sel);
    Ok(LocalSpectralBasis {
        block,
        dofs,
        eig,
        kept,
        saturated,
    })
}

#[derive(Debug, Clone)]
pub struct CoarseSpace {
    pub level: Level,
    pub bases: Vec<LocalSpectralBasis>,
    /// Restriction with one row per kept eigenvector.
    pub r: SparseOperator,
    /// Galerkin operator `R A_below R^T`.
    pub a: SparseOperator,
    /// First row of each block in `r`.
    pub offsets: Vec<usize>,
    /// Unit null vector of `a` when the fine operator is singular.
    pub nullspace: Option<Vec<f64>>,
}

impl CoarseSpace {
    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn saturated_blocks(&self) -> usize {
        self.bases.iter().filter(|b| b.saturated).count()
    }

    /// Smallest first-excluded eigenvalue over blocks.
    pub fn c_lambda(&self) -> f64 {
        self.bases
            .iter()
            .map(LocalSpectralBasis::first_excluded)
            .fold(f64::INFINITY, f64::min)
    }

    /// Row ranges of `r` per block; these partition the level's unknowns.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.offsets.windows(2).map(|w| w[0]..w[1]).collect()
    }

    pub fn write_eigenvalue_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "block,k,lambda,kept")?;
        for b in &self.bases {
            for (k, l) in b.eig.eigenvalues.iter().enumerate() {
                writeln!(out, "{},{},{:e},{}", b.block, k, l, u8::from(k < b.kept))?;
            }
        }
        Ok(())
    }
}

fn restriction(bases: &[LocalSpectralBasis], ncols: usize) -> Result<(SparseOperator, Vec<usize>)> {
    let mut offsets = Vec::with_capacity(bases.len() + 1);
    offsets.push(0);
    let mut triplets = Vec::new();
    let mut row = 0;
    for b in bases {
        for k in 0..b.kept {
            for (local, &g) in b.dofs.iter().enumerate() {
                let v = b.eig.eigenvectors[(local, k)];
                if v != 0.0 {
                    triplets.push((row, g, v));
                }
            }
            row += 1;
        }
        offsets.push(row);
    }
    Ok((
        SparseOperator::from_triplets(row, ncols, &triplets)?,
        offsets,
    ))
}

/// Level-c space from the assembled fine system. `trace` is the per-cell
/// right-hand-side weight (Tr κ̃, mobility-scaled where relevant).
pub fn build_rc(
    sys: &PressureSystem,
    trace: &[f64],
    grid: &GridHierarchy,
    sel: Selection,
) -> Result<CoarseSpace> {
    let n = grid.n_cells();
    if sys.a.nrows() != n || trace.len() != n {
        return Err(Error::dims(
            "fine operator",
            n,
            sys.a.nrows().min(trace.len()),
        ));
    }
    let map = grid.block_map(Level::Coarse);
    let bases = (0..map.n_blocks())
        .into_par_iter()
        .map(|b| {
            let cells = map.block_cells(b)?;
            let local = local_internal_matrix(&sys.a, &cells, Some(&sys.wells.diag));
            let s: Vec<f64> = cells.iter().map(|&c| trace[c]).collect();
            local_spectral_c(b, cells, &local, &s, sel)
        })
        .collect::<Result<Vec<_>>>()?;
    let (r, offsets) = restriction(&bases, n)?;
    let a = sys.a.galerkin(&r)?;
    let nullspace = match &sys.nullspace {
        Some(_) => {
            let s1: Vec<f64> = trace.to_vec();
            Some(unit(r.spmv(&s1)?))
        }
        None => None,
    };
    Ok(CoarseSpace {
        level: Level::Coarse,
        bases,
        r,
        a,
        offsets,
        nullspace,
    })
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let nrm = crate::linalg::norm2(&v);
    if nrm > 0.0 {
        v.iter_mut().for_each(|x| *x /= nrm);
    }
    v
}

/// Projected local problem for coarse-coarse block `block`: returns the
/// projected operator and the explicitly computed mass matrix.
pub fn projected_block_problem(
    sys: &PressureSystem,
    trace: &[f64],
    grid: &GridHierarchy,
    space_c: &CoarseSpace,
    block: usize,
) -> Result<(DenseMatrix, DenseMatrix, std::ops::Range<usize>)> {
    let per = grid.coarse_per_cc();
    let first = block * per;
    if first + per > space_c.bases.len() {
        return Err(Error::OutOfBounds {
            what: "coarse-coarse block",
            index: block,
            bound: space_c.bases.len() / per,
        });
    }
    let range = space_c.offsets[first]..space_c.offsets[first + per];
    let cc_map = grid.block_map(Level::CoarseCoarse);
    let cells = cc_map.block_cells(block)?;
    let local = local_internal_matrix(&sys.a, &cells, Some(&sys.wells.diag));

    // Rows of R_c for this cc block, restricted to its cells.
    let k = range.len();
    let m = cells.len();
    let mut rl = DenseMatrix::zeros(k, m);
    for (row, gr) in range.clone().enumerate() {
        let (cols, vals) = space_c.r.row(gr);
        for (&c, &v) in cols.iter().zip(vals) {
            let lc = cells.binary_search(&c).map_err(|_| {
                Error::InvalidArgument(format!("coarse basis row {gr} leaves its block"))
            })?;
            rl[(row, lc)] = v;
        }
    }
    let rt = rl.transpose();
    let mut a_proj = rl.matmul(&local.matmul(&rt)?)?;
    a_proj.symmetrize();
    let mut s_scaled = rt.clone();
    for i in 0..m {
        let w = trace[cells[i]];
        s_scaled.row_mut(i).iter_mut().for_each(|v| *v *= w);
    }
    let mass = rl.matmul(&s_scaled)?;
    Ok((a_proj, mass, range))
}

/// Standard eigenproblem of a projected block operator; the mass matrix must
/// be the identity to `MASS_TOLERANCE`.
pub fn local_spectral_cc(
    block: usize,
    dofs: Vec<usize>,
    a_proj: &DenseMatrix,
    mass: &DenseMatrix,
    sel: Selection,
) -> Result<LocalSpectralBasis> {
    let mut deviation = 0.0f64;
    for i in 0..mass.nrows() {
        for j in 0..mass.ncols() {
            let id = if i == j { 1.0 } else { 0.0 };
            deviation = deviation.max((mass[(i, j)] - id).abs());
        }
    }
    if deviation > MASS_TOLERANCE {
        return Err(Error::NonIdentityMass { deviation });
    }
    let eig = sym_eig(a_proj)?;
    let (kept, saturated) = kept_count(&eig.eigenvalues, sel);
    Ok(LocalSpectralBasis {
        block,
        dofs,
        eig,
        kept,
        saturated,
    })
}

pub fn build_rcc(
    sys: &PressureSystem,
    trace: &[f64],
    grid: &GridHierarchy,
    space_c: &CoarseSpace,
    sel: Selection,
) -> Result<CoarseSpace> {
    let bases = (0..grid.m_cc())
        .into_par_iter()
        .map(|b| {
            let (a_proj, mass, range) = projected_block_problem(sys, trace, grid, space_c, b)?;
            local_spectral_cc(b, range.collect(), &a_proj, &mass, sel)
        })
        .collect::<Result<Vec<_>>>()?;
    let (r, offsets) = restriction(&bases, space_c.dim())?;
    let a = space_c.a.galerkin(&r)?;
    let nullspace = match &space_c.nullspace {
        Some(nc) => Some(unit(r.spmv(nc)?)),
        None => None,
    };
    Ok(CoarseSpace {
        level: Level::CoarseCoarse,
        bases,
        r,
        a,
        offsets,
        nullspace,
    })
}

/// Both levels at once.
#[derive(Debug, Clone)]
pub struct SpectralSpaces {
    pub c: CoarseSpace,
    pub cc: CoarseSpace,
}

pub fn build_spaces(
    sys: &PressureSystem,
    trace: &[f64],
    grid: &GridHierarchy,
    rule: SelectionRule,
) -> Result<SpectralSpaces> {
    let c = build_rc(sys, trace, grid, rule.c)?;
    let cc = build_rcc(sys, trace, grid, &c, rule.cc)?;
    Ok(SpectralSpaces { c, cc })
}

impl SpectralSpaces {
    /// `R_cc R_c`, the coarse-coarse basis in fine coordinates.
    pub fn fine_rcc(&self) -> Result<SparseOperator> {
        self.cc.r.matmul(&self.c.r)
    }

    /// Keep the bases, recompute the Galerkin operators for a new fine `A`.
    pub fn refresh_operators(&mut self, a: &SparseOperator) -> Result<()> {
        self.c.a = a.galerkin(&self.c.r)?;
        self.cc.a = self.c.a.galerkin(&self.cc.r)?;
        Ok(())
    }
}
