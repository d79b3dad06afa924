//! Cell-centered two-point flux system `A p = f` obtained by eliminating the
//! face velocities, plus flux recovery and the per-cell conservation check.

use crate::error::{Error, Result};
use crate::field::{face_transmissibility, NormalizedField};
use crate::grid::{Face, GridHierarchy, Side};
use crate::linalg::SparseOperator;

/// Fixed pressure on one whole side of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletFace {
    pub axis: usize,
    pub side: Side,
    pub pressure: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum Boundary {
    #[default]
    NoFlow,
    Dirichlet(Vec<DirichletFace>),
}

/// Rate-pressure well coupling: per cell, `diag` is added to `A` and `rhs`
/// to the right-hand side, so the well inflow is `rhs - diag * p`.
#[derive(Debug, Clone, PartialEq)]
pub struct WellTerms {
    pub diag: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl WellTerms {
    pub fn none(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }
}

/// Multipliers on face transmissibilities (internal faces in
/// `GridHierarchy::internal_faces` order) and on the Dirichlet closure of
/// each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceWeights {
    pub faces: Vec<f64>,
    pub cells: Vec<f64>,
}

/// A Dirichlet closure entry: boundary cell, closure coefficient and value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletTerm {
    pub cell: usize,
    pub coefficient: f64,
    pub pressure: f64,
}

#[derive(Debug, Clone)]
pub struct PressureSystem {
    pub a: SparseOperator,
    pub rhs: Vec<f64>,
    /// Unit constant vector when `A` is singular.
    pub nullspace: Option<Vec<f64>>,
    pub faces: Vec<Face>,
    /// Effective transmissibility per face, aligned with `faces`.
    pub transmissibility: Vec<f64>,
    pub source: Vec<f64>,
    pub wells: WellTerms,
    pub dirichlet: Vec<DirichletTerm>,
}

pub fn assemble(
    nf: &NormalizedField,
    grid: &GridHierarchy,
    boundary: &Boundary,
    source: &[f64],
    wells: Option<&WellTerms>,
) -> Result<PressureSystem> {
    assemble_weighted(nf, grid, boundary, source, wells, None)
}

pub fn assemble_weighted(
    nf: &NormalizedField,
    grid: &GridHierarchy,
    boundary: &Boundary,
    source: &[f64],
    wells: Option<&WellTerms>,
    weights: Option<&FaceWeights>,
) -> Result<PressureSystem> {
    let n = grid.n_cells();
    if nf.len() != n {
        return Err(Error::dims("normalized field", n, nf.len()));
    }
    if nf.dim() != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "field dimension {} does not match grid dimension {}",
            nf.dim(),
            grid.dim()
        )));
    }
    if source.len() != n {
        return Err(Error::dims("source", n, source.len()));
    }
    let wells = match wells {
        Some(w) => {
            if w.diag.len() != n || w.rhs.len() != n {
                return Err(Error::dims("well terms", n, w.diag.len().min(w.rhs.len())));
            }
            w.clone()
        }
        None => WellTerms::none(n),
    };
    let faces: Vec<Face> = grid.internal_faces().collect();
    if let Some(w) = weights {
        if w.faces.len() != faces.len() {
            return Err(Error::dims("face weights", faces.len(), w.faces.len()));
        }
        if w.cells.len() != n {
            return Err(Error::dims("cell weights", n, w.cells.len()));
        }
    }

    let mut transmissibility = Vec::with_capacity(faces.len());
    let mut diag = vec![0.0; n];
    let mut triplets = Vec::with_capacity(2 * faces.len() + n);
    for (e, face) in faces.iter().enumerate() {
        let mut t = face_transmissibility(nf, face)?;
        if let Some(w) = weights {
            t *= w.faces[e];
        }
        transmissibility.push(t);
        diag[face.minus] += t;
        diag[face.plus] += t;
        triplets.push((face.minus, face.plus, -t));
        triplets.push((face.plus, face.minus, -t));
    }

    let mut rhs = source.to_vec();
    let mut dirichlet = Vec::new();
    if let Boundary::Dirichlet(sides) = boundary {
        for side in sides {
            if side.axis >= grid.dim() {
                return Err(Error::InvalidArgument(format!(
                    "Dirichlet axis {} on a {}D grid",
                    side.axis,
                    grid.dim()
                )));
            }
            for cell in grid.boundary_cells(side.axis, side.side) {
                let mut t = 2.0 * nf.conductance(cell)[side.axis];
                if let Some(w) = weights {
                    t *= w.cells[cell];
                }
                diag[cell] += t;
                rhs[cell] += t * side.pressure;
                dirichlet.push(DirichletTerm {
                    cell,
                    coefficient: t,
                    pressure: side.pressure,
                });
            }
        }
    }
    for c in 0..n {
        diag[c] += wells.diag[c];
        rhs[c] += wells.rhs[c];
        triplets.push((c, c, diag[c]));
    }
    let a = SparseOperator::from_triplets(n, n, &triplets)?.into_symmetric()?;

    let coupled = !dirichlet.is_empty() || wells.diag.iter().any(|&d| d > 0.0);
    let nullspace = (!coupled).then(|| vec![1.0 / (n as f64).sqrt(); n]);
    Ok(PressureSystem {
        a,
        rhs,
        nullspace,
        faces,
        transmissibility,
        source: source.to_vec(),
        wells,
        dirichlet,
    })
}

/// Unit sources on the four corner columns of the x-y plane and `-4` on the
/// central column; total zero.
pub fn default_sources(grid: &GridHierarchy) -> Vec<f64> {
    let [nx, ny, nz] = grid.cells();
    let mut f = vec![0.0; grid.n_cells()];
    let corners = [(0, 0), (nx - 1, 0), (0, ny - 1), (nx - 1, ny - 1)];
    for k in 0..nz {
        for &(i, j) in &corners {
            f[i + nx * (j + ny * k)] += 1.0;
        }
        f[nx / 2 + nx * (ny / 2 + ny * k)] -= 4.0;
    }
    f
}

/// Recovered normalized fluxes `Q_e = -T_e (p+ - p-)` on internal faces
/// plus per-cell exchange through Dirichlet sides and wells.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub faces: Vec<Face>,
    pub flux: Vec<f64>,
    /// Outflow through Dirichlet sides, `T_D (p - p_D)`.
    pub boundary_outflow: Vec<f64>,
    /// Inflow from rate-pressure wells, `rhs_w - diag_w p`.
    pub well_inflow: Vec<f64>,
}

pub fn recover_velocity(sys: &PressureSystem, p: &[f64]) -> Result<VelocityField> {
    let n = sys.a.nrows();
    if p.len() != n {
        return Err(Error::dims("pressure", n, p.len()));
    }
    let flux = sys
        .faces
        .iter()
        .zip(&sys.transmissibility)
        .map(|(f, &t)| -t * (p[f.plus] - p[f.minus]))
        .collect();
    let mut boundary_outflow = vec![0.0; n];
    for d in &sys.dirichlet {
        boundary_outflow[d.cell] += d.coefficient * (p[d.cell] - d.pressure);
    }
    let well_inflow = (0..n)
        .map(|c| sys.wells.rhs[c] - sys.wells.diag[c] * p[c])
        .collect();
    Ok(VelocityField {
        faces: sys.faces.clone(),
        flux,
        boundary_outflow,
        well_inflow,
    })
}

/// Net outflow per cell: internal faces, Dirichlet sides, minus well inflow.
pub fn divergence(v: &VelocityField, n: usize) -> Vec<f64> {
    let mut div = vec![0.0; n];
    for (f, &q) in v.faces.iter().zip(&v.flux) {
        div[f.minus] += q;
        div[f.plus] -= q;
    }
    for c in 0..n {
        div[c] += v.boundary_outflow[c] - v.well_inflow[c];
    }
    div
}

/// `max_c |div_c - source_c|`.
pub fn check_conservation(v: &VelocityField, source: &[f64], grid: &GridHierarchy) -> Result<f64> {
    let n = grid.n_cells();
    if source.len() != n || v.boundary_outflow.len() != n {
        return Err(Error::dims("conservation check", n, source.len()));
    }
    Ok(divergence(v, n)
        .iter()
        .zip(source)
        .map(|(d, s)| (d - s).abs())
        .fold(0.0, f64::max))
}

/// Largest per-cell sum of the magnitudes entering the balance: face fluxes,
/// source, and both halves of the Dirichlet and well terms. Divides the
/// output of [`check_conservation`] to give a relative imbalance.
pub fn balance_scale(sys: &PressureSystem, v: &VelocityField, p: &[f64]) -> Result<f64> {
    let n = sys.a.nrows();
    if p.len() != n || v.boundary_outflow.len() != n {
        return Err(Error::dims("balance scale", n, p.len()));
    }
    let mut total: Vec<f64> = (0..n)
        .map(|c| sys.source[c].abs() + sys.wells.rhs[c].abs() + (sys.wells.diag[c] * p[c]).abs())
        .collect();
    for (f, q) in v.faces.iter().zip(&v.flux) {
        total[f.minus] += q.abs();
        total[f.plus] += q.abs();
    }
    for d in &sys.dirichlet {
        total[d.cell] += (d.coefficient * p[d.cell]).abs() + (d.coefficient * d.pressure).abs();
    }
    Ok(total.into_iter().fold(0.0, f64::max))
}

/// Block-local operator with couplings only across faces interior to the
/// block: masked off-diagonals of `A`, diagonal equal to minus their row sum
/// plus `extra_diag` (well coupling). Dirichlet closure is not included.
pub fn local_internal_matrix(
    a: &SparseOperator,
    cells: &[usize],
    extra_diag: Option<&[f64]>,
) -> crate::linalg::DenseMatrix {
    let m = cells.len();
    let mut local = crate::linalg::DenseMatrix::zeros(m, m);
    for (li, &gi) in cells.iter().enumerate() {
        let (cols, vals) = a.row(gi);
        let mut offsum = 0.0;
        for (&gj, &v) in cols.iter().zip(vals) {
            if gj == gi {
                continue;
            }
            if let Ok(lj) = cells.binary_search(&gj) {
                local[(li, lj)] = v;
                offsum += v;
            }
        }
        local[(li, li)] = -offsum + extra_diag.map_or(0.0, |d| d[gi]);
    }
    local
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{normalize, PermeabilityField};
    use crate::grid::build_hierarchy;

    fn unit_line(nx: usize) -> (GridHierarchy, NormalizedField) {
        let g = build_hierarchy(2, &[nx, 1], &[nx as f64, 1.0], &[1, 1], 1).unwrap();
        let f = PermeabilityField::uniform(nx, 1.0).unwrap();
        let nf = normalize(&f, &g).unwrap();
        (g, nf)
    }

    #[test]
    fn two_cell_no_flow() {
        let (g, nf) = unit_line(2);
        let sys = assemble(&nf, &g, &Boundary::NoFlow, &[0.0; 2], None).unwrap();
        assert_eq!(sys.a.to_dense().values(), &[1.0, -1.0, -1.0, 1.0]);
        assert!(sys.nullspace.is_some());
    }

    #[test]
    fn three_cell_chain() {
        let (g, nf) = unit_line(3);
        let sys = assemble(&nf, &g, &Boundary::NoFlow, &[0.0; 3], None).unwrap();
        let d = sys.a.to_dense();
        assert_eq!(
            d.values(),
            &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]
        );
        assert!(sys.a.spmv(&[1.0; 3]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_closure() {
        let (g, nf) = unit_line(2);
        let bc = Boundary::Dirichlet(vec![DirichletFace {
            axis: 0,
            side: Side::Min,
            pressure: 1.0,
        }]);
        let sys = assemble(&nf, &g, &bc, &[0.0; 2], None).unwrap();
        assert_eq!(sys.a.to_dense().values(), &[3.0, -1.0, -1.0, 1.0]);
        assert_eq!(sys.rhs, vec![2.0, 0.0]);
        assert!(sys.nullspace.is_none());
    }

    #[test]
    fn default_sources_balance() {
        let g = build_hierarchy(3, &[4, 4, 4], &[1.0; 3], &[1, 1, 1], 1).unwrap();
        let f = default_sources(&g);
        assert_eq!(f.iter().sum::<f64>(), 0.0);
        assert_eq!(f.iter().filter(|&&v| v == 1.0).count(), 16);
        assert_eq!(f.iter().filter(|&&v| v == -4.0).count(), 4);

        let g = build_hierarchy(2, &[4, 4], &[1.0; 2], &[1, 1], 1).unwrap();
        let f = default_sources(&g);
        assert_eq!(f.iter().filter(|&&v| v == 1.0).count(), 4);
        assert_eq!(f[2 + 4 * 2], -4.0);
    }

    #[test]
    fn velocity_examples() {
        let (g, nf) = unit_line(2);
        let sys = assemble(&nf, &g, &Boundary::NoFlow, &[0.0; 2], None).unwrap();
        let v = recover_velocity(&sys, &[1.0, 0.0]).unwrap();
        assert_eq!(v.flux, vec![1.0]);
        let v = recover_velocity(&sys, &[3.0, 3.0]).unwrap();
        assert_eq!(v.flux, vec![0.0]);
        assert_eq!(check_conservation(&v, &[0.0; 2], &g).unwrap(), 0.0);
        assert!(recover_velocity(&sys, &[1.0]).is_err());
    }

    #[test]
    fn local_matrix_masks_block() {
        let (_, nf) = unit_line(3);
        let g = build_hierarchy(2, &[3, 1], &[3.0, 1.0], &[1, 1], 1).unwrap();
        let sys = assemble(&nf, &g, &Boundary::NoFlow, &[0.0; 3], None).unwrap();
        let local = local_internal_matrix(&sys.a, &[0, 1], None);
        assert_eq!(local.values(), &[1.0, -1.0, -1.0, 1.0]);
    }
}
