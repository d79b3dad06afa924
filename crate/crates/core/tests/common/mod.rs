#![allow(dead_code)]

use darcy_core::coarse::{build_spaces, SelectionRule, SpectralSpaces};
use darcy_core::field::{gen_log_uniform, normalize};
use darcy_core::grid::{build_hierarchy, GridHierarchy, Side};
use darcy_core::tpfa::{assemble, default_sources, Boundary, DirichletFace, PressureSystem};

pub struct Instance {
    pub grid: GridHierarchy,
    pub sys: PressureSystem,
    pub trace: Vec<f64>,
    pub spaces: SpectralSpaces,
}

pub fn dirichlet_west() -> Boundary {
    Boundary::Dirichlet(vec![DirichletFace {
        axis: 0,
        side: Side::Min,
        pressure: 0.0,
    }])
}

/// 2D log-uniform instance on `nx x nx` cells.
pub fn instance_2d(
    nx: usize,
    cc: usize,
    sd: usize,
    seed: u64,
    decades: f64,
    boundary: Boundary,
    rule: SelectionRule,
) -> Instance {
    let grid = build_hierarchy(2, &[nx, nx], &[1.0, 1.0], &[cc, cc], sd).unwrap();
    let field = gen_log_uniform(&grid, seed, decades, true).unwrap();
    let nf = normalize(&field, &grid).unwrap();
    let sys = assemble(&nf, &grid, &boundary, &default_sources(&grid), None).unwrap();
    let trace = nf.trace().to_vec();
    let spaces = build_spaces(&sys, &trace, &grid, rule).unwrap();
    Instance {
        grid,
        sys,
        trace,
        spaces,
    }
}

pub fn lcg(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

/// Dense TPFA operator from the discrete variational form, written
/// independently of the library: for neighbors along axis `d`, the coupling
/// is `2 / (h²/κ_a + h²/κ_b)`; Dirichlet sides add `2 κ / h²`.
pub fn brute_force_tpfa(
    cells: [usize; 3],
    h: [f64; 3],
    dim: usize,
    perm: &[[f64; 3]],
    dirichlet_axes: &[(usize, bool)],
) -> Vec<Vec<f64>> {
    let [nx, ny, nz] = cells;
    let n = nx * ny * nz;
    let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut a = vec![vec![0.0; n]; n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = idx(i, j, k);
                let ijk = [i, j, k];
                for d in 0..dim {
                    let mut up = ijk;
                    up[d] += 1;
                    if up[d] < cells[d] {
                        let o = idx(up[0], up[1], up[2]);
                        let t = 2.0 / (h[d] * h[d] / perm[c][d] + h[d] * h[d] / perm[o][d]);
                        a[c][o] -= t;
                        a[o][c] -= t;
                        a[c][c] += t;
                        a[o][o] += t;
                    }
                    for &(axis, max_side) in dirichlet_axes {
                        let on = if max_side { ijk[d] == cells[d] - 1 } else { ijk[d] == 0 };
                        if axis == d && on {
                            a[c][c] += 2.0 * perm[c][d] / (h[d] * h[d]);
                        }
                    }
                }
            }
        }
    }
    a
}
