//! Structured Cartesian grid hierarchy: fine cells, coarse blocks and
//! coarse-coarse blocks, with lexicographic (x fastest) cell numbering.
//!
//! Coarse blocks are numbered grouped by their parent coarse-coarse block,
//! so the coarse blocks of one coarse-coarse block have consecutive ids.

use std::ops::Range;

use crate::error::{Error, Result};

const AXES: [char; 3] = ['x', 'y', 'z'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Coarse,
    CoarseCoarse,
}

/// An internal face between `minus` and `plus`, with `plus` the neighbor in
/// the positive `axis` direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub minus: usize,
    pub plus: usize,
    pub axis: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridHierarchy {
    dim: usize,
    cells: [usize; 3],
    h: [f64; 3],
    cc_blocks: [usize; 3],
    sd: usize,
}

/// Builds the three-level hierarchy. `cells`, `lengths` and `cc_blocks`
/// carry one entry per active axis; for `dim == 2` the third axis is a
/// single layer of unit thickness.
pub fn build_hierarchy(
    dim: usize,
    cells: &[usize],
    lengths: &[f64],
    cc_blocks: &[usize],
    sd: usize,
) -> Result<GridHierarchy> {
    if dim != 2 && dim != 3 {
        return Err(Error::InvalidGrid(format!(
            "dimension must be 2 or 3, got {dim}"
        )));
    }
    if cells.len() != dim || lengths.len() != dim || cc_blocks.len() != dim {
        return Err(Error::InvalidGrid(format!(
            "expected {dim} entries per axis (cells {}, lengths {}, blocks {})",
            cells.len(),
            lengths.len(),
            cc_blocks.len()
        )));
    }
    if sd == 0 {
        return Err(Error::InvalidGrid(
            "subdivision sd must be at least 1".into(),
        ));
    }
    let mut g = GridHierarchy {
        dim,
        cells: [1; 3],
        h: [1.0; 3],
        cc_blocks: [1; 3],
        sd,
    };
    for d in 0..dim {
        if cells[d] == 0 || cc_blocks[d] == 0 {
            return Err(Error::InvalidGrid(format!(
                "axis {}: cell and block counts must be positive",
                AXES[d]
            )));
        }
        if !(lengths[d] > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "axis {}: domain length must be positive",
                AXES[d]
            )));
        }
        let blocks = cc_blocks[d] * sd;
        if cells[d] % blocks != 0 {
            return Err(Error::Divisibility {
                axis: AXES[d],
                cells: cells[d],
                blocks,
            });
        }
        g.cells[d] = cells[d];
        g.cc_blocks[d] = cc_blocks[d];
        g.h[d] = lengths[d] / cells[d] as f64;
    }
    Ok(g)
}

impl GridHierarchy {
    /// Sets the out-of-plane cell size of a 2D grid (ignored in 3D).
    pub fn with_thickness(mut self, thickness: f64) -> Result<Self> {
        if !(thickness > 0.0) {
            return Err(Error::InvalidGrid("thickness must be positive".into()));
        }
        if self.dim == 2 {
            self.h[2] = thickness;
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn h(&self) -> [f64; 3] {
        self.h
    }

    pub fn sd(&self) -> usize {
        self.sd
    }

    pub fn cc_blocks(&self) -> [usize; 3] {
        self.cc_blocks
    }

    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Coarse blocks per axis (`cc_blocks * sd` on active axes).
    pub fn coarse_per_axis(&self) -> [usize; 3] {
        let mut c = [1; 3];
        for d in 0..self.dim {
            c[d] = self.cc_blocks[d] * self.sd;
        }
        c
    }

    /// Fine cells per coarse block, per axis.
    pub fn coarse_block_shape(&self) -> [usize; 3] {
        let c = self.coarse_per_axis();
        [
            self.cells[0] / c[0],
            self.cells[1] / c[1],
            self.cells[2] / c[2],
        ]
    }

    pub fn coarse_per_cc(&self) -> usize {
        self.sd.pow(self.dim as u32)
    }

    pub fn m_cc(&self) -> usize {
        self.cc_blocks.iter().product()
    }

    pub fn m_c(&self) -> usize {
        self.m_cc() * self.coarse_per_cc()
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> Result<usize> {
        for (d, v) in [i, j, k].into_iter().enumerate() {
            if v >= self.cells[d] {
                return Err(Error::OutOfBounds {
                    what: "cell",
                    index: v,
                    bound: self.cells[d],
                });
            }
        }
        Ok(i + self.cells[0] * (j + self.cells[1] * k))
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 3] {
        let [nx, ny, _] = self.cells;
        [cell % nx, (cell / nx) % ny, cell / (nx * ny)]
    }

    /// Neighbor of `cell` one step along `axis` in direction `side`.
    pub fn neighbor(&self, cell: usize, axis: usize, side: Side) -> Option<usize> {
        let mut c = self.cell_coords(cell);
        match side {
            Side::Min if c[axis] == 0 => return None,
            Side::Min => c[axis] -= 1,
            Side::Max if c[axis] + 1 >= self.cells[axis] => return None,
            Side::Max => c[axis] += 1,
        }
        Some(c[0] + self.cells[0] * (c[1] + self.cells[1] * c[2]))
    }

    /// Every internal face exactly once, oriented towards the positive axis.
    pub fn internal_faces(&self) -> impl Iterator<Item = Face> + '_ {
        let [nx, ny, nz] = self.cells;
        let strides = [1, nx, nx * ny];
        (0..self.dim).flat_map(move |axis| {
            let stride = strides[axis];
            (0..nz).flat_map(move |k| {
                (0..ny).flat_map(move |j| {
                    (0..nx).filter_map(move |i| {
                        let c = [i, j, k];
                        if c[axis] + 1 >= self.cells[axis] {
                            return None;
                        }
                        let minus = i + nx * (j + ny * k);
                        Some(Face {
                            minus,
                            plus: minus + stride,
                            axis,
                        })
                    })
                })
            })
        })
    }

    pub fn face_count(&self) -> usize {
        (0..self.dim)
            .map(|axis| {
                let mut count = 1;
                for d in 0..3 {
                    count *= if d == axis {
                        self.cells[d] - 1
                    } else {
                        self.cells[d]
                    };
                }
                count
            })
            .sum()
    }

    /// Cells adjacent to the domain boundary face `side` of `axis`.
    pub fn boundary_cells(&self, axis: usize, side: Side) -> Vec<usize> {
        let fixed = match side {
            Side::Min => 0,
            Side::Max => self.cells[axis] - 1,
        };
        (0..self.n_cells())
            .filter(|&c| self.cell_coords(c)[axis] == fixed)
            .collect()
    }

    pub fn block_map(&self, level: Level) -> BlockMap {
        let cp = self.coarse_per_axis();
        let shape = self.coarse_block_shape();
        let mut ranges = Vec::new();
        match level {
            Level::CoarseCoarse => {
                let cc_shape = [
                    shape[0] * self.sd,
                    shape[1] * self.sd,
                    if self.dim == 3 { shape[2] * self.sd } else { 1 },
                ];
                for bk in 0..self.cc_blocks[2] {
                    for bj in 0..self.cc_blocks[1] {
                        for bi in 0..self.cc_blocks[0] {
                            ranges.push([
                                bi * cc_shape[0]..(bi + 1) * cc_shape[0],
                                bj * cc_shape[1]..(bj + 1) * cc_shape[1],
                                bk * cc_shape[2]..(bk + 1) * cc_shape[2],
                            ]);
                        }
                    }
                }
            }
            Level::Coarse => {
                let sdz = if self.dim == 3 { self.sd } else { 1 };
                for bk in 0..self.cc_blocks[2] {
                    for bj in 0..self.cc_blocks[1] {
                        for bi in 0..self.cc_blocks[0] {
                            for lk in 0..sdz {
                                for lj in 0..self.sd {
                                    for li in 0..self.sd {
                                        let ci = bi * self.sd + li;
                                        let cj = bj * self.sd + lj;
                                        let ck = bk * sdz + lk;
                                        debug_assert!(ci < cp[0] && cj < cp[1] && ck < cp[2]);
                                        ranges.push([
                                            ci * shape[0]..(ci + 1) * shape[0],
                                            cj * shape[1]..(cj + 1) * shape[1],
                                            ck * shape[2]..(ck + 1) * shape[2],
                                        ]);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        BlockMap::from_ranges(level, self.cells, ranges)
    }

    /// Parent coarse-coarse block of a coarse block.
    pub fn parent_of(&self, coarse_block: usize) -> usize {
        coarse_block / self.coarse_per_cc()
    }
}

/// Non-overlapping partition of the fine cells into axis-aligned boxes.
#[derive(Debug, Clone)]
pub struct BlockMap {
    level: Level,
    cells: [usize; 3],
    ranges: Vec<[Range<usize>; 3]>,
    owner: Vec<usize>,
}

impl BlockMap {
    fn from_ranges(level: Level, cells: [usize; 3], ranges: Vec<[Range<usize>; 3]>) -> Self {
        let n: usize = cells.iter().product();
        let mut owner = vec![usize::MAX; n];
        for (b, r) in ranges.iter().enumerate() {
            for k in r[2].clone() {
                for j in r[1].clone() {
                    for i in r[0].clone() {
                        owner[i + cells[0] * (j + cells[1] * k)] = b;
                    }
                }
            }
        }
        debug_assert!(owner.iter().all(|&o| o != usize::MAX));
        Self {
            level,
            cells,
            ranges,
            owner,
        }
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn n_blocks(&self) -> usize {
        self.ranges.len()
    }

    pub fn block_range(&self, block: usize) -> Result<&[Range<usize>; 3]> {
        self.ranges.get(block).ok_or(Error::OutOfBounds {
            what: "block",
            index: block,
            bound: self.ranges.len(),
        })
    }

    /// Fine cells owned by `block`, ascending.
    pub fn block_cells(&self, block: usize) -> Result<Vec<usize>> {
        let r = self.block_range(block)?;
        let mut out = Vec::with_capacity(r.iter().map(|x| x.len()).product());
        for k in r[2].clone() {
            for j in r[1].clone() {
                for i in r[0].clone() {
                    out.push(i + self.cells[0] * (j + self.cells[1] * k));
                }
            }
        }
        Ok(out)
    }

    pub fn block_of(&self, cell: usize) -> Result<usize> {
        self.owner.get(cell).copied().ok_or(Error::OutOfBounds {
            what: "cell",
            index: cell,
            bound: self.owner.len(),
        })
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hierarchy_sizes() {
        let g = build_hierarchy(3, &[84, 84, 84], &[1.0; 3], &[3, 3, 3], 7).unwrap();
        assert_eq!(g.m_cc(), 27);
        assert_eq!(g.m_c(), 9261);
        assert_eq!(g.n_cells(), 84 * 84 * 84);

        let g = build_hierarchy(2, &[8, 8], &[1.0, 1.0], &[1, 1], 2).unwrap();
        assert_eq!((g.m_cc(), g.m_c(), g.n_cells()), (1, 4, 64));
    }

    #[test]
    fn divisibility_names_axis() {
        let err = build_hierarchy(2, &[10, 8], &[1.0, 1.0], &[1, 1], 3).unwrap_err();
        assert!(matches!(err, Error::Divisibility { axis: 'x', .. }));
    }

    #[test]
    fn face_counts() {
        let g = build_hierarchy(2, &[3, 3], &[1.0, 1.0], &[1, 1], 1).unwrap();
        assert_eq!(g.internal_faces().count(), 12);
        assert_eq!(g.face_count(), 12);
        let g = build_hierarchy(2, &[1, 1], &[1.0, 1.0], &[1, 1], 1).unwrap();
        assert_eq!(g.internal_faces().count(), 0);
        let g = build_hierarchy(3, &[2, 2, 2], &[1.0; 3], &[1, 1, 1], 1).unwrap();
        assert_eq!(g.internal_faces().count(), 12);
    }

    #[test]
    fn faces_point_positive() {
        let g = build_hierarchy(3, &[3, 4, 2], &[1.0; 3], &[1, 1, 1], 1).unwrap();
        for f in g.internal_faces() {
            let a = g.cell_coords(f.minus);
            let b = g.cell_coords(f.plus);
            for d in 0..3 {
                let want = if d == f.axis { a[d] + 1 } else { a[d] };
                assert_eq!(b[d], want);
            }
        }
    }

    #[test]
    fn cell_index_bounds() {
        let g = build_hierarchy(2, &[4, 2], &[1.0, 1.0], &[1, 1], 1).unwrap();
        assert_eq!(g.cell_index(3, 1, 0).unwrap(), 7);
        assert!(g.cell_index(4, 0, 0).is_err());
        assert!(g.cell_index(0, 0, 1).is_err());
    }

    #[test]
    fn first_coarse_block_on_8x8() {
        let g = build_hierarchy(2, &[8, 8], &[1.0, 1.0], &[1, 1], 2).unwrap();
        let map = g.block_map(Level::Coarse);
        let r = map.block_range(0).unwrap();
        assert_eq!((r[0].clone(), r[1].clone()), (0..4, 0..4));
        assert_eq!(map.block_cells(0).unwrap().len(), 16);
        assert!(map.block_cells(4).is_err());
    }

    #[test]
    fn coarse_nests_in_coarse_coarse() {
        let g = build_hierarchy(3, &[12, 8, 4], &[1.0; 3], &[3, 2, 1], 2).unwrap();
        let c = g.block_map(Level::Coarse);
        let cc = g.block_map(Level::CoarseCoarse);
        for cell in 0..g.n_cells() {
            assert_eq!(
                g.parent_of(c.block_of(cell).unwrap()),
                cc.block_of(cell).unwrap()
            );
        }
    }
}
