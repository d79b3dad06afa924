//! Orthotropic permeability and porosity fields, their normalized form and
//! the synthetic medium generators.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{Face, GridHierarchy};

/// Lower bound applied to porosity read from files or generated.
pub const MIN_POROSITY: f64 = 0.05;

/// Side length of the periodic microstructure cell.
pub const PERIODIC_CELL: usize = 8;

/// Per-cell diagonal permeability `(κx, κy, κz)` and porosity.
#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField {
    perm: Vec<[f64; 3]>,
    porosity: Vec<f64>,
}

impl PermeabilityField {
    pub fn new(perm: Vec<[f64; 3]>, porosity: Vec<f64>) -> Result<Self> {
        if perm.len() != porosity.len() {
            return Err(Error::dims("porosity", perm.len(), porosity.len()));
        }
        for (i, k) in perm.iter().enumerate() {
            for &v in k {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::NonPositive {
                        what: "permeability",
                        index: i,
                        value: v,
                    });
                }
            }
        }
        for (i, &p) in porosity.iter().enumerate() {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::NonPositive {
                    what: "porosity in (0, 1]",
                    index: i,
                    value: p,
                });
            }
        }
        Ok(Self { perm, porosity })
    }

    pub fn uniform(n: usize, kappa: f64) -> Result<Self> {
        Self::isotropic(vec![kappa; n])
    }

    /// Isotropic field with unit porosity.
    pub fn isotropic(kappa: Vec<f64>) -> Result<Self> {
        let n = kappa.len();
        Self::new(kappa.into_iter().map(|k| [k; 3]).collect(), vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[[f64; 3]] {
        &self.perm
    }

    pub fn porosity(&self) -> &[f64] {
        &self.porosity
    }

    pub fn with_porosity(mut self, porosity: Vec<f64>) -> Result<Self> {
        let perm = std::mem::take(&mut self.perm);
        Self::new(perm, porosity)
    }

    /// Multiplies every permeability component by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(
            self.perm.iter().map(|k| k.map(|v| v * s)).collect(),
            self.porosity.clone(),
        )
    }

    /// Max over min of all active permeability components.
    pub fn contrast(&self, dim: usize) -> f64 {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in &self.perm {
            for &v in &k[..dim] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        hi / lo
    }
}

/// Dimensionless conductances `κ_d / h_d²` per cell with the trace over
/// active axes.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedField {
    dim: usize,
    kt: Vec<[f64; 3]>,
    trace: Vec<f64>,
}

pub fn normalize(field: &PermeabilityField, grid: &GridHierarchy) -> Result<NormalizedField> {
    if field.len() != grid.n_cells() {
        return Err(Error::dims("field", grid.n_cells(), field.len()));
    }
    let h = grid.h();
    let dim = grid.dim();
    let kt: Vec<[f64; 3]> = field
        .perm
        .iter()
        .map(|k| {
            let mut t = [0.0; 3];
            for d in 0..dim {
                t[d] = k[d] / (h[d] * h[d]);
            }
            t
        })
        .collect();
    NormalizedField::from_conductances(dim, kt)
}

impl NormalizedField {
    pub fn from_conductances(dim: usize, kt: Vec<[f64; 3]>) -> Result<Self> {
        for (i, t) in kt.iter().enumerate() {
            for &v in &t[..dim] {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::NonPositive {
                        what: "normalized permeability",
                        index: i,
                        value: v,
                    });
                }
            }
        }
        let trace = kt.iter().map(|t| t[..dim].iter().sum()).collect();
        Ok(Self { dim, kt, trace })
    }

    /// Per-cell rescaling, e.g. by a cell mobility.
    pub fn scaled_cells(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.kt.len() {
            return Err(Error::dims("cell factors", self.kt.len(), factors.len()));
        }
        Self::from_conductances(
            self.dim,
            self.kt
                .iter()
                .zip(factors)
                .map(|(t, &s)| t.map(|v| v * s))
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.kt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kt.is_empty()
    }

    pub fn conductance(&self, cell: usize) -> [f64; 3] {
        self.kt[cell]
    }

    pub fn conductances(&self) -> &[[f64; 3]] {
        &self.kt
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }
}

/// Harmonic average `2 / (1/a + 1/b)`.
pub fn harmonic(a: f64, b: f64) -> f64 {
    2.0 / (1.0 / a + 1.0 / b)
}

pub fn face_transmissibility(nf: &NormalizedField, face: &Face) -> Result<f64> {
    let n = nf.len();
    if face.minus >= n || face.plus >= n || face.minus == face.plus || face.axis >= nf.dim {
        return Err(Error::InvalidArgument(format!(
            "({}, {}, axis {}) is not an internal face",
            face.minus, face.plus, face.axis
        )));
    }
    Ok(harmonic(
        nf.kt[face.minus][face.axis],
        nf.kt[face.plus][face.axis],
    ))
}

/// Three mutually orthogonal two-cell-wide channels through an 8^dim cell,
/// crossing at the center. Index is lexicographic, x fastest.
pub fn default_channel_mask(dim: usize) -> Vec<bool> {
    let c = PERIODIC_CELL;
    let mid = |v: usize| v == 3 || v == 4;
    let nz = if dim == 3 { c } else { 1 };
    let mut mask = Vec::with_capacity(c * c * nz);
    for k in 0..nz {
        for j in 0..c {
            for i in 0..c {
                let on = if dim == 3 {
                    (mid(j) && mid(k)) || (mid(i) && mid(k)) || (mid(i) && mid(j))
                } else {
                    mid(i) || mid(j)
                };
                mask.push(on);
            }
        }
    }
    mask
}

/// Tiles `mask` (8^dim entries) over the grid; masked cells get `contrast`.
pub fn gen_periodic_cell(
    grid: &GridHierarchy,
    mask: &[bool],
    contrast: f64,
) -> Result<PermeabilityField> {
    let dim = grid.dim();
    let cells = grid.cells();
    let c = PERIODIC_CELL;
    for (d, axis) in ['x', 'y', 'z'].into_iter().enumerate().take(dim) {
        if cells[d] % c != 0 {
            return Err(Error::Divisibility {
                axis,
                cells: cells[d],
                blocks: cells[d] / c + 1,
            });
        }
    }
    let expected = c.pow(dim as u32);
    if mask.len() != expected {
        return Err(Error::dims("periodic cell mask", expected, mask.len()));
    }
    let kappa = (0..grid.n_cells())
        .map(|cell| {
            let [i, j, k] = grid.cell_coords(cell);
            let m = (i % c) + c * ((j % c) + c * (k % c));
            if mask[m] {
                contrast
            } else {
                1.0
            }
        })
        .collect();
    PermeabilityField::isotropic(kappa)
}

/// Half-open axis-aligned box of fine cells, `lo[d] <= index < hi[d]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slab {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl Slab {
    /// A one-cell-thick plane normal to `axis` at `index`, spanning the grid.
    pub fn plane(grid: &GridHierarchy, axis: usize, index: usize) -> Self {
        let mut lo = [0; 3];
        let mut hi = grid.cells();
        lo[axis] = index;
        hi[axis] = index + 1;
        Self { lo, hi }
    }

    fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|d| self.lo[d] <= c[d] && c[d] < self.hi[d])
    }
}

pub fn gen_fractured(grid: &GridHierarchy, slabs: &[Slab], cr: i32) -> Result<PermeabilityField> {
    let cells = grid.cells();
    for (s, slab) in slabs.iter().enumerate() {
        for d in 0..3 {
            if slab.lo[d] >= slab.hi[d] || slab.hi[d] > cells[d] {
                return Err(Error::OutOfBounds {
                    what: "fracture slab",
                    index: s,
                    bound: cells[d],
                });
            }
        }
    }
    let high = 10f64.powi(cr);
    let kappa = (0..grid.n_cells())
        .map(|cell| {
            let c = grid.cell_coords(cell);
            if slabs.iter().any(|s| s.contains(c)) {
                high
            } else {
                1.0
            }
        })
        .collect();
    PermeabilityField::isotropic(kappa)
}

/// Deterministic set of one-cell-thick fracture patches with random normals,
/// positions and in-plane extents between a quarter and all of the domain.
pub fn fracture_network(grid: &GridHierarchy, count: usize, seed: u64) -> Vec<Slab> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.dim();
    let cells = grid.cells();
    (0..count)
        .map(|_| {
            let axis = rng.gen_range(0..dim);
            let mut lo = [0; 3];
            let mut hi = cells;
            for d in 0..dim {
                if d == axis {
                    lo[d] = rng.gen_range(0..cells[d]);
                    hi[d] = lo[d] + 1;
                } else {
                    let len = rng.gen_range((cells[d] / 4).max(1)..=cells[d]);
                    lo[d] = rng.gen_range(0..=cells[d] - len);
                    hi[d] = lo[d] + len;
                }
            }
            Slab { lo, hi }
        })
        .collect()
}

/// Independent log-uniform components in `[1, 10^decades]`; isotropic when
/// `orthotropic` is false. Porosity uniform in `[0.1, 0.3]`.
pub fn gen_log_uniform(
    grid: &GridHierarchy,
    seed: u64,
    decades: f64,
    orthotropic: bool,
) -> Result<PermeabilityField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n_cells();
    let mut perm = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    for _ in 0..n {
        let k = if orthotropic {
            [0; 3].map(|_| 10f64.powf(rng.gen::<f64>() * decades))
        } else {
            [10f64.powf(rng.gen::<f64>() * decades); 3]
        };
        perm.push(k);
        phi.push(rng.gen_range(0.1..=0.3));
    }
    PermeabilityField::new(perm, phi)
}

/// Layered log-normal analogue of a channelized reservoir: each layer along
/// the last active axis draws its own mean of log10 κx inside `log_range`,
/// cells add Gaussian noise, κy = κx and κx/κz is log-uniform in
/// `[1, 10^4]`. Porosity follows log κx, floored at `MIN_POROSITY`.
pub fn gen_spe10_like(
    grid: &GridHierarchy,
    seed: u64,
    log_range: (f64, f64),
) -> Result<PermeabilityField> {
    let (lo, hi) = log_range;
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "log range ({lo}, {hi}) must be increasing"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer_axis = grid.dim() - 1;
    let layers = grid.cells()[layer_axis];
    let spread = hi - lo;
    let means: Vec<f64> = (0..layers)
        .map(|_| lo + spread * (0.2 + 0.6 * rng.gen::<f64>()))
        .collect();
    let noise = Normal::new(0.0, spread / 6.0).expect("positive deviation");
    let n = grid.n_cells();
    let mut perm = Vec::with_capacity(n);
    let mut phi = Vec::with_capacity(n);
    for cell in 0..n {
        let layer = grid.cell_coords(cell)[layer_axis];
        let logk = (means[layer] + noise.sample(&mut rng)).clamp(lo, hi);
        let kx = 10f64.powf(logk);
        let ratio = 10f64.powf(4.0 * rng.gen::<f64>());
        perm.push([kx, kx, kx / ratio]);
        let t = (logk - lo) / spread;
        phi.push((0.3 * t + 0.02 * rng.gen::<f64>()).max(MIN_POROSITY));
    }
    PermeabilityField::new(perm, phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawOrder {
    /// `κx κy κz [φ]` consecutive per cell.
    Interleaved,
    /// All `κx`, then all `κy`, then all `κz` [then all `φ`].
    Planar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawLayout {
    /// 3 (permeability only, φ = 1) or 4 (with porosity).
    pub components: usize,
    pub order: RawOrder,
}

impl Default for RawLayout {
    fn default() -> Self {
        Self {
            components: 4,
            order: RawOrder::Interleaved,
        }
    }
}

/// Reads header-less little-endian f64 values for `n` cells. Porosity is
/// floored at `MIN_POROSITY`.
pub fn load_raw(path: &Path, n: usize, layout: RawLayout) -> Result<PermeabilityField> {
    if layout.components != 3 && layout.components != 4 {
        return Err(Error::InvalidArgument(format!(
            "raw layout needs 3 or 4 components, got {}",
            layout.components
        )));
    }
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let expected = n * layout.components;
    if bytes.len() % 8 != 0 || bytes.len() / 8 != expected {
        return Err(Error::FieldLength {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() / 8,
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    let at = |cell: usize, comp: usize| match layout.order {
        RawOrder::Interleaved => values[cell * layout.components + comp],
        RawOrder::Planar => values[comp * n + cell],
    };
    let perm = (0..n).map(|c| [at(c, 0), at(c, 1), at(c, 2)]).collect();
    let phi = (0..n)
        .map(|c| {
            if layout.components == 4 {
                let p = at(c, 3);
                if p > 0.0 {
                    p.max(MIN_POROSITY)
                } else {
                    p
                }
            } else {
                1.0
            }
        })
        .collect();
    PermeabilityField::new(perm, phi)
}

/// Writes the field in the given raw layout.
pub fn save_raw(field: &PermeabilityField, path: &Path, layout: RawLayout) -> Result<()> {
    let n = field.len();
    let mut values = vec![0.0; n * layout.components];
    for c in 0..n {
        for comp in 0..layout.components {
            let v = if comp < 3 {
                field.perm[c][comp]
            } else {
                field.porosity[c]
            };
            let idx = match layout.order {
                RawOrder::Interleaved => c * layout.components + comp,
                RawOrder::Planar => comp * n + c,
            };
            values[idx] = v;
        }
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_hierarchy;

    fn cube(n: usize) -> GridHierarchy {
        build_hierarchy(3, &[n; 3], &[n as f64; 3], &[1, 1, 1], 1).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let g = build_hierarchy(2, &[1, 1], &[2.0, 1.0], &[1, 1], 1).unwrap();
        let f = PermeabilityField::new(vec![[4.0, 1.0, 1.0]], vec![1.0]).unwrap();
        let nf = normalize(&f, &g).unwrap();
        assert_eq!(nf.conductance(0)[0], 1.0);
        assert_eq!(nf.trace()[0], 2.0);

        let g = cube(1);
        let f = PermeabilityField::new(vec![[1.0, 1e6, 1.0]], vec![1.0]).unwrap();
        assert_eq!(normalize(&f, &g).unwrap().trace()[0], 2.0 + 1e6);
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic(1.0, 1.0), 1.0);
        assert!((harmonic(1.0, 3.0) - 1.5).abs() < 1e-15);
        assert!((harmonic(1.0, 1e6) - 2.0 / (1.0 + 1e-6)).abs() < 1e-15);
    }

    #[test]
    fn boundary_face_rejected() {
        let nf = NormalizedField::from_conductances(2, vec![[1.0; 3]; 2]).unwrap();
        let bad = Face {
            minus: 1,
            plus: 2,
            axis: 0,
        };
        assert!(face_transmissibility(&nf, &bad).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PermeabilityField::new(vec![[1.0, 0.0, 1.0]], vec![0.5]).is_err());
        assert!(PermeabilityField::new(vec![[1.0; 3]], vec![1.5]).is_err());
    }

    #[test]
    fn channel_mask_counts() {
        assert_eq!(default_channel_mask(3).iter().filter(|&&b| b).count(), 80);
        assert_eq!(default_channel_mask(2).iter().filter(|&&b| b).count(), 28);
    }

    #[test]
    fn periodic_cell_tiling() {
        let g = cube(16);
        let mask = default_channel_mask(3);
        let f = gen_periodic_cell(&g, &mask, 1e6).unwrap();
        let high = f.perm().iter().filter(|k| k[0] == 1e6).count();
        assert_eq!(high, 80 * 8);

        let zeros = vec![false; 512];
        let f = gen_periodic_cell(&g, &zeros, 1e6).unwrap();
        assert!(f.perm().iter().all(|k| k[0] == 1.0));
        let ones = vec![true; 512];
        let f = gen_periodic_cell(&g, &ones, 1e6).unwrap();
        assert!(f.perm().iter().all(|k| k[0] == 1e6));

        let g = build_hierarchy(3, &[12, 16, 16], &[1.0; 3], &[1, 1, 1], 1).unwrap();
        assert!(gen_periodic_cell(&g, &mask, 1e6).is_err());
    }

    #[test]
    fn fractured_examples() {
        let g = cube(32);
        let f = gen_fractured(&g, &[], 6).unwrap();
        assert!(f.perm().iter().all(|k| k[0] == 1.0));
        let slab = Slab::plane(&g, 1, 7);
        let f = gen_fractured(&g, &[slab], 0).unwrap();
        assert!(f.perm().iter().all(|k| k[0] == 1.0));
        let f = gen_fractured(&g, &[slab], 4).unwrap();
        assert_eq!(f.perm().iter().filter(|k| k[0] == 1e4).count(), 32 * 32);

        let out = Slab {
            lo: [0, 0, 0],
            hi: [33, 1, 1],
        };
        assert!(gen_fractured(&g, &[out], 2).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let g = cube(8);
        assert_eq!(
            gen_spe10_like(&g, 11, (-1.0, 3.0)).unwrap(),
            gen_spe10_like(&g, 11, (-1.0, 3.0)).unwrap()
        );
        assert_ne!(
            gen_spe10_like(&g, 11, (-1.0, 3.0)).unwrap(),
            gen_spe10_like(&g, 12, (-1.0, 3.0)).unwrap()
        );
        assert_eq!(fracture_network(&g, 5, 3), fracture_network(&g, 5, 3));
    }

    #[test]
    fn spe10_like_ranges() {
        let g = cube(8);
        let f = gen_spe10_like(&g, 5, (-2.0, 4.0)).unwrap();
        for (k, &p) in f.perm().iter().zip(f.porosity()) {
            assert_eq!(k[0], k[1]);
            assert!(k[2] <= k[0] && k[0] / k[2] <= 1e4 * (1.0 + 1e-12));
            assert!((1e-2..=1e4).contains(&k[0]));
            assert!(p >= MIN_POROSITY);
        }
    }
}
