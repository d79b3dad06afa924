use darcy_core::grid::{build_hierarchy, Level, Side};
use darcy_core::Error;
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>, usize)> {
    (2usize..=3, 1usize..=3).prop_flat_map(|(dim, sd)| {
        (
            Just(dim),
            proptest::collection::vec(1usize..=3, dim),
            proptest::collection::vec(1usize..=3, dim),
            Just(sd),
        )
    })
}

proptest! {
    #[test]
    fn blocks_partition_and_nest((dim, cc, mult, sd) in dims()) {
        let cells: Vec<usize> = cc.iter().zip(&mult).map(|(b, m)| b * m * sd).collect();
        let g = build_hierarchy(dim, &cells, &vec![1.0; dim], &cc, sd).unwrap();
        let n = g.n_cells();
        for level in [Level::Coarse, Level::CoarseCoarse] {
            let map = g.block_map(level);
            let mut seen = vec![0usize; n];
            for b in 0..map.n_blocks() {
                for c in map.block_cells(b).unwrap() {
                    seen[c] += 1;
                    prop_assert_eq!(map.block_of(c).unwrap(), b);
                }
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
        }
        let c_map = g.block_map(Level::Coarse);
        let cc_map = g.block_map(Level::CoarseCoarse);
        prop_assert_eq!(c_map.n_blocks(), g.m_c());
        prop_assert_eq!(cc_map.n_blocks(), g.m_cc());
        prop_assert_eq!(g.m_c(), g.m_cc() * g.coarse_per_cc());
        for b in 0..g.m_c() {
            let parent = g.parent_of(b);
            for c in c_map.block_cells(b).unwrap() {
                prop_assert_eq!(cc_map.block_of(c).unwrap(), parent);
            }
        }
    }

    #[test]
    fn face_count_formula((dim, cc, mult, sd) in dims()) {
        let cells: Vec<usize> = cc.iter().zip(&mult).map(|(b, m)| b * m * sd).collect();
        let g = build_hierarchy(dim, &cells, &vec![2.0; dim], &cc, sd).unwrap();
        let n: usize = cells.iter().product();
        let expected: usize = (0..dim).map(|d| n / cells[d] * (cells[d] - 1)).sum();
        prop_assert_eq!(g.face_count(), expected);
        prop_assert_eq!(g.internal_faces().count(), expected);
        for f in g.internal_faces() {
            prop_assert_eq!(g.neighbor(f.minus, f.axis, Side::Max), Some(f.plus));
        }
    }

    #[test]
    fn index_round_trip((dim, cc, mult, sd) in dims()) {
        let cells: Vec<usize> = cc.iter().zip(&mult).map(|(b, m)| b * m * sd).collect();
        let g = build_hierarchy(dim, &cells, &vec![1.0; dim], &cc, sd).unwrap();
        for c in 0..g.n_cells() {
            let [i, j, k] = g.cell_coords(c);
            prop_assert_eq!(g.cell_index(i, j, k).unwrap(), c);
        }
    }
}

#[test]
fn divisibility_is_reported() {
    let err = build_hierarchy(2, &[10, 8], &[1.0, 1.0], &[3, 2], 2).unwrap_err();
    assert!(matches!(err, Error::Divisibility { axis: 'x', .. }));
    assert!(build_hierarchy(2, &[8, 8], &[1.0, 1.0], &[2, 2], 0).is_err());
    assert!(build_hierarchy(4, &[8; 4], &[1.0; 4], &[2; 4], 2).is_err());
}

#[test]
fn two_dimensional_thickness() {
    let g = build_hierarchy(2, &[4, 4], &[80.0, 40.0], &[1, 1], 2)
        .unwrap()
        .with_thickness(170.0)
        .unwrap();
    assert_eq!(g.h(), [20.0, 10.0, 170.0]);
    assert!((g.cell_volume() - 20.0 * 10.0 * 170.0).abs() < 1e-9);
    assert_eq!(g.cells(), [4, 4, 1]);
}
