use darcy_core::field::*;
use darcy_core::grid::{build_hierarchy, Face};
use darcy_core::Error;
use proptest::prelude::*;

fn two_cell(ka: [f64; 3], kb: [f64; 3], axis: usize) -> f64 {
    let nf = NormalizedField::from_conductances(3, vec![ka, kb]).unwrap();
    face_transmissibility(&nf, &Face { minus: 0, plus: 1, axis }).unwrap()
}

proptest! {
    #[test]
    fn transmissibility_bounds_and_symmetry(a in 1e-6f64..1e6, b in 1e-6f64..1e6, axis in 0usize..3) {
        let mut ka = [1.0; 3];
        let mut kb = [1.0; 3];
        ka[axis] = a;
        kb[axis] = b;
        let t = two_cell(ka, kb, axis);
        prop_assert!(t >= a.min(b) * (1.0 - 1e-14));
        prop_assert!(t <= 2.0 * a.min(b) * (1.0 + 1e-14));
        prop_assert!(t <= 0.5 * (a + b) * (1.0 + 1e-14));
        prop_assert_eq!(t, two_cell(kb, ka, axis));
    }

    #[test]
    fn transmissibility_monotone(a in 1e-3f64..1e3, b in 1e-3f64..1e3, f in 1.0f64..100.0) {
        prop_assert!(harmonic(a * f, b) >= harmonic(a, b));
        prop_assert!(harmonic(a, b * f) >= harmonic(a, b));
    }

    #[test]
    fn transmissibility_scale_invariant(a in 1e-3f64..1e3, b in 1e-3f64..1e3, s in 1e-4f64..1e4) {
        let lhs = harmonic(s * a, s * b);
        prop_assert!((lhs - s * harmonic(a, b)).abs() <= 1e-12 * lhs);
    }

    #[test]
    fn normalization_divides_by_h_squared(k in 1e-3f64..1e3, hx in 0.1f64..10.0, hy in 0.1f64..10.0) {
        let g = build_hierarchy(2, &[2, 2], &[2.0 * hx, 2.0 * hy], &[1, 1], 1).unwrap();
        let f = PermeabilityField::uniform(4, k).unwrap();
        let nf = normalize(&f, &g).unwrap();
        let t = nf.conductance(0);
        prop_assert!((t[0] - k / (hx * hx)).abs() <= 1e-12 * t[0]);
        prop_assert!((t[1] - k / (hy * hy)).abs() <= 1e-12 * t[1]);
        prop_assert!((nf.trace()[0] - t[0] - t[1]).abs() <= 1e-12 * nf.trace()[0]);
    }
}

#[test]
fn raw_round_trip_and_porosity_floor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.bin");
    let perm = vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]];
    let f = PermeabilityField::new(perm.clone(), vec![0.01, 0.2, 0.3]).unwrap();
    for order in [RawOrder::Interleaved, RawOrder::Planar] {
        let layout = RawLayout { components: 4, order };
        save_raw(&f, &path, layout).unwrap();
        let g = load_raw(&path, 3, layout).unwrap();
        assert_eq!(g.perm(), &perm[..]);
        assert_eq!(g.porosity(), &[MIN_POROSITY, 0.2, 0.3]);
    }
    let layout = RawLayout { components: 3, order: RawOrder::Planar };
    save_raw(&f, &path, layout).unwrap();
    assert!(load_raw(&path, 3, layout).unwrap().porosity().iter().all(|&p| p == 1.0));
}

#[test]
fn raw_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.bin");
    std::fs::write(&path, vec![0u8; 8 * 10]).unwrap();
    let err = load_raw(&path, 3, RawLayout::default()).unwrap_err();
    assert!(matches!(err, Error::FieldLength { expected: 12, found: 10, .. }));
    let err = load_raw(&dir.path().join("missing.bin"), 3, RawLayout::default()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn non_positive_permeability_rejected() {
    let err = PermeabilityField::new(vec![[1.0, 0.0, 1.0]], vec![0.2]).unwrap_err();
    assert!(matches!(err, Error::NonPositive { index: 0, .. }));
}

#[test]
fn generators_are_deterministic() {
    let g = build_hierarchy(3, &[16, 16, 16], &[1.0; 3], &[2, 2, 2], 2).unwrap();
    assert_eq!(gen_log_uniform(&g, 4, 6.0, true).unwrap(), gen_log_uniform(&g, 4, 6.0, true).unwrap());
    assert_ne!(gen_log_uniform(&g, 4, 6.0, true).unwrap(), gen_log_uniform(&g, 5, 6.0, true).unwrap());
    let f = gen_log_uniform(&g, 4, 6.0, true).unwrap();
    assert!(f.contrast(3) <= 1e6 && f.contrast(3) > 1e5);
    let p = gen_periodic_cell(&g, &default_channel_mask(3), 1e4).unwrap();
    assert!((p.contrast(3) - 1e4).abs() < 1e-6);
    let slabs = fracture_network(&g, 6, 2);
    let fr = gen_fractured(&g, &slabs, 4).unwrap();
    assert!((fr.contrast(3) - 1e4).abs() < 1e-6);
    let s = gen_spe10_like(&g, 1, (-1.0, 3.0)).unwrap();
    assert!(s.porosity().iter().all(|&p| p >= MIN_POROSITY));
    assert!(s.perm().iter().all(|k| k[0] == k[1] && k[2] <= k[0]));
}

#[test]
fn periodic_cell_needs_multiple_of_eight() {
    let g = build_hierarchy(2, &[12, 12], &[1.0; 2], &[1, 1], 2).unwrap();
    assert!(matches!(
        gen_periodic_cell(&g, &default_channel_mask(2), 10.0),
        Err(Error::Divisibility { .. })
    ));
}
