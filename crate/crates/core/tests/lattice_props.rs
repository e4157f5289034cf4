use fillin_core::{enumerate_candidates, FlatTorusMetric};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spd(dim: usize) -> impl Strategy<Value = FlatTorusMetric> {
    proptest::collection::vec(-1.0f64..1.0, dim * dim).prop_filter_map("condition number above 100", move |entries| {
        let a = DMatrix::from_row_slice(dim, dim, &entries);
        let g = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.05;
        let eig = g.clone().symmetric_eigen().eigenvalues;
        (eig.max() / eig.min() <= 100.0).then(|| FlatTorusMetric::new(g).unwrap())
    })
}

fn brute_force(metric: &FlatTorusMetric) -> f64 {
    let bound = metric.gram()[(0, 0)].sqrt() * (1.0 + 1e-12);
    enumerate_candidates(metric, bound)
        .unwrap()
        .iter()
        .map(|k| metric.norm_squared(k))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn systole_equals_enumeration_2d(m in spd(2)) {
        prop_assert_eq!(m.winding_systole(), brute_force(&m));
    }

    #[test]
    fn systole_equals_enumeration_3d(m in spd(3)) {
        prop_assert_eq!(m.winding_systole(), brute_force(&m));
    }

    #[test]
    fn systole_vector_winds_and_realises_length(m in spd(3)) {
        let (k, len) = m.winding_systole_vector();
        prop_assert!(k[0] != 0);
        prop_assert_eq!(m.norm_squared(&k).sqrt(), len);
        prop_assert!(len <= m.gram()[(0, 0)].sqrt());
    }

    #[test]
    fn systole_scales_with_metric(m in spd(2), c in 0.1f64..10.0) {
        let scaled = m.scaled(c).unwrap().winding_systole();
        prop_assert!((scaled - c.sqrt() * m.winding_systole()).abs() <= 1e-12 * scaled);
    }
}

#[test]
fn sheared_torus_beats_the_pure_circle() {
    // e_0 has length sqrt(2) but e_0 - e_1 has length 1
    let m = FlatTorusMetric::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let (k, len) = m.winding_systole_vector();
    assert!((len - 1.0).abs() < 1e-15);
    assert_eq!(k[0].abs(), 1);
}
