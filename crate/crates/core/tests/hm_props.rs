use fillin_core::hm::{
    hm_boundary_mean_curvature, hm_mean_curvature_excess, hm_potential, hm_sharpness, HMModel,
};

fn model(n: usize) -> HMModel {
    HMModel::new(n, 1.0, vec![1.0; n - 2]).unwrap()
}

#[test]
fn sharpness_ratio_increases_towards_one() {
    for n in 3..=5 {
        let m = model(n);
        let ratios: Vec<f64> = [2.0, 5.0, 10.0, 20.0, 40.0, 80.0, 160.0]
            .iter()
            .map(|&r| hm_sharpness(&m, r).unwrap().ratio)
            .collect();
        assert!(ratios.windows(2).all(|w| w[1] > w[0]), "n = {n}: {ratios:?}");
        assert!(ratios.iter().all(|&q| q > 0.0 && q <= 1.0), "n = {n}: {ratios:?}");
        assert!(1.0 - ratios[ratios.len() - 1] < 1e-4, "n = {n}: {ratios:?}");
    }
}

#[test]
fn mean_curvature_matches_potential_formula() {
    for n in 3..=5 {
        let m = model(n);
        for r in [1.5, 3.0, 12.0] {
            let v = hm_potential(&m, r).unwrap();
            let dv = 2.0 * r + (n as f64 - 2.0) * r.powi(1 - n as i32);
            let expected = v.sqrt() * (0.5 * dv / v + (n as f64 - 2.0) / r);
            let h = hm_boundary_mean_curvature(&m, r).unwrap();
            assert!((h - expected).abs() < 1e-12 * expected, "n = {n}, r = {r}: {h} vs {expected}");
            let excess = hm_mean_curvature_excess(&m, r).unwrap();
            assert!((excess - (expected - (n - 1) as f64)).abs() < 1e-12, "n = {n}, r = {r}");
        }
    }
}

#[test]
fn radii_inside_the_tip_are_rejected() {
    assert!(hm_sharpness(&model(3), 0.5).is_err());
    assert!(HMModel::new(3, 1.0, vec![]).is_err());
    assert!(HMModel::new(2, 1.0, vec![]).is_err());
}
