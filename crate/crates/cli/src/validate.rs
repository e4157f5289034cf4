use std::f64::consts::PI;

use fillin_core::curvature::{
    fd_scalar_curvature, warped_scalar_curvature_with_rate, FdCurvature, MetricSample,
};
use fillin_core::hm::{hm_sample_metric, HMModel};
use fillin_core::{enumerate_candidates, FlatTorusMetric, Grid, ScalarField};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::output::Check;

fn geometric(r0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| r0 * ratio.powi(i as i32)).collect()
}

fn fd_check(name: &str, r: &FdCurvature, exact: f64, floor: f64) -> Check {
    let dev = (r.value - exact).abs();
    Check::new(
        name,
        dev <= r.error_estimate.max(floor),
        format!(
            "R = {:.12}, exact {exact}, |dev| = {dev:e}, estimate {:e}, order {:?}",
            r.value, r.error_estimate, r.observed_order
        ),
    )
}

fn random_gram(rng: &mut ChaCha8Rng, dim: usize) -> Option<FlatTorusMetric> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let g = &a * a.transpose() + DMatrix::identity(dim, dim) * 0.1;
    let eig = g.clone().symmetric_eigen().eigenvalues;
    let cond = eig.max() / eig.min();
    if cond > 100.0 {
        return None;
    }
    FlatTorusMetric::new(g).ok()
}

/// Systole of the optimised search against brute-force enumeration bounded by
/// the pure winding circle.
pub fn systole_agrees_with_enumeration(metric: &FlatTorusMetric) -> Result<bool, CliError> {
    let bound = metric.gram()[(0, 0)].sqrt() * (1.0 + 1e-12);
    let candidates = enumerate_candidates(metric, bound)?;
    let brute = candidates
        .iter()
        .map(|k| metric.norm_squared(k))
        .fold(f64::INFINITY, f64::min)
        .sqrt();
    Ok(brute == metric.winding_systole())
}

/// Curvature oracle suite (hyperbolic, flat, frozen warped, Horowitz-Myers),
/// spectral Poisson residual, and seeded systole cross-checks.
pub fn validation_suite(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();

    for dim in [2usize, 3] {
        let n = dim + 1;
        let grid = Grid::uniform(FlatTorusMetric::identity(dim)?, 12)?;
        let s = MetricSample::hyperbolic(&grid, geometric(1.0, 1.02, 21))?;
        let r = fd_scalar_curvature(&s, 0, 10)?;
        checks.push(fd_check(
            &format!("hyperbolic_n{n}"),
            &r,
            -((n * (n - 1)) as f64),
            1e-9,
        ));
    }

    let grid = Grid::uniform(FlatTorusMetric::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]])?, 8)?;
    let s = MetricSample::flat_product(&grid, (0..9).map(|i| i as f64 * 0.1).collect(), 3.0)?;
    checks.push(fd_check("flat_product", &fd_scalar_curvature(&s, 5, 4)?, 0.0, 1e-10));

    let grid = Grid::uniform(FlatTorusMetric::identity(2)?, 8)?;
    let rhos = geometric(1.0, 1.01, 9);
    let u: Vec<ScalarField> = rhos.iter().map(|_| ScalarField::constant(&grid, 2.0)).collect();
    let closed = warped_scalar_curvature_with_rate(&u[4], rhos[4], 3, &ScalarField::zeros(&grid));
    let s = MetricSample::warped_radial(rhos, &u)?;
    checks.push(fd_check("frozen_warped", &fd_scalar_curvature(&s, 3, 4)?, closed.values()[3], 1e-9));

    let model = HMModel::new(3, 1.0, vec![10.0])?;
    let s = hm_sample_metric(&model, (3.0, 3.4), 9, 21)?;
    checks.push(fd_check("horowitz_myers", &fd_scalar_curvature(&s, 0, 10)?, -6.0, 1e-9));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::uniform(FlatTorusMetric::from_rows(&[vec![1.3, 0.4], vec![0.4, 0.9]])?, 32)?;
    let raw = ScalarField::from_fn(&grid, |_| rng.random_range(-1.0..1.0));
    let rhs = raw.map(|x| x - raw.mean()).dealias_two_thirds();
    let sol = rhs.poisson_solve_zero_mean()?;
    let residual = (&sol.laplacian() - &rhs).max_abs();
    checks.push(Check::new(
        "poisson_residual",
        residual <= 1e-10,
        format!("max |Delta f - rhs| = {residual:e}"),
    ));

    let (mut tried, mut agreed) = (0usize, 0usize);
    for dim in [2usize, 3] {
        let mut found = 0;
        while found < 10 {
            if let Some(m) = random_gram(&mut rng, dim) {
                found += 1;
                tried += 1;
                agreed += usize::from(systole_agrees_with_enumeration(&m)?);
            }
        }
    }
    checks.push(Check::new(
        "systole_enumeration",
        tried == agreed,
        format!("{agreed}/{tried} random Gram matrices agree"),
    ));

    let cosine = ScalarField::from_fn(&grid, |x| (2.0 * PI * x[0]).cos());
    let integral = cosine.integrate().abs();
    checks.push(Check::new(
        "zero_integral",
        integral <= 1e-10,
        format!("|integral of cos| = {integral:e}"),
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let checks = validation_suite(7).unwrap();
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
        assert_eq!(checks.len(), 8);
    }
}
