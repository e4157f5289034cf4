use std::f64::consts::PI;
use std::sync::Arc;

use fillin_core::{FlatTorusMetric, Grid, ScalarField};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Arc<Grid>> {
    (0.5f64..2.0, 0.5f64..2.0, -0.3f64..0.3, prop::sample::select(vec![8usize, 12, 16])).prop_map(
        |(a, b, c, res)| {
            let off = c * (a * b).sqrt();
            Grid::uniform(FlatTorusMetric::from_rows(&[vec![a, off], vec![off, b]]).unwrap(), res).unwrap()
        },
    )
}

fn random_field(grid: &Arc<Grid>, seed: &[f64]) -> ScalarField {
    let mut i = 0;
    ScalarField::from_fn(grid, |_| {
        i += 1;
        seed[i % seed.len()] * ((i * 7919) % 13) as f64 / 13.0
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn poisson_inverts_laplacian(grid in grid_strategy(), seed in prop::collection::vec(-1.0f64..1.0, 5..17)) {
        let raw = random_field(&grid, &seed);
        let rhs = raw.map(|x| x - raw.mean());
        let f = rhs.poisson_solve_zero_mean().unwrap();
        prop_assert!((&f.laplacian() - &rhs).max_abs() <= 1e-10);
        prop_assert!(f.mean().abs() <= 1e-12);
    }

    #[test]
    fn laplacian_is_self_adjoint_with_zero_integral(
        grid in grid_strategy(),
        s1 in prop::collection::vec(-1.0f64..1.0, 3..11),
        s2 in prop::collection::vec(-1.0f64..1.0, 3..11),
    ) {
        let (f, g) = (random_field(&grid, &s1), random_field(&grid, &s2));
        let lhs = f.laplacian().inner(&g);
        let rhs = f.inner(&g.laplacian());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        prop_assert!(f.laplacian().integrate().abs() <= 1e-10);
        prop_assert!(f.laplacian().inner(&f) <= 1e-12);
    }

    #[test]
    fn laplacian_is_trace_of_hessian(grid in grid_strategy(), k0 in -3i32..=3, k1 in -3i32..=3) {
        let f = ScalarField::from_fn(&grid, |x| (2.0 * PI * (k0 as f64 * x[0] + k1 as f64 * x[1])).sin());
        let inv = grid.metric().inverse_gram();
        let mut trace = ScalarField::zeros(&grid);
        for a in 0..2 {
            for b in 0..2 {
                trace = &trace + &f.second_derivative(a, b).scale(inv[(a, b)]);
            }
        }
        prop_assert!((&trace - &f.laplacian()).max_abs() <= 1e-9);
    }

    #[test]
    fn eigenfunctions_have_expected_eigenvalue(grid in grid_strategy(), k0 in -3i64..=3, k1 in -3i64..=3) {
        prop_assume!(k0 != 0 || k1 != 0);
        let f = ScalarField::from_fn(&grid, |x| (2.0 * PI * (k0 as f64 * x[0] + k1 as f64 * x[1])).cos());
        let inv = grid.metric().inverse_gram();
        let k = [k0 as f64, k1 as f64];
        let mut lambda = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                lambda += 4.0 * PI * PI * inv[(a, b)] * k[a] * k[b];
            }
        }
        let residual = (&f.laplacian() + &f.scale(lambda)).max_abs();
        prop_assert!(residual <= 1e-9 * (1.0 + lambda));
        let back = f.scale(-lambda).poisson_solve_zero_mean().unwrap();
        prop_assert!((&back - &f).max_abs() <= 1e-10);
    }
}

#[test]
fn constants_are_harmonic() {
    let grid = Grid::uniform(FlatTorusMetric::identity(3).unwrap(), 8).unwrap();
    let c = ScalarField::constant(&grid, 4.2);
    assert!(c.laplacian().max_abs() < 1e-12);
    assert!(c.poisson_solve_zero_mean().is_err());
}
