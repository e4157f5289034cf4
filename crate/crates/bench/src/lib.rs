//! Shared fixtures for the kernel benchmarks.

use std::f64::consts::PI;

use fillin_core::flow::{init_state, FlowState};
use fillin_core::{FlatTorusMetric, Grid, ScalarField};

/// Smooth positive field `1 + 0.3 cos(2 pi x0) + 0.1 sin(2 pi x1)` on a
/// sheared 2-torus with `points` nodes per axis.
pub fn cosine_field(points: usize) -> ScalarField {
    let metric = FlatTorusMetric::from_rows(&[vec![1.0, 0.2], vec![0.2, 1.5]]).expect("valid gram");
    let grid = Grid::uniform(metric, points).expect("valid grid");
    ScalarField::from_fn(&grid, |x| {
        1.0 + 0.3 * (2.0 * PI * x[0]).cos() + 0.1 * (2.0 * PI * x[1]).sin()
    })
}

/// Flow state for `n = 3` at `rho = 1` built from [`cosine_field`].
pub fn cosine_state(points: usize) -> FlowState {
    init_state(&cosine_field(points), 1.0, 3).expect("positive initial data")
}

/// Gram matrices of increasing anisotropy for systole timings.
pub fn sheared_metric(dim: usize, stretch: f64) -> FlatTorusMetric {
    let rows: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    if i == j {
                        stretch.powi(i as i32)
                    } else {
                        0.3 * stretch.powf(0.5 * (i + j) as f64)
                    }
                })
                .collect()
        })
        .collect();
    FlatTorusMetric::from_rows(&rows).expect("diagonally dominant gram")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        assert_eq!(cosine_field(8).values().len(), 64);
        assert_eq!(cosine_state(8).rho(), 1.0);
        assert!(sheared_metric(3, 4.0).winding_systole() > 0.0);
    }
}
