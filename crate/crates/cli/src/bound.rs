use fillin_core::{total_mean_curvature_bound, FlatTorusMetric, ScalarField};
use serde::Serialize;

use crate::error::CliError;

/// Boundary mean curvature: a constant or a field on the torus grid.
#[derive(Clone, Debug)]
pub enum MeanCurvatureData {
    Constant(f64),
    Field(ScalarField),
}

impl MeanCurvatureData {
    fn min(&self) -> f64 {
        match self {
            Self::Constant(h) => *h,
            Self::Field(f) => f.min(),
        }
    }

    fn mean(&self) -> f64 {
        match self {
            Self::Constant(h) => *h,
            Self::Field(f) => f.mean(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Admissibility {
    /// The data satisfy the total mean curvature bound.
    Admissible,
    /// No fill-in with `R >= -n(n-1)` and `H > 0` exists.
    Excluded,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundVerdict {
    pub n: usize,
    pub systole: f64,
    /// `mean(H) - (n-1)`
    pub lhs: f64,
    /// `1/2 (4 pi / (n sigma))^n`
    pub rhs: f64,
    /// `rhs - lhs`
    pub slack: f64,
    pub relative_slack: f64,
    pub verdict: Admissibility,
}

/// Compares boundary data `(gamma, H)` on `S^1 x T^{n-2}` with the total mean
/// curvature bound.
pub fn bound_check(
    metric: &FlatTorusMetric,
    n: usize,
    h: &MeanCurvatureData,
) -> Result<BoundVerdict, CliError> {
    if metric.dim() + 1 != n {
        return Err(CliError::Config(format!(
            "a {}-torus bounds an {}-manifold, but n = {n}",
            metric.dim(),
            metric.dim() + 1
        )));
    }
    if let MeanCurvatureData::Field(f) = h {
        if f.grid().metric() != metric {
            return Err(CliError::Config(
                "mean curvature field lives on a different torus".into(),
            ));
        }
    }
    let hmin = h.min();
    if !(hmin > 0.0) || !hmin.is_finite() {
        return Err(CliError::Config(format!(
            "mean curvature must be positive, min is {hmin}"
        )));
    }
    let systole = metric.winding_systole();
    let lhs = h.mean() - (n - 1) as f64;
    let rhs = total_mean_curvature_bound(n, systole);
    let slack = rhs - lhs;
    Ok(BoundVerdict {
        n,
        systole,
        lhs,
        rhs,
        slack,
        relative_slack: slack / rhs,
        verdict: if slack >= 0.0 {
            Admissibility::Admissible
        } else {
            Admissibility::Excluded
        },
    })
}
