//! Horowitz-Myers soliton `V^-1 dr^2 + V dxi^2 + r^2 (flat T^{n-2})` with
//! `V(r) = r^2 - r0^n r^(2-n)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::curvature::{MetricSample, SampleKind};
use crate::error::{Error, Result};
use crate::lattice::{FlatTorusMetric, Grid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HMModel {
    pub n: usize,
    /// Tip radius where `V` vanishes.
    pub r0: f64,
    /// Period of `xi` fixed by smoothness at the tip, `4 pi / (n r0)`.
    pub xi_period: f64,
    /// Circumferences of the `n-2` flat circle factors at `r = 1`.
    pub torus_circumferences: Vec<f64>,
}

impl HMModel {
    pub fn new(n: usize, r0: f64, torus_circumferences: Vec<f64>) -> Result<Self> {
        if n < 3 {
            return Err(Error::BadDimension(format!("n = {n} < 3")));
        }
        if torus_circumferences.len() != n - 2 {
            return Err(Error::BadDimension(format!(
                "{} circumferences given, expected {}",
                torus_circumferences.len(),
                n - 2
            )));
        }
        if !(r0 > 0.0) || torus_circumferences.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::DomainError(
                "tip radius and circumferences must be positive".into(),
            ));
        }
        Ok(Self {
            n,
            r0,
            xi_period: 4.0 * std::f64::consts::PI / (n as f64 * r0),
            torus_circumferences,
        })
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if r >= self.r0 && r.is_finite() {
            Ok(())
        } else {
            Err(Error::DomainError(format!("r = {r} is below the tip radius {}", self.r0)))
        }
    }
}

/// `V(r) = r^2 - r0^n r^(2-n)`.
pub fn hm_potential(model: &HMModel, r: f64) -> Result<f64> {
    model.check_radius(r)?;
    let n = model.n as i32;
    Ok(r * r - model.r0.powi(n) * r.powi(2 - n))
}

/// `V'(r) = 2r + (n-2) r0^n r^(1-n)`.
pub fn hm_potential_prime(model: &HMModel, r: f64) -> Result<f64> {
    model.check_radius(r)?;
    let n = model.n as i32;
    Ok(2.0 * r + (n - 2) as f64 * model.r0.powi(n) * r.powi(1 - n))
}

/// Mean curvature of `{r = R}` with respect to the outward normal,
/// `sqrt(V) (V'/(2V) + (n-2)/R)`.
pub fn hm_boundary_mean_curvature(model: &HMModel, r: f64) -> Result<f64> {
    if !(r > model.r0) {
        return Err(Error::DomainError(format!(
            "boundary radius {r} must exceed the tip radius {}",
            model.r0
        )));
    }
    let v = hm_potential(model, r)?;
    let dv = hm_potential_prime(model, r)?;
    Ok(v.sqrt() * (0.5 * dv / v + (model.n - 2) as f64 / r))
}

/// `H(R) - (n-1)` in the cancellation-free form
/// `(a/s) ((n-1)/(1+s) - (n-2)/2)` with `a = (r0/R)^n`, `s = sqrt(1-a)`.
pub fn hm_mean_curvature_excess(model: &HMModel, r: f64) -> Result<f64> {
    hm_boundary_mean_curvature(model, r)?;
    let n = model.n as f64;
    let a = (model.r0 / r).powi(model.n as i32);
    let s = (1.0 - a).sqrt();
    Ok(a / s * ((n - 1.0) / (1.0 + s) - 0.5 * (n - 2.0)))
}

/// Induced flat metric on `{r = R}` in unit-cube coordinates, `xi` first.
pub fn hm_boundary_metric(model: &HMModel, r: f64) -> Result<FlatTorusMetric> {
    let v = hm_potential(model, r)?;
    let mut diag = vec![v * model.xi_period * model.xi_period];
    diag.extend(model.torus_circumferences.iter().map(|c| r * r * c * c));
    FlatTorusMetric::diagonal(&diag)
}

/// One row of a sharpness sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessPoint {
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub sigma: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

pub fn hm_sharpness(model: &HMModel, r: f64) -> Result<SharpnessPoint> {
    let h = hm_boundary_mean_curvature(model, r)?;
    let sigma = hm_boundary_metric(model, r)?.winding_systole();
    let lhs = hm_mean_curvature_excess(model, r)?;
    let rhs = crate::total_mean_curvature_bound(model.n, sigma);
    Ok(SharpnessPoint {
        r,
        h,
        sigma,
        lhs,
        rhs,
        ratio: lhs / rhs,
    })
}

/// `(H(R) - (n-1)) / (1/2 (4 pi / (n sigma(R)))^n)`.
pub fn hm_sharpness_ratio(model: &HMModel, r: f64) -> Result<f64> {
    hm_sharpness(model, r).map(|p| p.ratio)
}

/// The model sampled in `(xi, theta_1.., r)` on a `torus_points^(n-1)` grid
/// times `radial_points` equally spaced radii in `r_range`.
pub fn hm_sample_metric(
    model: &HMModel,
    r_range: (f64, f64),
    torus_points: usize,
    radial_points: usize,
) -> Result<MetricSample> {
    let (a, b) = r_range;
    if !(a > model.r0) || !(b > a) {
        return Err(Error::DomainError(format!(
            "radial range [{a}, {b}] must lie strictly above the tip radius {}",
            model.r0
        )));
    }
    if radial_points < 2 {
        return Err(Error::DomainError("need at least two radial points".into()));
    }
    let m = model.n - 1;
    let grid: Arc<Grid> = Grid::uniform(FlatTorusMetric::identity(m)?, torus_points)?;
    let rs: Vec<f64> = (0..radial_points)
        .map(|i| a + (b - a) * i as f64 / (radial_points - 1) as f64)
        .collect();
    let mut lapse = Vec::with_capacity(rs.len());
    let mut slice = Vec::with_capacity(rs.len());
    for &r in &rs {
        let v = hm_potential(model, r)?;
        lapse.push(vec![1.0 / v; grid.len()]);
        let mut g = DMatrix::zeros(m, m);
        g[(0, 0)] = v * model.xi_period * model.xi_period;
        for (i, c) in model.torus_circumferences.iter().enumerate() {
            g[(i + 1, i + 1)] = r * r * c * c;
        }
        slice.push(g);
    }
    MetricSample::new(SampleKind::GeneralDiagonalBlock, grid, rs, lapse, slice)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::fd_scalar_curvature;

    fn model() -> HMModel {
        HMModel::new(3, 1.0, vec![10.0]).unwrap()
    }

    #[test]
    fn potential_values() {
        let m = model();
        assert_eq!(hm_potential(&m, 1.0).unwrap(), 0.0);
        assert!((hm_potential(&m, 10.0).unwrap() - 99.9).abs() < 1e-12);
        assert!((hm_potential_prime(&m, 10.0).unwrap() - 20.01).abs() < 1e-12);
        assert!((m.xi_period * hm_potential_prime(&m, 1.0).unwrap() - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!(matches!(hm_potential(&m, 0.5), Err(Error::DomainError(_))));
        let big = 1e6;
        assert!((hm_potential(&m, big).unwrap() / (big * big) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_difference() {
        let m = HMModel::new(4, 1.3, vec![2.0, 3.0]).unwrap();
        let (r, h) = (2.7, 1e-5);
        let fd = (hm_potential(&m, r + h).unwrap() - hm_potential(&m, r - h).unwrap()) / (2.0 * h);
        assert!((fd - hm_potential_prime(&m, r).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn mean_curvature_values() {
        let m = model();
        let h = hm_boundary_mean_curvature(&m, 10.0).unwrap();
        assert!((h - 2.000500).abs() < 1e-6);
        for r in [50.0, 100.0, 200.0] {
            let h = hm_boundary_mean_curvature(&m, r).unwrap();
            assert!(((h - 2.0) * r * r * r - 0.5).abs() < 2.0 / (r * r * r));
        }
        assert!(hm_boundary_mean_curvature(&m, 1.0).is_err());
    }

    #[test]
    fn mean_curvature_is_area_variation() {
        // H = d(log area)/ds with ds = dr / sqrt(V); area ~ sqrt(V) r^(n-2)
        let m = HMModel::new(4, 1.0, vec![3.0, 3.0]).unwrap();
        let r = 3.0;
        let area = |r: f64| hm_potential(&m, r).unwrap().sqrt() * r * r;
        let h = 1e-4;
        let dlog = ((area(r + h)).ln() - (area(r - h)).ln()) / (2.0 * h);
        let expect = hm_potential(&m, r).unwrap().sqrt() * dlog;
        assert!((expect - hm_boundary_mean_curvature(&m, r).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn systole_is_xi_circle() {
        let m = model();
        for r in [5.0, 10.0, 40.0] {
            let g = hm_boundary_metric(&m, r).unwrap();
            let expect = hm_potential(&m, r).unwrap().sqrt() * m.xi_period;
            assert!((g.winding_systole() - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn ratio_close_to_one() {
        let m = model();
        let p = hm_sharpness(&m, 10.0).unwrap();
        assert!((p.ratio - 1.0).abs() < 1e-3);
        assert!(p.ratio < 1.0);
    }

    #[test]
    fn sample_is_einstein_scalar() {
        let m = model();
        let s = hm_sample_metric(&m, (3.0, 3.4), 9, 21).unwrap();
        let r = fd_scalar_curvature(&s, 0, 10).unwrap();
        assert!((r.value + 6.0).abs() <= r.error_estimate.max(1e-9));
        assert!(hm_sample_metric(&m, (1.0, 2.0), 9, 5).is_err());
    }
}
