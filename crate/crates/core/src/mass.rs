//! Mass functional, mass aspect and almost-CMC slices of a flow trace.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{dissipation_of, mass_of, FlowState, FlowTrace};
use crate::spectral::ScalarField;
use crate::stencil::{interpolation_weights, window_start};

/// Lower and upper radius of the default decay-fit window.
pub const FIT_WINDOW: (f64, f64) = (10.0, 100.0);

/// `H = (n-1)/u` of the slice `Sigma_rho`.
pub fn mean_curvature_field(state: &FlowState) -> ScalarField {
    state.mean_curvature()
}

/// `F(rho) = rho^n / vol * int (n-1)(1 - u^-1) dvol_gamma`.
pub fn mass_functional(state: &FlowState) -> f64 {
    mass_of(state.deviation(), state.rho(), state.n())
}

/// `-(n(n-1)/2) rho^n / vol * int u^-1 (1-u)^2 dvol_gamma`, equal to `rho dF/drho`.
pub fn dissipation(state: &FlowState) -> f64 {
    dissipation_of(state.deviation(), state.rho(), state.n())
}

/// Least-squares slope of `log y` against `log x`.
///
/// `None` when fewer than two points are given or some `y` is not positive.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || ys.iter().any(|&y| !(y > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug)]
pub struct MassReport {
    pub n: usize,
    /// Mass aspect `mu = lim rho^n (u - 1)`.
    pub mu: ScalarField,
    pub mu0: f64,
    /// Zero-mean solution of `Delta f = (n-1)(mu0 - mu)`.
    pub f: ScalarField,
    /// Decay exponent of `max |psi - mu|` over the fit window.
    pub fit_exponent_psi: Option<f64>,
    /// Decay exponent of `max |u - 1|` over the fit window.
    pub fit_exponent_deviation: Option<f64>,
    pub f_initial: f64,
    /// `F` extrapolated to `rho = infinity`.
    pub f_limit: f64,
    /// Radii of the two checkpoints used for the extrapolation.
    pub extrapolation_rhos: (f64, f64),
}

/// Serializable scalar part of a [`MassReport`], with references to where the
/// `mu` and `f` fields were written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassSummary {
    pub n: usize,
    pub mu0: f64,
    #[serde(rename = "F_initial")]
    pub f_initial: f64,
    #[serde(rename = "F_limit")]
    pub f_limit: f64,
    pub fit_exponent_psi: Option<f64>,
    pub fit_exponent_deviation: Option<f64>,
    pub extrapolation_rhos: (f64, f64),
    pub mu_file: Option<String>,
    pub f_file: Option<String>,
}

impl MassReport {
    pub fn summary(&self, mu_file: Option<String>, f_file: Option<String>) -> MassSummary {
        MassSummary {
            n: self.n,
            mu0: self.mu0,
            f_initial: self.f_initial,
            f_limit: self.f_limit,
            fit_exponent_psi: self.fit_exponent_psi,
            fit_exponent_deviation: self.fit_exponent_deviation,
            extrapolation_rhos: self.extrapolation_rhos,
            mu_file,
            f_file,
        }
    }
}

/// Mass aspect from a converged trace, fitting decay over [`FIT_WINDOW`].
pub fn extract_mass_aspect(trace: &FlowTrace) -> Result<MassReport> {
    extract_mass_aspect_in(trace, FIT_WINDOW.0, FIT_WINDOW.1)
}

/// Mass aspect from a converged trace.
///
/// `mu` is the extrapolation of `psi = mu + O(rho^-2)` from the last two
/// checkpoints; decay exponents are fitted on checkpoints in `[fit_lo, fit_hi]`.
pub fn extract_mass_aspect_in(trace: &FlowTrace, fit_lo: f64, fit_hi: f64) -> Result<MassReport> {
    if !trace.converged {
        return Err(Error::NotConverged(
            "psi stopping rule was not met".into(),
        ));
    }
    let cps = &trace.checkpoints;
    if cps.len() < 3 {
        return Err(Error::NotConverged(format!(
            "need at least 3 checkpoints, have {}",
            cps.len()
        )));
    }
    let n = trace.n;
    let (c1, c2) = (&cps[cps.len() - 2], &cps[cps.len() - 1]);
    let (r1, r2) = (c1.rho * c1.rho, c2.rho * c2.rho);
    let (p1, p2) = (c1.psi(n), c2.psi(n));
    let mu = p1.zip_map(&p2, |a, b| (b * r2 - a * r1) / (r2 - r1));
    let mu0 = mu.mean();
    let rhs = mu.map(|m| (n - 1) as f64 * (mu0 - m));
    let f = rhs.poisson_solve_zero_mean()?;

    let f1 = mass_of(&c1.v, c1.rho, n);
    let f2 = mass_of(&c2.v, c2.rho, n);
    let f_limit = (f2 * r2 - f1 * r1) / (r2 - r1);

    let window: Vec<_> = cps
        .iter()
        .filter(|c| c.rho >= fit_lo * (1.0 - 1e-12) && c.rho <= fit_hi * (1.0 + 1e-12))
        .collect();
    let rhos: Vec<f64> = window.iter().map(|c| c.rho).collect();
    let psi_dev: Vec<f64> = window
        .iter()
        .map(|c| (&c.psi(n) - &mu).max_abs())
        .collect();
    let u_dev: Vec<f64> = window.iter().map(|c| c.v.max_abs()).collect();

    Ok(MassReport {
        n,
        mu,
        mu0,
        f,
        fit_exponent_psi: log_log_slope(&rhos, &psi_dev),
        fit_exponent_deviation: log_log_slope(&rhos, &u_dev),
        f_initial: trace.steps[0].mass,
        f_limit,
        extrapolation_rhos: (c1.rho, c2.rho),
    })
}

/// `rho dF/drho` against the dissipation at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub rho: f64,
    /// `dF/dt` with `t = log rho`, differenced along the accepted steps.
    pub rho_df_drho: f64,
    pub dissipation: f64,
    /// `|rho dF/drho - dissipation| / |dissipation|` (zero when both vanish).
    pub relative: f64,
}

/// Residual of `rho dF/drho = dissipation` at every checkpoint with a full
/// five-step stencil.
pub fn identity_residuals(trace: &FlowTrace) -> Vec<IdentityResidual> {
    let n = trace.n;
    trace
        .checkpoints
        .iter()
        .filter(|c| c.has_full_stencil())
        .filter_map(|c| {
            let w = c.log_derivative_weights()?;
            let rho_df_drho: f64 = w
                .iter()
                .zip(&c.stencil)
                .map(|(wk, (r, v))| wk * mass_of(v, *r, n))
                .sum();
            let dissipation = dissipation_of(&c.v, c.rho, n);
            let diff = (rho_df_drho - dissipation).abs();
            let relative = if diff == 0.0 { 0.0 } else { diff / dissipation.abs() };
            Some(IdentityResidual {
                rho: c.rho,
                rho_df_drho,
                dissipation,
                relative,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainInequalityReport {
    pub f_initial: f64,
    pub f_limit: f64,
    /// `(n-1) mu0`
    pub expected_limit: f64,
    /// Largest step-to-step increase of `F` (zero or negative when monotone).
    pub max_increase: f64,
    /// `F_initial - F_limit`, non-negative when the inequality holds.
    pub slack: f64,
    /// `|F_limit - (n-1) mu0|`
    pub limit_error: f64,
    pub limit_tolerance: f64,
    pub monotone: bool,
    pub pass: bool,
}

/// Checks `F(rho0) >= F(rho)` along the trace and `lim F = (n-1) mu0`.
pub fn check_main_inequality(trace: &FlowTrace) -> Result<MainInequalityReport> {
    let report = extract_mass_aspect(trace)?;
    let masses: Vec<f64> = trace.steps.iter().map(|s| s.mass).collect();
    let max_increase = masses
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let monotone = masses.windows(2).all(|w| w[1] <= w[0]);
    let expected_limit = (trace.n - 1) as f64 * report.mu0;
    let limit_error = (report.f_limit - expected_limit).abs();
    let limit_tolerance = 1e-4 * (1.0 + report.f_initial.abs());
    let below = masses.iter().all(|&m| m <= report.f_initial);
    Ok(MainInequalityReport {
        f_initial: report.f_initial,
        f_limit: report.f_limit,
        expected_limit,
        max_increase,
        slack: report.f_initial - report.f_limit,
        limit_error,
        limit_tolerance,
        monotone,
        pass: monotone && below && limit_error <= limit_tolerance,
    })
}

/// Pointwise data on the surface `rho = lambda + kappa f(x)` needed for its
/// mean curvature.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicePoint {
    pub rho: f64,
    pub u: f64,
    /// `d u / d x^i` at fixed `rho`.
    pub du: Vec<f64>,
    /// `rho du/drho`.
    pub rho_du_drho: f64,
    pub kappa: f64,
    pub df: Vec<f64>,
    pub ddf: DMatrix<f64>,
}

/// Mean curvature of the level set `phi = rho - lambda - kappa f = const` in
/// `g = rho^2 gamma + u^2 rho^-2 drho^2`, outward normal along `grad phi`.
pub fn level_set_mean_curvature(gram: &DMatrix<f64>, inverse: &DMatrix<f64>, p: &SlicePoint) -> f64 {
    let m = gram.nrows();
    let (rho, u, k) = (p.rho, p.u, p.kappa);
    let u_rho = p.rho_du_drho / rho;
    let rho2 = rho * rho;
    let u2 = u * u;

    // raised f-gradient and gamma(du, df)
    let mut up_f = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            up_f[i] += inverse[(i, j)] * p.df[j];
        }
    }
    let du_df: f64 = (0..m).map(|i| p.du[i] * up_f[i]).sum();
    let df_sq: f64 = (0..m).map(|i| p.df[i] * up_f[i]).sum();

    // Hessian of phi in (x, rho) coordinates
    let h_rr = 1.0 / rho - u_rho / u - k * u * du_df / (rho2 * rho2);
    let h_ri: Vec<f64> = (0..m).map(|i| -p.du[i] / u + k * p.df[i] / rho).collect();
    let h_ij = |i: usize, j: usize| rho2 * rho / u2 * gram[(i, j)] - k * p.ddf[(i, j)];

    let mut trace_ij = 0.0;
    for i in 0..m {
        for j in 0..m {
            trace_ij += inverse[(i, j)] * h_ij(i, j);
        }
    }
    let lap = rho2 / u2 * h_rr + trace_ij / rho2;

    // gradient of phi
    let a_r = rho2 / u2;
    let a: Vec<f64> = up_f.iter().map(|x| -k * x / rho2).collect();
    let norm_sq = a_r + k * k * df_sq / rho2;

    let mut hess_nn = h_rr * a_r * a_r;
    for i in 0..m {
        hess_nn += 2.0 * a_r * h_ri[i] * a[i];
        for j in 0..m {
            hess_nn += h_ij(i, j) * a[i] * a[j];
        }
    }
    (lap - hess_nn / norm_sq) / norm_sq.sqrt()
}

/// Spatial data of one checkpoint used by the slice interpolation.
struct PsiData {
    log_rho: f64,
    psi: Vec<f64>,
    dpsi: Vec<Vec<f64>>,
    lap_psi: Vec<f64>,
}

/// Mean curvature of `rho = lambda + lambda^(3-n) f(x)`.
///
/// `psi`, its gradient and Laplacian are interpolated cubically in `log rho`
/// from the four checkpoints around `lambda`; `rho du/drho` comes from the flow
/// equation at the interpolated point.
pub fn perturbed_slice_mean_curvature(
    trace: &FlowTrace,
    lambda: f64,
    f: &ScalarField,
) -> Result<ScalarField> {
    let n = trace.n;
    let grid = f.grid().clone();
    let scale = 1e-10 * (1.0 + f.max_abs());
    if f.mean().abs() > scale {
        return Err(Error::NotZeroMean(f.mean()));
    }
    let cps = &trace.checkpoints;
    if cps.len() < 4 {
        return Err(Error::SurfaceOutOfRange {
            rho: lambda,
            lo: cps.first().map_or(f64::NAN, |c| c.rho),
            hi: cps.last().map_or(f64::NAN, |c| c.rho),
        });
    }
    let logs: Vec<f64> = cps.iter().map(|c| c.rho.ln()).collect();
    let start = window_start(&logs, lambda.ln(), 4);
    let window = &cps[start..start + 4];
    let (lo, hi) = (window[0].rho, window[3].rho);

    let kappa = lambda.powi(3 - n as i32);
    let m = n - 1;
    let rho_s: Vec<f64> = f.values().iter().map(|fx| lambda + kappa * fx).collect();
    let (margin_lo, margin_hi) = (cps[1].rho, cps[cps.len() - 2].rho);
    if lambda < margin_lo || lambda > margin_hi {
        return Err(Error::SurfaceOutOfRange {
            rho: lambda,
            lo: margin_lo,
            hi: margin_hi,
        });
    }
    for &r in &rho_s {
        if r < lo || r > hi {
            return Err(Error::SurfaceOutOfRange { rho: r, lo, hi });
        }
    }

    let data: Vec<PsiData> = window
        .iter()
        .map(|c| {
            let psi = c.psi(n);
            let dpsi = psi.gradient().into_iter().map(|g| g.into_values()).collect();
            PsiData {
                log_rho: c.rho.ln(),
                lap_psi: psi.laplacian().into_values(),
                dpsi,
                psi: psi.into_values(),
            }
        })
        .collect();
    let nodes: Vec<f64> = data.iter().map(|d| d.log_rho).collect();

    let df: Vec<ScalarField> = f.gradient();
    let ddf: Vec<Vec<ScalarField>> = (0..m)
        .map(|a| (0..m).map(|b| f.second_derivative(a, b)).collect())
        .collect();
    let metric = trace.u0.grid().metric();
    let (gram, inverse) = (metric.gram(), metric.inverse_gram());

    let mut out = Vec::with_capacity(grid.len());
    for (node, &r) in rho_s.iter().enumerate() {
        let w = interpolation_weights(&nodes, r.ln());
        let interp = |pick: &dyn Fn(&PsiData) -> f64| -> f64 {
            w.iter().zip(&data).map(|(wk, d)| wk * pick(d)).sum()
        };
        let scale = r.powi(-(n as i32));
        let v = scale * interp(&|d| d.psi[node]);
        let u = 1.0 + v;
        let lap_u = scale * interp(&|d| d.lap_psi[node]);
        let du: Vec<f64> = (0..m).map(|i| scale * interp(&|d| d.dpsi[i][node])).collect();
        let point = SlicePoint {
            rho: r,
            u,
            du,
            rho_du_drho: crate::flow::pde_rate(v, lap_u, r.powi(-2), n),
            kappa,
            df: df.iter().map(|g| g.values()[node]).collect(),
            ddf: DMatrix::from_fn(m, m, |a, b| ddf[a][b].values()[node]),
        };
        out.push(level_set_mean_curvature(gram, inverse, &point));
    }
    Ok(ScalarField::from_vec_unchecked(&grid, out))
}

/// `max |H - (n-1)(1 - lambda^-n mu0)|` over the perturbed slice.
pub fn slice_cmc_deviation(trace: &FlowTrace, report: &MassReport, lambda: f64) -> Result<f64> {
    let h = perturbed_slice_mean_curvature(trace, lambda, &report.f)?;
    let target = (report.n - 1) as f64 * (1.0 - lambda.powi(-(report.n as i32)) * report.mu0);
    Ok(h.values().iter().map(|x| (x - target).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::init_state;
    use crate::lattice::{FlatTorusMetric, Grid};

    #[test]
    fn scalar_examples() {
        let g = Grid::uniform(FlatTorusMetric::identity(2).unwrap(), 8).unwrap();
        let one = init_state(&ScalarField::constant(&g, 1.0), 1.0, 3).unwrap();
        assert_eq!(mass_functional(&one), 0.0);
        assert_eq!(dissipation(&one), 0.0);
        assert!(mean_curvature_field(&one).values().iter().all(|&h| h == 2.0));
        let two = init_state(&ScalarField::constant(&g, 2.0), 1.0, 3).unwrap();
        assert!((mass_functional(&two) - 1.0).abs() < 1e-15);
        assert!((dissipation(&two) + 1.5).abs() < 1e-15);
        assert!(mean_curvature_field(&two).values().iter().all(|&h| h == 1.0));
    }

    #[test]
    fn slope_fit() {
        let xs = [10.0, 20.0, 40.0, 80.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-2.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 2.5).abs() < 1e-12);
        assert_eq!(log_log_slope(&xs, &[1.0, 0.0, 1.0, 1.0]), None);
    }

    #[test]
    fn level_set_reduces_to_slice() {
        let gram = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let inverse = gram.clone().try_inverse().unwrap();
        let p = SlicePoint {
            rho: 3.0,
            u: 1.3,
            du: vec![0.2, -0.1],
            rho_du_drho: 0.4,
            kappa: 1.0,
            df: vec![0.0, 0.0],
            ddf: DMatrix::zeros(2, 2),
        };
        assert!((level_set_mean_curvature(&gram, &inverse, &p) - 2.0 / 1.3).abs() < 1e-14);
    }
}
