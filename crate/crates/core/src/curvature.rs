//! Scalar curvature of block metrics `g = g_ss(x, s) ds^2 + G(s)_ij dx^i dx^j`.
//!
//! Two independent routes: the closed form for warped radial metrics, and a
//! generic finite-difference evaluation of the Christoffel symbols and their
//! derivatives from sampled metric components.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Checkpoint, FlowState};
use crate::lattice::{FlatTorusMetric, Grid};
use crate::spectral::ScalarField;
use crate::stencil::derivative_weights;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    /// `rho^2 gamma + u^2 rho^-2 drho^2`
    WarpedRadial,
    /// `v^2 dt^2 + gamma_t`
    Band,
    GeneralDiagonalBlock,
}

/// Metric components sampled on (torus grid) x (transverse coordinate list).
///
/// The torus coordinates are the unit-cube coordinates of the grid; the
/// transverse coordinate is the last one.
#[derive(Clone, Debug)]
pub struct MetricSample {
    kind: SampleKind,
    grid: Arc<Grid>,
    transverse: Vec<f64>,
    /// `g_ss` per transverse index, one value per grid node.
    lapse: Vec<Vec<f64>>,
    /// `G(s)` per transverse index.
    slice: Vec<DMatrix<f64>>,
}

impl MetricSample {
    pub fn new(
        kind: SampleKind,
        grid: Arc<Grid>,
        transverse: Vec<f64>,
        lapse: Vec<Vec<f64>>,
        slice: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let m = grid.dim();
        if transverse.len() < 2 || lapse.len() != transverse.len() || slice.len() != transverse.len() {
            return Err(Error::BadDimension(format!(
                "{} transverse coordinates, {} lapse samples, {} slice metrics",
                transverse.len(),
                lapse.len(),
                slice.len()
            )));
        }
        if transverse.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::DomainError(
                "transverse coordinates must be strictly increasing".into(),
            ));
        }
        for l in &lapse {
            if l.len() != grid.len() {
                return Err(Error::FieldLength {
                    expected: grid.len(),
                    got: l.len(),
                });
            }
            if let Some(&bad) = l.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::DomainError(format!("lapse component {bad} is not positive")));
            }
        }
        for g in &slice {
            if g.nrows() != m || g.ncols() != m {
                return Err(Error::BadDimension(format!(
                    "slice metric is {}x{}, expected {m}x{m}",
                    g.nrows(),
                    g.ncols()
                )));
            }
            FlatTorusMetric::new(g.clone())?;
        }
        Ok(Self {
            kind,
            grid,
            transverse,
            lapse,
            slice,
        })
    }

    /// `rho^2 gamma + u^2 rho^-2 drho^2` from `u` on each listed radius.
    pub fn warped_radial(rhos: Vec<f64>, u: &[ScalarField]) -> Result<Self> {
        let grid = u
            .first()
            .ok_or_else(|| Error::BadDimension("no radial samples".into()))?
            .grid()
            .clone();
        let gamma = grid.metric().gram().clone();
        if rhos.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::DomainError("radii must be positive".into()));
        }
        let lapse = rhos
            .iter()
            .zip(u)
            .map(|(r, f)| f.values().iter().map(|u| u * u / (r * r)).collect())
            .collect();
        let slice = rhos.iter().map(|r| &gamma * (r * r)).collect();
        Self::new(SampleKind::WarpedRadial, grid, rhos, lapse, slice)
    }

    /// The hyperbolic metric `rho^2 gamma + rho^-2 drho^2`.
    pub fn hyperbolic(grid: &Arc<Grid>, rhos: Vec<f64>) -> Result<Self> {
        let ones: Vec<ScalarField> = rhos.iter().map(|_| ScalarField::constant(grid, 1.0)).collect();
        Self::warped_radial(rhos, &ones)
    }

    /// The product `lapse ds^2 + gamma` with constant lapse.
    pub fn flat_product(grid: &Arc<Grid>, coords: Vec<f64>, lapse: f64) -> Result<Self> {
        let gamma = grid.metric().gram().clone();
        let l = coords.iter().map(|_| vec![lapse; grid.len()]).collect();
        let s = coords.iter().map(|_| gamma.clone()).collect();
        Self::new(SampleKind::GeneralDiagonalBlock, grid.clone(), coords, l, s)
    }

    /// Warped sample on the accepted steps around a flow checkpoint.
    pub fn from_checkpoint(cp: &Checkpoint) -> Result<Self> {
        let rhos = cp.stencil.iter().map(|(r, _)| *r).collect();
        let u: Vec<ScalarField> = cp.stencil.iter().map(|(_, v)| v.map(|x| 1.0 + x)).collect();
        Self::warped_radial(rhos, &u)
    }

    pub fn kind(&self) -> SampleKind {
        self.kind
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn transverse(&self) -> &[f64] {
        &self.transverse
    }

    fn metric_at(&self, node: usize, k: usize) -> DMatrix<f64> {
        let m = self.grid.dim();
        let mut g = DMatrix::zeros(m + 1, m + 1);
        g.view_mut((0, 0), (m, m)).copy_from(&self.slice[k]);
        g[(m, m)] = self.lapse[k][node];
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdCurvature {
    pub value: f64,
    /// `|R_h - R_2h|`
    pub error_estimate: f64,
    /// Convergence order from three levels, when the sample supports them.
    pub observed_order: Option<f64>,
}

/// Transverse stencil: indices and first/second derivative weights.
struct Transverse {
    idx: Vec<usize>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

fn transverse_stencil(coords: &[f64], k: usize, stride: usize) -> Option<Transverse> {
    let len = coords.len() as isize;
    let k = k as isize;
    let s = stride as isize;
    for width in [5isize, 3] {
        let mut best: Option<isize> = None;
        for jmin in -(width - 1)..=0 {
            let first = k + s * jmin;
            let last = k + s * (jmin + width - 1);
            if first < 0 || last >= len {
                continue;
            }
            let off = (2 * jmin + width - 1).abs();
            if best.is_none_or(|b| off < (2 * b + width - 1).abs()) {
                best = Some(jmin);
            }
        }
        if let Some(jmin) = best {
            let idx: Vec<usize> = (0..width).map(|j| (k + s * (jmin + j)) as usize).collect();
            let nodes: Vec<f64> = idx.iter().map(|&i| coords[i]).collect();
            let at = coords[k as usize];
            return Some(Transverse {
                d1: derivative_weights(&nodes, at, 1),
                d2: derivative_weights(&nodes, at, 2),
                idx,
            });
        }
    }
    None
}

/// Metric with first and second partial derivatives at one point.
struct Jet {
    g: DMatrix<f64>,
    dg: Vec<DMatrix<f64>>,
    ddg: Vec<Vec<DMatrix<f64>>>,
}

fn jet(sample: &MetricSample, node: usize, k: usize, stride: usize) -> Option<Jet> {
    let grid = &sample.grid;
    let m = grid.dim();
    let d = m + 1;
    for &res in grid.resolution() {
        if res < 2 * stride + 1 {
            return None;
        }
    }
    let tr = transverse_stencil(&sample.transverse, k, stride)?;
    let s = stride as isize;
    let h: Vec<f64> = grid.spacing().iter().map(|x| x * stride as f64).collect();
    let g = sample.metric_at(node, k);
    let zero = DMatrix::zeros(d, d);
    let mut dg = vec![zero.clone(); d];
    let mut ddg = vec![vec![zero.clone(); d]; d];

    let transverse_sum = |at: usize, w: &[f64]| -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(d, d);
        for (wj, &kj) in w.iter().zip(&tr.idx) {
            acc += sample.metric_at(at, kj) * *wj;
        }
        acc
    };

    for i in 0..m {
        let p = grid.shifted(node, i, s);
        let q = grid.shifted(node, i, -s);
        let (gp, gq) = (sample.metric_at(p, k), sample.metric_at(q, k));
        dg[i] = (&gp - &gq) / (2.0 * h[i]);
        ddg[i][i] = (&gp - &g * 2.0 + &gq) / (h[i] * h[i]);
        for j in 0..i {
            let pp = grid.shifted(p, j, s);
            let pq = grid.shifted(p, j, -s);
            let qp = grid.shifted(q, j, s);
            let qq = grid.shifted(q, j, -s);
            let mixed = (sample.metric_at(pp, k) - sample.metric_at(pq, k) - sample.metric_at(qp, k)
                + sample.metric_at(qq, k))
                / (4.0 * h[i] * h[j]);
            ddg[i][j] = mixed.clone();
            ddg[j][i] = mixed;
        }
        let mixed = (transverse_sum(p, &tr.d1) - transverse_sum(q, &tr.d1)) / (2.0 * h[i]);
        ddg[i][m] = mixed.clone();
        ddg[m][i] = mixed;
    }
    dg[m] = transverse_sum(node, &tr.d1);
    ddg[m][m] = transverse_sum(node, &tr.d2);
    Some(Jet { g, dg, ddg })
}

/// Scalar curvature from a metric jet via Christoffel symbols and their derivatives.
fn scalar_from_jet(jet: &Jet) -> Result<f64> {
    let d = jet.g.nrows();
    let inv = jet.g.clone().try_inverse().ok_or(Error::SingularMetric)?;
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularMetric);
    }
    // d_e g^{ad} = -g^{ap} d_e g_pq g^{qd}
    let dinv: Vec<DMatrix<f64>> = jet.dg.iter().map(|dg| -(&inv * dg * &inv)).collect();
    // lowered Christoffel [bc, a] = 1/2 (d_b g_ac + d_c g_ab - d_a g_bc)
    let lower = |a: usize, b: usize, c: usize| {
        0.5 * (jet.dg[b][(a, c)] + jet.dg[c][(a, b)] - jet.dg[a][(b, c)])
    };
    let dlower = |e: usize, a: usize, b: usize, c: usize| {
        0.5 * (jet.ddg[e][b][(a, c)] + jet.ddg[e][c][(a, b)] - jet.ddg[e][a][(b, c)])
    };
    let mut gamma = vec![0.0; d * d * d];
    let at = |a: usize, b: usize, c: usize| (a * d + b) * d + c;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                gamma[at(a, b, c)] = (0..d).map(|p| inv[(a, p)] * lower(p, b, c)).sum();
            }
        }
    }
    // d_e Gamma^a_bc
    let dgamma = |e: usize, a: usize, b: usize, c: usize| -> f64 {
        (0..d)
            .map(|p| dinv[e][(a, p)] * lower(p, b, c) + inv[(a, p)] * dlower(e, p, b, c))
            .sum()
    };
    let mut r = 0.0;
    for b in 0..d {
        for c in 0..d {
            let w = inv[(b, c)];
            if w == 0.0 {
                continue;
            }
            let mut ric = 0.0;
            for a in 0..d {
                ric += dgamma(a, a, b, c) - dgamma(c, a, b, a);
                for e in 0..d {
                    ric += gamma[at(a, a, e)] * gamma[at(e, b, c)] - gamma[at(a, c, e)] * gamma[at(e, b, a)];
                }
            }
            r += w * ric;
        }
    }
    Ok(r)
}

/// Scalar curvature at grid node `node` and transverse index `k` by finite
/// differences, at grid stride 1 with an error estimate from stride 2.
pub fn fd_scalar_curvature(sample: &MetricSample, node: usize, k: usize) -> Result<FdCurvature> {
    if node >= sample.grid.len() || k >= sample.transverse.len() {
        return Err(Error::StencilOutOfRange(format!(
            "node {node}, transverse index {k} outside the sample"
        )));
    }
    let level = |stride: usize| -> Option<Result<f64>> {
        jet(sample, node, k, stride).map(|j| scalar_from_jet(&j))
    };
    let fine = level(1)
        .ok_or_else(|| Error::StencilOutOfRange(format!("no stencil at transverse index {k}")))??;
    let coarse = level(2).ok_or_else(|| {
        Error::StencilOutOfRange(format!("no coarse stencil at transverse index {k}"))
    })??;
    let observed_order = match level(4) {
        Some(Ok(coarsest)) => {
            let (e1, e2) = ((fine - coarse).abs(), (coarse - coarsest).abs());
            (e1 > 0.0 && e2 > 0.0).then(|| (e2 / e1).log2())
        }
        _ => None,
    };
    let value = fine;
    if !value.is_finite() {
        return Err(Error::NonFinite("finite-difference scalar curvature".into()));
    }
    Ok(FdCurvature {
        value,
        error_estimate: (fine - coarse).abs(),
        observed_order,
    })
}

/// `fd_scalar_curvature` at every grid node for one transverse index.
pub fn fd_scalar_curvature_slice(sample: &MetricSample, k: usize) -> Result<Vec<FdCurvature>> {
    (0..sample.grid.len())
        .map(|node| fd_scalar_curvature(sample, node, k))
        .collect()
}

/// `R = -2 u^-1 rho^-2 Delta_gamma u + 2(n-1) u^-3 rho du/drho - n(n-1) u^-2`.
pub fn warped_scalar_curvature_with_rate(
    u: &ScalarField,
    rho: f64,
    n: usize,
    rho_du_drho: &ScalarField,
) -> ScalarField {
    let lap = u.laplacian();
    let r2 = rho.powi(-2);
    let nf = n as f64;
    let vals = u
        .values()
        .iter()
        .zip(lap.values())
        .zip(rho_du_drho.values())
        .map(|((&u, &l), &du)| {
            -2.0 * r2 * l / u + 2.0 * (nf - 1.0) * du / (u * u * u) - nf * (nf - 1.0) / (u * u)
        })
        .collect();
    ScalarField::from_vec_unchecked(u.grid(), vals)
}

/// Closed-form scalar curvature with `rho du/drho` from the flow equation.
pub fn warped_scalar_curvature(state: &FlowState) -> ScalarField {
    warped_scalar_curvature_with_rate(&state.u(), state.rho(), state.n(), &state.rho_du_drho())
}

/// Closed-form scalar curvature with `rho du/drho` differenced along the
/// discrete trajectory, so the solver's own error shows up in `R`.
pub fn checkpoint_scalar_curvature(cp: &Checkpoint, n: usize) -> Option<ScalarField> {
    let rate = cp.trajectory_rho_du_drho()?;
    Some(warped_scalar_curvature_with_rate(
        &cp.v.map(|x| 1.0 + x),
        cp.rho,
        n,
        &rate,
    ))
}

/// Scalar-curvature certificate of one flow checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointCertificate {
    pub rho: f64,
    /// `max |R + n(n-1)|` of the closed form with the trajectory rate.
    pub closed_form_deviation: f64,
    /// `max |R_fd + n(n-1)|`
    pub fd_deviation: f64,
    /// Largest fd error estimate over the slice.
    pub fd_error_estimate: f64,
    /// `max |R_fd - R_closed|`
    pub disagreement: f64,
    /// `disagreement <= fd_error_estimate`
    pub agree: bool,
}

/// Certifies a checkpoint with a full stencil by both curvature routes;
/// `None` when the checkpoint lacks one.
pub fn certify_checkpoint(cp: &Checkpoint, n: usize) -> Result<Option<CheckpointCertificate>> {
    if !cp.has_full_stencil() {
        return Ok(None);
    }
    let Some(closed) = checkpoint_scalar_curvature(cp, n) else {
        return Ok(None);
    };
    let target = (n * (n - 1)) as f64;
    let sample = MetricSample::from_checkpoint(cp)?;
    let fd = fd_scalar_curvature_slice(&sample, cp.center)?;
    let mut out = CheckpointCertificate {
        rho: cp.rho,
        closed_form_deviation: 0.0,
        fd_deviation: 0.0,
        fd_error_estimate: 0.0,
        disagreement: 0.0,
        agree: false,
    };
    for (c, f) in closed.values().iter().zip(&fd) {
        out.closed_form_deviation = out.closed_form_deviation.max((c + target).abs());
        out.fd_deviation = out.fd_deviation.max((f.value + target).abs());
        out.fd_error_estimate = out.fd_error_estimate.max(f.error_estimate);
        out.disagreement = out.disagreement.max((f.value - c).abs());
    }
    out.agree = out.disagreement <= out.fd_error_estimate;
    Ok(Some(out))
}
