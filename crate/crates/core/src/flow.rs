//! Radial prescribed-scalar-curvature flow.
//!
//! For `g = rho^2 gamma + u^2 rho^-2 drho^2` the condition `R_g = -n(n-1)` is
//! the parabolic equation
//!
//! ```text
//! rho du/drho = u^2/(n-1) rho^-2 Delta_gamma u + n/2 (u - u^3)
//! ```
//!
//! which is integrated for the deviation `v = u - 1` in log-radial time
//! `t = log rho`:
//!
//! ```text
//! dv/dt = (v+1)^2/(n-1) e^{-2t} Delta_gamma v - n/2 (v+2)(v+1) v.
//! ```
//!
//! The state stores `v` rather than `u` so the decaying deviation keeps full
//! relative precision out to large `rho`, where `psi = rho^n v` is read off.

use std::collections::VecDeque;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::FlatTorusMetric;
use crate::spectral::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Integrating factor for the frozen-coefficient diffusion and the linear
    /// decay `-n v`, Heun (two-stage, second order) for the remainder.
    Imex,
    /// Fully explicit classical Runge-Kutta with step-doubling error estimates.
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepControl {
    /// Local error per step held below `tolerance` in `psi = rho^n v` units,
    /// relative to `1 + max|psi|`.
    Adaptive { tolerance: f64 },
    /// Deterministic step function `h(rho) = min(h_max, h0 rho^2)`; halving both
    /// parameters halves every step, which is what self-convergence studies need.
    Schedule { h0: f64, h_max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowControls {
    pub scheme: Scheme,
    pub step_control: StepControl,
    /// First trial step for adaptive control.
    pub dt0: f64,
    pub dt_max: f64,
    /// Fraction of the stability bound actually used.
    pub safety: f64,
    /// Geometric spacing of full-field checkpoints.
    pub checkpoint_ratio: f64,
    /// Additional radii at which full fields are stored.
    pub extra_checkpoints: Vec<f64>,
    /// Keep going past the target until consecutive checkpoints agree in `psi`
    /// to this tolerance.
    pub run_to_convergence: bool,
    pub psi_tolerance: f64,
    /// Radius at which a run that has not converged gives up.
    pub rho_limit: f64,
    pub max_steps: usize,
    /// Step halvings allowed per step after positivity failures.
    pub max_rejections: usize,
    /// 2/3-rule truncation of the explicit remainder.
    pub dealias: bool,
}

impl Default for FlowControls {
    fn default() -> Self {
        Self {
            scheme: Scheme::Imex,
            step_control: StepControl::Adaptive { tolerance: 1e-8 },
            dt0: 1e-5,
            dt_max: 0.01,
            safety: 0.9,
            checkpoint_ratio: 10f64.powf(1.0 / 12.0),
            extra_checkpoints: Vec::new(),
            run_to_convergence: false,
            psi_tolerance: 1e-8,
            rho_limit: 1e7,
            max_steps: 2_000_000,
            max_rejections: 40,
            dealias: false,
        }
    }
}

/// Snapshot of the flow at one radius.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    n: usize,
    rho: f64,
    /// `u - 1`
    v: ScalarField,
}

impl FlowState {
    /// Builds the state from its deviation field `v = u - 1`.
    pub fn from_deviation(v: ScalarField, rho: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::BadDimension(format!("ambient dimension n = {n} < 3")));
        }
        if v.grid().dim() != n - 1 {
            return Err(Error::BadDimension(format!(
                "slice torus has dimension {}, expected {}",
                v.grid().dim(),
                n - 1
            )));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::DomainError(format!("rho must be positive, got {rho}")));
        }
        let min_u = 1.0 + v.min();
        if !(min_u > 0.0) {
            return Err(Error::NonPositiveInitialData(min_u));
        }
        Ok(Self { n, rho, v })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn metric(&self) -> &FlatTorusMetric {
        self.v.grid().metric()
    }

    pub fn deviation(&self) -> &ScalarField {
        &self.v
    }

    pub fn u(&self) -> ScalarField {
        self.v.map(|v| 1.0 + v)
    }

    /// `psi = rho^n (u - 1)`.
    pub fn psi(&self) -> ScalarField {
        let s = self.rho.powi(self.n as i32);
        self.v.scale(s)
    }

    pub fn min_u(&self) -> f64 {
        1.0 + self.v.min()
    }

    pub fn max_u(&self) -> f64 {
        1.0 + self.v.max()
    }

    /// `H = (n-1)/u` of the slice `Sigma_rho`.
    pub fn mean_curvature(&self) -> ScalarField {
        let k = (self.n - 1) as f64;
        self.v.map(|v| k / (1.0 + v))
    }

    /// Second fundamental form `A = u^-1 rho^2 gamma` as a Gram matrix field (per node scale).
    pub fn second_fundamental_scale(&self) -> ScalarField {
        let r2 = self.rho * self.rho;
        self.v.map(|v| r2 / (1.0 + v))
    }

    /// `rho du/drho` evaluated from the flow equation itself.
    pub fn rho_du_drho(&self) -> ScalarField {
        let lap = self.v.laplacian();
        self.v.zip_map(&lap, |v, l| {
            pde_rate(v, l, self.rho.powi(-2), self.n)
        })
    }
}

/// `rho du/drho` (= `dv/dt`) at one node given `Delta_gamma v`.
pub(crate) fn pde_rate(v: f64, lap_v: f64, rho_m2: f64, n: usize) -> f64 {
    let u = 1.0 + v;
    u * u / (n - 1) as f64 * rho_m2 * lap_v - 0.5 * n as f64 * v * u * (v + 2.0)
}

/// Validates initial data and builds the state at `rho0`.
pub fn init_state(u0: &ScalarField, rho0: f64, n: usize) -> Result<FlowState> {
    let min = u0.min();
    if !(min > 0.0) {
        return Err(Error::NonPositiveInitialData(min));
    }
    FlowState::from_deviation(u0.map(|u| u - 1.0), rho0, n)
}

/// Initial data `u0 = (1-eps)^-1 (n-1)/H` for a positive boundary mean curvature.
pub fn init_from_mean_curvature(h: &ScalarField, n: usize, epsilon: f64) -> Result<FlowState> {
    let min = h.min();
    if !(min > 0.0) {
        return Err(Error::NonPositiveH(min));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::DomainError(format!("epsilon must lie in [0,1), got {epsilon}")));
    }
    let scale = (n - 1) as f64 / (1.0 - epsilon);
    init_state(&h.map(|x| scale / x), 1.0, n)
}

/// Closed-form solution of the spatially homogeneous flow,
/// `(1 + C rho^-n)^(-1/2)` with `C = (u0^-2 - 1) rho0^n`.
pub fn exact_homogeneous_solution(u0: f64, rho0: f64, n: usize, rho: f64) -> Result<f64> {
    if !(u0 > 0.0) {
        return Err(Error::NonPositiveInitialData(u0));
    }
    let c = (u0.powi(-2) - 1.0) * rho0.powi(n as i32);
    let base = 1.0 + c * rho.powi(-(n as i32));
    if !(base > 0.0) {
        return Err(Error::DomainError(format!(
            "1 + C rho^-n = {base} is not positive"
        )));
    }
    Ok(base.powf(-0.5))
}

/// `(1 + x)^(-1/2) - 1` without cancellation for small `x`.
fn inv_sqrt_minus_one(x: f64) -> f64 {
    (-0.5 * x.ln_1p()).exp_m1()
}

/// Explicit sub/super-solutions sandwiching `u`, fitted to touch the initial data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierEnvelope {
    pub n: usize,
    pub c_lower: f64,
    pub c_upper: f64,
}

impl BarrierEnvelope {
    pub fn new(u0_min: f64, u0_max: f64, rho0: f64, n: usize) -> Result<Self> {
        if !(u0_min > 0.0) {
            return Err(Error::NonPositiveInitialData(u0_min));
        }
        let r0n = rho0.powi(n as i32);
        Ok(Self {
            n,
            c_lower: (u0_min.powi(-2) - 1.0).max(0.0) * r0n,
            c_upper: (1.0 - u0_max.powi(-2)).max(0.0) * r0n,
        })
    }

    pub fn from_initial(u0: &ScalarField, rho0: f64, n: usize) -> Result<Self> {
        Self::new(u0.min(), u0.max(), rho0, n)
    }

    /// `(lower - 1, upper - 1)`, accurate when both are tiny.
    pub fn deviation_at(&self, rho: f64) -> Result<(f64, f64)> {
        let rn = rho.powi(-(self.n as i32));
        let up = self.c_upper * rn;
        if up >= 1.0 {
            return Err(Error::UpperBarrierBlowup(up));
        }
        Ok((inv_sqrt_minus_one(self.c_lower * rn), inv_sqrt_minus_one(-up)))
    }

    pub fn at(&self, rho: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.deviation_at(rho)?;
        Ok((1.0 + lo, 1.0 + hi))
    }
}

/// `(lower, upper)` barrier values at `rho` for initial data `u0` given at `rho0`.
pub fn barrier_envelope(u0: &ScalarField, rho0: f64, n: usize, rho: f64) -> Result<(f64, f64)> {
    BarrierEnvelope::from_initial(u0, rho0, n)?.at(rho)
}

/// Largest log-time step the explicit part of `scheme` tolerates.
pub fn suggest_dt(state: &FlowState, scheme: Scheme, safety: f64) -> f64 {
    let n = state.n as f64;
    let v = state.v.values();
    let react = v
        .iter()
        .map(|&v| {
            let u = 1.0 + v;
            0.5 * n * (3.0 * u * u - 1.0).abs()
        })
        .fold(0.0, f64::max);
    let rho_m2 = state.rho.powi(-2);
    let smax = state.v.grid().plan.max_laplacian_magnitude();
    let (diff, interval) = match scheme {
        Scheme::Imex => {
            let vbar = state.v.mean();
            let cbar = (1.0 + vbar).powi(2) / (n - 1.0);
            let spread = v
                .iter()
                .map(|&v| ((1.0 + v).powi(2) / (n - 1.0) - cbar).abs())
                .fold(0.0, f64::max);
            (spread * rho_m2 * smax, 2.0)
        }
        Scheme::Rk4 => {
            let cmax = v
                .iter()
                .map(|&v| (1.0 + v).powi(2) / (n - 1.0))
                .fold(0.0, f64::max);
            (cmax * rho_m2 * smax, 2.78)
        }
    };
    let rate = react + diff;
    if rate > 0.0 {
        safety * interval / rate
    } else {
        f64::INFINITY
    }
}

/// Result of one attempted step.
struct Attempt {
    v: ScalarField,
    /// Max-norm local error estimate in `v` units.
    error: f64,
}

fn remainder(v: &[f64], lap: &[f64], rho_m2: f64, cbar: f64, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let inv = 1.0 / (nf - 1.0);
    v.iter()
        .zip(lap)
        .map(|(&v, &l)| {
            let c = (1.0 + v) * (1.0 + v) * inv;
            (c - cbar) * rho_m2 * l - 0.5 * nf * v * v * (v + 3.0)
        })
        .collect()
}

fn imex_heun(state: &FlowState, h: f64, dealias: bool) -> Attempt {
    let grid = state.v.grid();
    let plan = &grid.plan;
    let sym = plan.laplacian();
    let n = state.n;
    let rho0 = state.rho;
    let rho1 = rho0 * h.exp();
    let (r0, r1) = (rho0.powi(-2), rho1.powi(-2));
    let cbar = (1.0 + state.v.mean()).powi(2) / (n as f64 - 1.0);
    let diffusion_weight = cbar * 0.5 * (r0 - r1);
    let decay = n as f64 * h;
    let factor: Vec<f64> = sym
        .iter()
        .map(|&s| (diffusion_weight * s - decay).exp())
        .collect();

    let coeffs = state.v.spectrum();
    let lap_v = plan.inverse_real(coeffs.iter().zip(sym).map(|(c, &s)| c * s).collect());
    let ev = plan.inverse_real(coeffs.iter().zip(&factor).map(|(c, &e)| c * e).collect());

    let mut n0 = remainder(state.v.values(), &lap_v, r0, cbar, n);
    let mut n0_hat = plan.forward(&n0);
    if dealias {
        truncate(&mut n0_hat, state);
        n0 = plan.inverse_real(n0_hat.clone());
    }
    let _ = &n0;
    let en0 = plan.inverse_real(n0_hat.iter().zip(&factor).map(|(c, &e)| c * e).collect());

    let pred: Vec<f64> = ev.iter().zip(&en0).map(|(a, b)| a + h * b).collect();
    let pred_hat = plan.forward(&pred);
    let lap_pred = plan.inverse_real(pred_hat.iter().zip(sym).map(|(c, &s)| c * s).collect());
    let mut n1 = remainder(&pred, &lap_pred, r1, cbar, n);
    if dealias {
        let mut s = plan.forward(&n1);
        truncate(&mut s, state);
        n1 = plan.inverse_real(s);
    }

    let mut error: f64 = 0.0;
    let next: Vec<f64> = ev
        .iter()
        .zip(&en0)
        .zip(&n1)
        .map(|((&e, &a), &b)| {
            error = error.max((0.5 * h * (b - a)).abs());
            e + 0.5 * h * (a + b)
        })
        .collect();
    Attempt {
        v: ScalarField::from_vec_unchecked(grid, next),
        error,
    }
}

fn truncate(coeffs: &mut [Complex64], state: &FlowState) {
    let f = ScalarField::from_spectrum(state.v.grid(), coeffs.to_vec()).dealias_two_thirds();
    coeffs.copy_from_slice(&f.spectrum());
}

fn explicit_rate(v: &ScalarField, rho: f64, n: usize) -> ScalarField {
    let lap = v.laplacian();
    let rho_m2 = rho.powi(-2);
    v.zip_map(&lap, |v, l| pde_rate(v, l, rho_m2, n))
}

fn rk4_single(v: &ScalarField, rho: f64, h: f64, n: usize) -> ScalarField {
    let mid = rho * (0.5 * h).exp();
    let end = rho * h.exp();
    let k1 = explicit_rate(v, rho, n);
    let k2 = explicit_rate(&v.zip_map(&k1, |a, k| a + 0.5 * h * k), mid, n);
    let k3 = explicit_rate(&v.zip_map(&k2, |a, k| a + 0.5 * h * k), mid, n);
    let k4 = explicit_rate(&v.zip_map(&k3, |a, k| a + h * k), end, n);
    let mut out = v.values().to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        *o += h / 6.0
            * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i]);
    }
    ScalarField::from_vec_unchecked(v.grid(), out)
}

fn rk4_doubling(state: &FlowState, h: f64) -> Attempt {
    let full = rk4_single(&state.v, state.rho, h, state.n);
    let half = rk4_single(&state.v, state.rho, 0.5 * h, state.n);
    let two = rk4_single(&half, state.rho * (0.5 * h).exp(), 0.5 * h, state.n);
    let error = (&two - &full).max_abs() / 15.0;
    Attempt { v: two, error }
}

fn attempt(state: &FlowState, h: f64, scheme: Scheme, dealias: bool) -> Attempt {
    match scheme {
        Scheme::Imex => imex_heun(state, h, dealias),
        Scheme::Rk4 => rk4_doubling(state, h),
    }
}

/// Advances `state` by `dt_log` in `t = log rho` (one step, no error control).
pub fn step(state: &FlowState, dt_log: f64, scheme: Scheme) -> Result<FlowState> {
    step_with_estimate(state, dt_log, scheme, false).map(|(s, _)| s)
}

/// One step plus its local error estimate in `v` units.
pub fn step_with_estimate(
    state: &FlowState,
    dt_log: f64,
    scheme: Scheme,
    dealias: bool,
) -> Result<(FlowState, f64)> {
    if !(dt_log > 0.0) || !dt_log.is_finite() {
        return Err(Error::DomainError(format!("step must be positive, got {dt_log}")));
    }
    let a = attempt(state, dt_log, scheme, dealias);
    let rho = state.rho * dt_log.exp();
    if a.v.values().iter().any(|x| !x.is_finite()) || !a.error.is_finite() {
        return Err(Error::NonFinite(format!("step to rho = {rho}")));
    }
    if !(1.0 + a.v.min() > 0.0) {
        return Err(Error::StabilityViolation { rho, rejections: 0 });
    }
    Ok((
        FlowState {
            n: state.n,
            rho,
            v: a.v,
        },
        a.error,
    ))
}

/// Scalar diagnostics logged after every accepted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub rho: f64,
    pub dt_log: f64,
    pub min_u: f64,
    pub max_u: f64,
    /// Normalised mass functional `F(rho)`.
    pub mass: f64,
    pub dissipation: f64,
    /// `max |psi(rho) - psi(rho_prev)|` against the previous step.
    pub psi_max_delta: f64,
    /// Local error estimate of this step (`v` units).
    pub local_error: f64,
    /// Propagated global error estimate (`v` units).
    pub error_estimate: f64,
    pub barrier_lower: f64,
    pub barrier_upper: f64,
    /// `u` within the barrier envelope up to ten times `error_estimate`.
    pub within_barriers: bool,
}

/// Full-field snapshot with the neighbouring accepted steps, so radial
/// derivatives of the discrete solution can be taken without re-running it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub rho: f64,
    pub v: ScalarField,
    /// `(rho, v)` of up to two accepted steps on each side, sorted by `rho`,
    /// including this checkpoint.
    pub stencil: Vec<(f64, ScalarField)>,
    pub center: usize,
    /// `max |psi - psi_prev|` against the previous checkpoint.
    pub psi_delta: f64,
}

impl Checkpoint {
    pub fn state(&self, n: usize) -> FlowState {
        FlowState {
            n,
            rho: self.rho,
            v: self.v.clone(),
        }
    }

    pub fn psi(&self, n: usize) -> ScalarField {
        self.v.scale(self.rho.powi(n as i32))
    }

    /// Whether both neighbours on each side were recorded.
    pub fn has_full_stencil(&self) -> bool {
        self.stencil.len() == 5 && self.center == 2
    }

    /// Lagrange weights for `d/dt`, `t = log rho`, at this checkpoint.
    pub fn log_derivative_weights(&self) -> Option<Vec<f64>> {
        if self.stencil.len() < 3 {
            return None;
        }
        let t: Vec<f64> = self.stencil.iter().map(|(r, _)| r.ln()).collect();
        Some(crate::stencil::derivative_weights(&t, self.rho.ln(), 1))
    }

    /// `rho du/drho` of the discrete trajectory (not of the equation).
    pub fn trajectory_rho_du_drho(&self) -> Option<ScalarField> {
        let w = self.log_derivative_weights()?;
        let mut acc = vec![0.0; self.v.len()];
        for (wk, (_, f)) in w.iter().zip(&self.stencil) {
            for (a, x) in acc.iter_mut().zip(f.values()) {
                *a += wk * x;
            }
        }
        Some(ScalarField::from_vec_unchecked(self.v.grid(), acc))
    }
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub n: usize,
    pub rho0: f64,
    pub u0: ScalarField,
    pub barrier: BarrierEnvelope,
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<Checkpoint>,
    /// The psi stopping rule was met (only meaningful with `run_to_convergence`).
    pub converged: bool,
    pub rejected_steps: usize,
}

impl FlowTrace {
    pub fn checkpoint_at(&self, rho: f64) -> Option<&Checkpoint> {
        self.checkpoints
            .iter()
            .find(|c| (c.rho - rho).abs() <= 1e-12 * rho)
    }

    pub fn final_rho(&self) -> f64 {
        self.steps.last().map_or(self.rho0, |s| s.rho)
    }

    pub fn all_within_barriers(&self) -> bool {
        self.steps.iter().all(|s| s.within_barriers)
    }

    pub fn checkpoint_rhos(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.rho).collect()
    }
}

/// `F(rho) = rho^n / vol * int (n-1)(1 - u^-1) dvol_gamma`.
pub(crate) fn mass_of(v: &ScalarField, rho: f64, n: usize) -> f64 {
    let mean = v.values().iter().map(|&v| v / (1.0 + v)).sum::<f64>() / v.len() as f64;
    rho.powi(n as i32) * (n - 1) as f64 * mean
}

/// `-(n(n-1)/2) rho^n / vol * int u^-1 (1-u)^2 dvol_gamma`.
pub(crate) fn dissipation_of(v: &ScalarField, rho: f64, n: usize) -> f64 {
    let mean = v.values().iter().map(|&v| v * v / (1.0 + v)).sum::<f64>() / v.len() as f64;
    -0.5 * (n * (n - 1)) as f64 * rho.powi(n as i32) * mean
}

struct Recorder {
    n: usize,
    barrier: BarrierEnvelope,
    history: VecDeque<(f64, ScalarField)>,
    pending: Vec<(usize, usize)>,
    last_checkpoint_psi: Option<ScalarField>,
}

impl Recorder {
    fn record_step(
        &self,
        prev: &FlowState,
        next: &FlowState,
        dt_log: f64,
        local_error: f64,
        error_estimate: f64,
    ) -> Result<StepRecord> {
        let n = self.n;
        let (lo, hi) = self.barrier.deviation_at(next.rho)?;
        let tol = 10.0 * error_estimate + 4.0 * f64::EPSILON * (1.0 + lo.abs().max(hi.abs()));
        let within = next.v.min() >= lo - tol && next.v.max() <= hi + tol;
        let sp = prev.rho.powi(n as i32);
        let sn = next.rho.powi(n as i32);
        let psi_max_delta = prev
            .v
            .values()
            .iter()
            .zip(next.v.values())
            .map(|(a, b)| (sn * b - sp * a).abs())
            .fold(0.0, f64::max);
        Ok(StepRecord {
            rho: next.rho,
            dt_log,
            min_u: next.min_u(),
            max_u: next.max_u(),
            mass: mass_of(&next.v, next.rho, n),
            dissipation: dissipation_of(&next.v, next.rho, n),
            psi_max_delta,
            local_error,
            error_estimate,
            barrier_lower: 1.0 + lo,
            barrier_upper: 1.0 + hi,
            within_barriers: within,
        })
    }

    fn push_checkpoint(&mut self, trace: &mut FlowTrace, state: &FlowState) -> f64 {
        let psi = state.psi();
        let delta = match &self.last_checkpoint_psi {
            Some(prev) => (&psi - prev).max_abs(),
            None => f64::INFINITY,
        };
        self.last_checkpoint_psi = Some(psi);
        let mut stencil: Vec<(f64, ScalarField)> = self.history.iter().cloned().collect();
        let center = stencil.len();
        stencil.push((state.rho, state.v.clone()));
        trace.checkpoints.push(Checkpoint {
            rho: state.rho,
            v: state.v.clone(),
            stencil,
            center,
            psi_delta: delta,
        });
        self.pending.push((trace.checkpoints.len() - 1, 2));
        delta
    }

    fn after_step(&mut self, trace: &mut FlowTrace, state: &FlowState) {
        for (idx, remaining) in self.pending.iter_mut() {
            trace.checkpoints[*idx]
                .stencil
                .push((state.rho, state.v.clone()));
            *remaining -= 1;
        }
        self.pending.retain(|(_, r)| *r > 0);
    }

    fn remember(&mut self, state: &FlowState) {
        self.history.push_back((state.rho, state.v.clone()));
        while self.history.len() > 2 {
            self.history.pop_front();
        }
    }
}

struct Stepper<'a> {
    controls: &'a FlowControls,
    dt: f64,
    steps: usize,
    rejected: usize,
}

impl Stepper<'_> {
    /// Proposed step before clipping.
    fn proposal(&self, state: &FlowState) -> f64 {
        let c = self.controls;
        let stable = suggest_dt(state, c.scheme, c.safety);
        let h = match c.step_control {
            StepControl::Adaptive { .. } => self.dt,
            StepControl::Schedule { h0, h_max } => (h0 * state.rho * state.rho).min(h_max),
        };
        h.min(stable).min(c.dt_max)
    }

    /// Takes one accepted step no longer than `limit` (log-radius units).
    fn advance(&mut self, state: &FlowState, limit: Option<f64>) -> Result<(FlowState, f64, f64)> {
        let c = self.controls;
        let mut h = self.proposal(state);
        let mut clipped = false;
        if let Some(l) = limit {
            if h >= l * (1.0 - 1e-9) {
                h = l;
                clipped = true;
            }
        }
        let mut halvings = 0;
        loop {
            self.steps += 1;
            if self.steps > c.max_steps {
                return Err(Error::MaxStepsExceeded(c.max_steps));
            }
            let a = attempt(state, h, c.scheme, c.dealias);
            let finite = a.error.is_finite() && a.v.values().iter().all(|x| x.is_finite());
            let positive = finite && 1.0 + a.v.min() > 0.0;
            if !positive {
                halvings += 1;
                self.rejected += 1;
                if halvings > c.max_rejections {
                    let rho = state.rho * h.exp();
                    return Err(if finite {
                        Error::StabilityViolation {
                            rho,
                            rejections: halvings - 1,
                        }
                    } else {
                        Error::NonFinite(format!("step to rho = {rho}"))
                    });
                }
                h *= 0.5;
                clipped = false;
                continue;
            }
            let rho_new = if clipped {
                state.rho * limit.map_or(h, |l| l).exp()
            } else {
                state.rho * h.exp()
            };
            if let StepControl::Adaptive { tolerance } = c.step_control {
                let scale = rho_new.powi(state.n as i32);
                let psi_max = a.v.max_abs() * scale;
                let err = a.error * scale / (tolerance * (1.0 + psi_max));
                let grow = if err > 0.0 { 0.9 * err.powf(-0.5) } else { 2.0 };
                let next = h * grow.clamp(0.2, 2.0);
                if err > 1.0 {
                    self.rejected += 1;
                    h = next;
                    clipped = false;
                    continue;
                }
                if !clipped {
                    self.dt = next;
                } else {
                    self.dt = self.dt.max(next.min(self.dt * 2.0));
                }
            }
            let next_state = FlowState {
                n: state.n,
                rho: rho_new,
                v: a.v,
            };
            return Ok((next_state, h, a.error));
        }
    }
}

fn checkpoint_schedule(rho0: f64, rho_target: f64, controls: &FlowControls) -> Vec<f64> {
    let mut out = Vec::new();
    let ratio = controls.checkpoint_ratio;
    let mut k = 1;
    loop {
        let r = rho0 * ratio.powi(k);
        if r > controls.rho_limit {
            break;
        }
        out.push(r);
        k += 1;
    }
    out.push(rho_target);
    out.extend(controls.extra_checkpoints.iter().copied().filter(|&r| r > rho0));
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    out
}

/// Integrates from `state.rho` to `rho_target` (and on to psi-convergence when
/// requested), logging scalar diagnostics every step and full fields at
/// geometric checkpoints.
pub fn evolve_to(
    state: &FlowState,
    rho_target: f64,
    controls: &FlowControls,
) -> Result<(FlowState, FlowTrace)> {
    if !(rho_target > state.rho) {
        return Err(Error::DomainError(format!(
            "target rho {rho_target} must exceed the current rho {}",
            state.rho
        )));
    }
    if !(controls.checkpoint_ratio > 1.0) {
        return Err(Error::DomainError("checkpoint ratio must exceed 1".into()));
    }
    let n = state.n;
    let u0 = state.u();
    let barrier = BarrierEnvelope::from_initial(&u0, state.rho, n)?;
    let schedule = checkpoint_schedule(state.rho, rho_target, controls);
    let adaptive = matches!(controls.step_control, StepControl::Adaptive { .. });

    let mut trace = FlowTrace {
        n,
        rho0: state.rho,
        u0,
        barrier,
        steps: Vec::new(),
        checkpoints: Vec::new(),
        converged: false,
        rejected_steps: 0,
    };
    let mut rec = Recorder {
        n,
        barrier,
        history: VecDeque::new(),
        pending: Vec::new(),
        last_checkpoint_psi: None,
    };
    let first = rec.record_step(state, state, 0.0, 0.0, 0.0)?;
    trace.steps.push(StepRecord {
        psi_max_delta: 0.0,
        ..first
    });
    rec.push_checkpoint(&mut trace, state);
    rec.remember(state);

    let mut stepper = Stepper {
        controls,
        dt: controls.dt0,
        steps: 0,
        rejected: 0,
    };
    let mut current = state.clone();
    let mut error_estimate = 0.0;
    let mut next_cp = 0usize;

    loop {
        let done_target = current.rho >= rho_target * (1.0 - 1e-12);
        if done_target && (!controls.run_to_convergence || trace.converged) {
            break;
        }
        if current.rho >= controls.rho_limit {
            break;
        }
        while next_cp < schedule.len() && schedule[next_cp] <= current.rho * (1.0 + 1e-12) {
            next_cp += 1;
        }
        let target_cp = schedule.get(next_cp).copied();
        let limit = if adaptive {
            target_cp.map(|r| (r / current.rho).ln())
        } else if current.rho < rho_target {
            Some((rho_target / current.rho).ln())
        } else {
            None
        };
        let (mut next, h, local) = stepper.advance(&current, limit)?;
        if let Some(r) = target_cp {
            if (next.rho - r).abs() <= 1e-9 * r {
                next.rho = r;
            }
        }
        let growth = -0.5 * n as f64 * (3.0 * current.min_u().powi(2) - 1.0);
        error_estimate = error_estimate * (h * growth).exp() + local;
        let record = rec.record_step(&current, &next, h, local, error_estimate)?;
        trace.steps.push(record);
        rec.after_step(&mut trace, &next);

        let crossed = target_cp.is_some_and(|r| next.rho >= r * (1.0 - 1e-12));
        if crossed {
            let delta = rec.push_checkpoint(&mut trace, &next);
            if next.rho >= rho_target * (1.0 - 1e-12) && delta < controls.psi_tolerance {
                trace.converged = true;
            }
        }
        rec.remember(&next);
        current = next;
    }

    // Complete the stencils of the last checkpoints with throw-away steps.
    let mut tail = current.clone();
    while !rec.pending.is_empty() {
        let (next, _, _) = stepper.advance(&tail, None)?;
        rec.after_step(&mut trace, &next);
        tail = next;
    }
    trace.rejected_steps = stepper.rejected;
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Grid;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid(points: usize) -> Arc<Grid> {
        Grid::uniform(FlatTorusMetric::identity(2).unwrap(), points).unwrap()
    }

    #[test]
    fn init_rejects_nonpositive() {
        let g = grid(8);
        let u0 = ScalarField::from_fn(&g, |x| 1.0 + (2.0 * PI * x[0]).cos());
        assert!(matches!(
            init_state(&u0, 1.0, 3),
            Err(Error::NonPositiveInitialData(_))
        ));
        assert!(init_state(&ScalarField::constant(&g, 1.0), 1.0, 3).is_ok());
        assert!(matches!(
            init_state(&ScalarField::constant(&g, 1.0), 1.0, 4),
            Err(Error::BadDimension(_))
        ));
    }

    #[test]
    fn mean_curvature_entry() {
        let g = grid(8);
        let h = ScalarField::from_fn(&g, |x| 2.0 + 0.5 * (2.0 * PI * x[1]).sin());
        let s = init_from_mean_curvature(&h, 3, 0.0).unwrap();
        let back = s.mean_curvature();
        assert!((&back - &h).max_abs() < 1e-14);
        assert_eq!(s.rho(), 1.0);
    }

    #[test]
    fn fixed_point_is_exact() {
        let g = grid(16);
        let s = init_state(&ScalarField::constant(&g, 1.0), 1.0, 3).unwrap();
        for scheme in [Scheme::Imex, Scheme::Rk4] {
            let next = step(&s, 0.1, scheme).unwrap();
            assert_eq!(next.deviation().max_abs(), 0.0);
        }
    }

    #[test]
    fn homogeneous_closed_form_values() {
        let a = exact_homogeneous_solution(2.0, 1.0, 3, 2.0).unwrap();
        assert!((a - (1.0f64 - 0.75 / 8.0).powf(-0.5)).abs() < 1e-15);
        assert!((a - 1.050452).abs() < 1e-6);
        let b = exact_homogeneous_solution(0.5, 1.0, 3, 10.0).unwrap();
        assert!((b - 0.998504).abs() < 1e-6);
        assert_eq!(exact_homogeneous_solution(1.0, 1.0, 3, 7.0).unwrap(), 1.0);
        assert!(matches!(
            exact_homogeneous_solution(2.0, 1.0, 3, 0.5),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn barrier_examples() {
        let env = BarrierEnvelope::new(0.8, 1.25, 1.0, 3).unwrap();
        let (lo, hi) = env.at(1.0).unwrap();
        assert!((lo - 0.8).abs() < 1e-14 && (hi - 1.25).abs() < 1e-14);
        let (lo, hi) = env.at(1e8).unwrap();
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
        let flat = BarrierEnvelope::new(1.0, 1.0, 1.0, 3).unwrap();
        assert_eq!(flat.at(3.0).unwrap(), (1.0, 1.0));
        assert!(matches!(env.at(0.5), Err(Error::UpperBarrierBlowup(_))));
    }

    #[test]
    fn suggest_dt_properties() {
        let g = grid(16);
        let u0 = ScalarField::from_fn(&g, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let s = init_state(&u0, 1.0, 3).unwrap();
        let s2 = FlowState::from_deviation(s.deviation().clone(), 2.0, 3).unwrap();
        for scheme in [Scheme::Imex, Scheme::Rk4] {
            assert!(suggest_dt(&s2, scheme, 0.9) >= suggest_dt(&s, scheme, 0.9));
        }
        let fine = init_state(
            &ScalarField::from_fn(&grid(32), |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos()),
            1.0,
            3,
        )
        .unwrap();
        assert!(suggest_dt(&fine, Scheme::Rk4, 0.9) <= suggest_dt(&s, Scheme::Rk4, 0.9));
        assert!(suggest_dt(&fine, Scheme::Imex, 0.9) <= suggest_dt(&s, Scheme::Imex, 0.9));
        let flat = init_state(&ScalarField::constant(&g, 2.0), 1.0, 3).unwrap();
        let expect = 0.9 * 2.0 / (1.5 * (3.0 * 4.0 - 1.0));
        assert!((suggest_dt(&flat, Scheme::Imex, 0.9) - expect).abs() < 1e-14);
    }
}
