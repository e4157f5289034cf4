//! Interpolation band `g = v^2 dt^2 + gamma_t`, `gamma_t = gamma_hat + t Q`,
//! between two flat metrics `gamma_hat < gamma` on the same torus.
//!
//! With `H_hat = 1/2 tr_{gamma_t} Q` and `R_hat` the scalar curvature of
//! `dt^2 + gamma_t`, zero scalar curvature of `g` is
//!
//! ```text
//! H_hat dv/dt = v^2 Delta_{gamma_t} v - 1/2 R_hat v.
//! ```

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::curvature::{fd_scalar_curvature, FdCurvature, MetricSample, SampleKind};
use crate::error::{Error, Result};
use crate::lattice::{FlatTorusMetric, Grid};
use crate::spectral::ScalarField;

/// Path data shared by every state of one band.
#[derive(Clone, Debug)]
pub struct BandGeometry {
    pub gamma_hat: FlatTorusMetric,
    pub gamma: FlatTorusMetric,
    /// `gamma - gamma_hat`
    pub q: DMatrix<f64>,
    /// Eigenvalues of `gamma_hat^-1 Q`.
    q_eigen: Vec<f64>,
    /// `sup_t |R(gamma_t)|`, zero for flat paths.
    pub k: f64,
    /// `sup_t 2 |R_hat(t)| / tr_{gamma_t} Q`.
    pub big_n: f64,
}

impl BandGeometry {
    pub fn new(gamma_hat: FlatTorusMetric, gamma: FlatTorusMetric) -> Result<Self> {
        if gamma_hat.dim() != gamma.dim() {
            return Err(Error::BadDimension(format!(
                "inner metric has dimension {}, outer {}",
                gamma_hat.dim(),
                gamma.dim()
            )));
        }
        let q = gamma.gram() - gamma_hat.gram();
        let qmin = q.clone().symmetric_eigen().eigenvalues.min();
        if !(qmin > 0.0) {
            return Err(Error::NotDominated(qmin));
        }
        // eigenvalues of gamma_hat^-1 Q via the symmetric form L^-1 Q L^-T
        let l = gamma_hat
            .gram()
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite(gamma_hat.min_eigenvalue()))?
            .l();
        let linv = l.try_inverse().ok_or(Error::SingularMetric)?;
        let sym = &linv * &q * linv.transpose();
        let mut q_eigen: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        q_eigen.sort_by(f64::total_cmp);
        let mut geom = Self {
            gamma_hat,
            gamma,
            q,
            q_eigen,
            k: 0.0,
            big_n: 0.0,
        };
        geom.big_n = geom.compute_big_n();
        Ok(geom)
    }

    pub fn dim(&self) -> usize {
        self.gamma.dim()
    }

    /// Eigenvalues of `gamma_t^-1 Q`, `q_i / (1 + t q_i)`.
    fn a(&self, t: f64) -> impl Iterator<Item = f64> + '_ {
        self.q_eigen.iter().map(move |&q| q / (1.0 + t * q))
    }

    pub fn gamma_t(&self, t: f64) -> DMatrix<f64> {
        self.gamma_hat.gram() + &self.q * t
    }

    /// `tr_{gamma_t} Q`
    pub fn trace_q(&self, t: f64) -> f64 {
        self.a(t).sum()
    }

    /// `H_hat(t) = 1/2 tr_{gamma_t} Q`
    pub fn h_hat(&self, t: f64) -> f64 {
        0.5 * self.trace_q(t)
    }

    /// Scalar curvature of `dt^2 + gamma_t`, `3/4 |Q|^2 - 1/4 (tr Q)^2`.
    pub fn r_hat(&self, t: f64) -> f64 {
        let sq: f64 = self.a(t).map(|a| a * a).sum();
        let tr = self.trace_q(t);
        0.75 * sq - 0.25 * tr * tr
    }

    /// `vol(gamma_t)` in unit-cube coordinates.
    pub fn volume(&self, t: f64) -> f64 {
        self.gamma_hat.volume() * self.q_eigen.iter().map(|&q| 1.0 + t * q).product::<f64>().sqrt()
    }

    fn compute_big_n(&self) -> f64 {
        // 2|R_hat|/tr Q is a ratio of rational functions of t; a dense scan
        // plus golden-section refinement around the best sample.
        let ratio = |t: f64| 2.0 * self.r_hat(t).abs() / self.trace_q(t);
        let samples = 2001;
        let (mut best_t, mut best) = (0.0, ratio(0.0));
        for i in 1..samples {
            let t = i as f64 / (samples - 1) as f64;
            let r = ratio(t);
            if r > best {
                best = r;
                best_t = t;
            }
        }
        let h = 1.0 / (samples - 1) as f64;
        let (mut lo, mut hi) = ((best_t - h).max(0.0), (best_t + h).min(1.0));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if ratio(x1) >= ratio(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        best.max(ratio(0.5 * (lo + hi)))
    }
}

#[derive(Clone, Debug)]
pub struct BandState {
    pub geometry: Arc<BandGeometry>,
    pub t: f64,
    pub v: ScalarField,
}

impl BandState {
    pub fn q(&self) -> &DMatrix<f64> {
        &self.geometry.q
    }

    pub fn k(&self) -> f64 {
        self.geometry.k
    }

    pub fn big_n(&self) -> f64 {
        self.geometry.big_n
    }

    /// Mean curvature of `Sigma_t`, `H_hat / v`.
    pub fn mean_curvature(&self) -> ScalarField {
        let h = self.geometry.h_hat(self.t);
        self.v.map(|v| h / v)
    }
}

/// Initial band state with `v(., 0) = 1/2 tr_{gamma_hat} Q / h`.
pub fn init_band(
    gamma_hat: FlatTorusMetric,
    gamma: FlatTorusMetric,
    h: &ScalarField,
) -> Result<BandState> {
    let hmin = h.min();
    if !(hmin > 0.0) {
        return Err(Error::NonPositiveH(hmin));
    }
    let geometry = Arc::new(BandGeometry::new(gamma_hat, gamma)?);
    if h.grid().dim() != geometry.dim() {
        return Err(Error::BadDimension(format!(
            "boundary data lives on a {}-torus, metrics on a {}-torus",
            h.grid().dim(),
            geometry.dim()
        )));
    }
    let h0 = geometry.h_hat(0.0);
    Ok(BandState {
        v: h.map(|x| h0 / x),
        geometry,
        t: 0.0,
    })
}

/// `(w_minus, w_plus)` at `t` for initial bounds `v0_min <= v0 <= v0_max`.
pub fn band_barriers(v0_min: f64, v0_max: f64, big_n: f64, t: f64) -> (f64, f64) {
    let e = (big_n * t).exp();
    let m2 = v0_min * v0_min;
    (
        v0_min / ((1.0 + m2) * e - m2).sqrt(),
        v0_max * (0.5 * big_n * t).exp(),
    )
}

/// `int_Sigma H dvol_{gamma_t} = H_hat vol(gamma_t) mean(1/v)`.
pub fn band_total_mean_curvature(state: &BandState) -> f64 {
    let g = &state.geometry;
    let inv_mean = state.v.values().iter().map(|v| 1.0 / v).sum::<f64>() / state.v.len() as f64;
    g.h_hat(state.t) * g.volume(state.t) * inv_mean
}

const GAUSS_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

fn band_remainder(state: &BandState, v: &[f64], t: f64, cbar: f64) -> Vec<f64> {
    let g = &state.geometry;
    let inv = g.gamma_t(t).try_inverse().expect("gamma_t is positive definite");
    let sym = state.v.grid().plan.laplacian_symbol(&inv);
    let plan = &state.v.grid().plan;
    let lap = plan.inverse_real(plan.forward(v).iter().zip(&sym).map(|(c, s)| c * s).collect());
    let h = g.h_hat(t);
    v.iter()
        .zip(&lap)
        .map(|(&v, &l)| (v * v - cbar) * l / h)
        .collect()
}

/// Stable step bound for the explicit part of [`band_step`].
pub fn band_suggest_dt(state: &BandState, safety: f64) -> f64 {
    let g = &state.geometry;
    let cbar = state.v.mean().powi(2);
    let spread = state
        .v
        .values()
        .iter()
        .map(|v| (v * v - cbar).abs())
        .fold(0.0, f64::max);
    let inv = g.gamma_hat.inverse_gram();
    let smax = state
        .v
        .grid()
        .plan
        .laplacian_symbol(inv)
        .iter()
        .fold(0.0f64, |a, s| a.max(s.abs()));
    let hmin = g.h_hat(1.0).min(g.h_hat(0.0));
    let rate = spread * smax / hmin + 0.5 * g.big_n;
    if rate > 0.0 {
        safety * 2.0 / rate
    } else {
        f64::INFINITY
    }
}

/// One step of the band equation: integrating factor for the frozen-coefficient
/// diffusion and the curvature term, Heun for the remainder.
pub fn band_step(state: &BandState, dt: f64) -> Result<BandState> {
    if !(dt > 0.0) {
        return Err(Error::DomainError(format!("step must be positive, got {dt}")));
    }
    let g = &state.geometry;
    let grid = state.v.grid();
    let plan = &grid.plan;
    let (t0, t1) = (state.t, state.t + dt);
    let cbar = state.v.mean().powi(2);

    // exponent per mode: int (cbar s_m(t) - R_hat/2) / H_hat dt
    let nodes: Vec<f64> = GAUSS_NODES.iter().map(|x| 0.5 * (t0 + t1) + 0.5 * dt * x).collect();
    let symbols: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&t| {
            let inv = g.gamma_t(t).try_inverse().expect("gamma_t is positive definite");
            plan.laplacian_symbol(&inv)
        })
        .collect();
    let factor: Vec<f64> = (0..grid.len())
        .map(|i| {
            let mut acc = 0.0;
            for (q, &t) in nodes.iter().enumerate() {
                let integrand = (cbar * symbols[q][i] - 0.5 * g.r_hat(t)) / g.h_hat(t);
                acc += GAUSS_WEIGHTS[q] * integrand;
            }
            (0.5 * dt * acc).exp()
        })
        .collect();

    let coeffs = state.v.spectrum();
    let ev = plan.inverse_real(coeffs.iter().zip(&factor).map(|(c, e)| c * e).collect());
    let n0 = band_remainder(state, state.v.values(), t0, cbar);
    let en0 = plan.inverse_real(plan.forward(&n0).iter().zip(&factor).map(|(c, e)| c * e).collect());
    let pred: Vec<f64> = ev.iter().zip(&en0).map(|(a, b)| a + dt * b).collect();
    let n1 = band_remainder(state, &pred, t1, cbar);
    let next: Vec<f64> = ev
        .iter()
        .zip(&en0)
        .zip(&n1)
        .map(|((e, a), b)| e + 0.5 * dt * (a + b))
        .collect();
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("band step to t = {t1}")));
    }
    if next.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::StabilityViolation {
            rho: t1,
            rejections: 0,
        });
    }
    Ok(BandState {
        geometry: state.geometry.clone(),
        t: t1,
        v: ScalarField::from_vec_unchecked(grid, next),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRecord {
    pub t: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub w_minus: f64,
    pub w_plus: f64,
    pub total_mean_curvature: f64,
}

#[derive(Clone, Debug)]
pub struct BandTrace {
    pub geometry: Arc<BandGeometry>,
    pub h: ScalarField,
    pub records: Vec<BandRecord>,
    /// `v` after every step, including `t = 0`.
    pub fields: Vec<ScalarField>,
}

impl BandTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn state(&self, index: usize) -> BandState {
        BandState {
            geometry: self.geometry.clone(),
            t: self.records[index].t,
            v: self.fields[index].clone(),
        }
    }
}

/// Uniform steps from `t = 0` to `t = 1`; at least `min_steps`, more if the
/// explicit stability bound requires it.
pub fn band_evolve(state: &BandState, min_steps: usize) -> Result<(BandState, BandTrace)> {
    if state.t != 0.0 {
        return Err(Error::DomainError("band evolution starts at t = 0".into()));
    }
    let stable = band_suggest_dt(state, 0.5);
    let steps = min_steps.max(1).max((1.0 / stable).ceil() as usize);
    let dt = 1.0 / steps as f64;
    let (v0_min, v0_max) = (state.v.min(), state.v.max());
    let n = state.geometry.big_n;
    let h0 = state.geometry.h_hat(0.0);
    let record = |s: &BandState| {
        let (w_minus, w_plus) = band_barriers(v0_min, v0_max, n, s.t);
        BandRecord {
            t: s.t,
            min_v: s.v.min(),
            max_v: s.v.max(),
            w_minus,
            w_plus,
            total_mean_curvature: band_total_mean_curvature(s),
        }
    };
    let mut trace = BandTrace {
        geometry: state.geometry.clone(),
        h: state.v.map(|v| h0 / v),
        records: vec![record(state)],
        fields: vec![state.v.clone()],
    };
    let mut current = state.clone();
    for i in 1..=steps {
        let mut next = band_step(&current, dt)?;
        next.t = i as f64 * dt;
        trace.records.push(record(&next));
        trace.fields.push(next.v.clone());
        current = next;
    }
    Ok((current, trace))
}

/// Band metric sampled on the trace's time levels.
pub fn band_sample(trace: &BandTrace) -> Result<MetricSample> {
    let grid = trace.fields[0].grid().clone();
    let times = trace.times();
    let lapse = trace
        .fields
        .iter()
        .map(|v| v.values().iter().map(|x| x * x).collect())
        .collect();
    let slice = times.iter().map(|&t| trace.geometry.gamma_t(t)).collect();
    MetricSample::new(SampleKind::Band, grid, times, lapse, slice)
}

/// Unperturbed band `dt^2 + gamma_t` sampled at `count` equally spaced times.
pub fn reference_band_sample(geometry: &BandGeometry, grid: &Arc<Grid>, count: usize) -> Result<MetricSample> {
    let times: Vec<f64> = (0..count).map(|i| i as f64 / (count - 1) as f64).collect();
    let lapse = times.iter().map(|_| vec![1.0; grid.len()]).collect();
    let slice = times.iter().map(|&t| geometry.gamma_t(t)).collect();
    MetricSample::new(SampleKind::Band, grid.clone(), times, lapse, slice)
}

/// Finite-difference scalar curvature of the band metric at step `index`.
pub fn band_scalar_curvature(trace: &BandTrace, index: usize) -> Result<Vec<FdCurvature>> {
    let sample = band_sample(trace)?;
    crate::curvature::fd_scalar_curvature_slice(&sample, index)
}

/// Number of time levels sampled by [`band_fd_profile`].
pub const PROFILE_ROWS: usize = 64;

/// `max |R + K|` over all nodes on about [`PROFILE_ROWS`] evenly spaced time
/// levels (and the last one), where the fd stencil fits.
pub fn band_fd_profile(trace: &BandTrace) -> Result<Vec<Option<f64>>> {
    let sample = band_sample(trace)?;
    let k = trace.geometry.k;
    let len = trace.fields.len();
    let every = len.div_ceil(PROFILE_ROWS).max(1);
    (0..len)
        .map(|idx| {
            if idx % every != 0 && idx + 1 != len {
                return Ok(None);
            }
            let mut dev = 0.0f64;
            for node in 0..sample.grid().len() {
                match fd_scalar_curvature(&sample, node, idx) {
                    Ok(r) => dev = dev.max((r.value + k).abs()),
                    Err(Error::StencilOutOfRange(_)) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(dev))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandItem {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub items: Vec<BandItem>,
    /// `max |R + K| - error estimate` over the checked nodes (non-positive when passing).
    pub fd_excess: f64,
    pub fd_max_dev: f64,
    /// Total mean curvature strictly increased (expected when `Q != 0`).
    pub strictly_increasing: bool,
    pub pass: bool,
}

impl BandReport {
    pub fn failed(&self) -> Vec<&str> {
        self.items.iter().filter(|i| !i.pass).map(|i| i.name.as_str()).collect()
    }
}

/// Time levels at which the fd curvature check runs.
fn fd_levels(len: usize) -> Vec<usize> {
    let mut out = vec![len / 4, len / 2, (3 * len) / 4];
    out.retain(|&i| i >= 2 && i + 2 < len);
    out.dedup();
    out
}

/// Maximum `|R + K|` on the checked levels, and its largest excess over the
/// level's maximum fd error estimate.
pub fn band_fd_deviation(trace: &BandTrace) -> Result<(f64, f64)> {
    let sample = band_sample(trace)?;
    let k = trace.geometry.k;
    let (mut dev, mut excess) = (0.0f64, f64::NEG_INFINITY);
    for idx in fd_levels(trace.fields.len()) {
        let (mut level_dev, mut level_est) = (0.0f64, 1e-9f64);
        for node in 0..sample.grid().len() {
            let r = fd_scalar_curvature(&sample, node, idx)?;
            level_dev = level_dev.max((r.value + k).abs());
            level_est = level_est.max(r.error_estimate);
        }
        dev = dev.max(level_dev);
        excess = excess.max(level_dev - level_est);
    }
    Ok((dev, excess))
}

/// Checks the band properties: endpoint metrics, `H(0) = h`, `H > 0`,
/// `R = -K`, monotone total mean curvature, and barrier containment.
pub fn verify_band(trace: &BandTrace, h: &ScalarField) -> Result<BandReport> {
    let g = &trace.geometry;
    let mut items = Vec::new();
    let mut item = |name: &str, pass: bool, detail: String| {
        items.push(BandItem {
            name: name.to_string(),
            pass,
            detail,
        })
    };

    let end = trace.records.last().map_or(0.0, |r| r.t);
    let e0 = (g.gamma_t(0.0) - g.gamma_hat.gram()).abs().max();
    let e1 = (g.gamma_t(end) - g.gamma.gram()).abs().max();
    item(
        "endpoint_metrics",
        e0 == 0.0 && e1 <= 1e-12 * g.gamma.gram().abs().max() && (end - 1.0).abs() < 1e-12,
        format!("|gamma_0 - gamma_hat| = {e0:e}, |gamma_1 - gamma| = {e1:e}"),
    );

    let h0 = trace.state(0).mean_curvature();
    let dh = (&h0 - h).max_abs();
    item(
        "initial_mean_curvature",
        dh <= 1e-12 * (1.0 + h.max_abs()),
        format!("max |H(0) - h| = {dh:e}"),
    );

    let hmin = (0..trace.fields.len())
        .map(|i| trace.state(i).mean_curvature().min())
        .fold(f64::INFINITY, f64::min);
    item("positive_mean_curvature", hmin > 0.0, format!("min H = {hmin}"));

    let (fd_max_dev, fd_excess) = band_fd_deviation(trace)?;
    item(
        "scalar_curvature",
        fd_excess <= 0.0,
        format!("max |R + K| = {fd_max_dev:e}, excess over estimate {fd_excess:e}"),
    );

    let tm: Vec<f64> = trace.records.iter().map(|r| r.total_mean_curvature).collect();
    let monotone = tm.windows(2).all(|w| w[1] >= w[0]);
    let strictly = tm.windows(2).all(|w| w[1] > w[0]);
    item(
        "total_mean_curvature_monotone",
        monotone,
        format!("from {} to {}", tm[0], tm[tm.len() - 1]),
    );

    let slack = 1e-12;
    let inside = trace
        .records
        .iter()
        .all(|r| r.min_v >= r.w_minus * (1.0 - slack) && r.max_v <= r.w_plus * (1.0 + slack));
    item(
        "barriers",
        inside,
        "w_minus <= v <= w_plus at every step".to_string(),
    );

    let pass = items.iter().all(|i| i.pass);
    Ok(BandReport {
        items,
        fd_excess,
        fd_max_dev,
        strictly_increasing: strictly,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(points: usize) -> BandState {
        let hat = FlatTorusMetric::identity(2).unwrap();
        let outer = FlatTorusMetric::diagonal(&[4.0, 4.0]).unwrap();
        let grid = Grid::uniform(hat.clone(), points).unwrap();
        init_band(hat, outer, &ScalarField::constant(&grid, 3.0)).unwrap()
    }

    #[test]
    fn init_example() {
        let s = example(8);
        assert!(s.v.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((s.geometry.trace_q(0.0) - 6.0).abs() < 1e-14);
        assert!((s.big_n() - 1.5).abs() < 1e-12);
        assert_eq!(s.k(), 0.0);
        assert!((s.geometry.r_hat(0.0) - 4.5).abs() < 1e-14);
        assert!((band_total_mean_curvature(&s) - 3.0).abs() < 1e-14);
        let doubled = BandState {
            v: s.v.scale(2.0),
            ..s.clone()
        };
        assert!((band_total_mean_curvature(&doubled) - 1.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_dominated() {
        let hat = FlatTorusMetric::diagonal(&[2.0, 1.0]).unwrap();
        let outer = FlatTorusMetric::diagonal(&[4.0, 1.0]).unwrap();
        let grid = Grid::uniform(hat.clone(), 8).unwrap();
        assert!(matches!(
            init_band(hat.clone(), outer, &ScalarField::constant(&grid, 1.0)),
            Err(Error::NotDominated(_))
        ));
        let outer = FlatTorusMetric::diagonal(&[4.0, 2.0]).unwrap();
        assert!(matches!(
            init_band(hat, outer, &ScalarField::constant(&grid, 0.0)),
            Err(Error::NonPositiveH(_))
        ));
    }

    #[test]
    fn barrier_values() {
        let (lo, hi) = band_barriers(1.0, 1.0, 1.5, 1.0);
        assert!((lo - 1.0 / (2.0 * 1.5f64.exp() - 1.0).sqrt()).abs() < 1e-15);
        assert!((lo - 0.35437).abs() < 1e-5);
        assert!((hi - 2.11700).abs() < 1e-5);
        assert_eq!(band_barriers(0.7, 1.3, 0.0, 0.6), (0.7, 1.3));
        assert_eq!(band_barriers(0.7, 1.3, 2.0, 0.0), (0.7, 1.3));
    }

    #[test]
    fn homogeneous_band_matches_closed_form() {
        let s = example(8);
        let (end, trace) = band_evolve(&s, 100).unwrap();
        for (r, f) in trace.records.iter().zip(&trace.fields) {
            let exact = (1.0 + 3.0 * r.t).powf(-0.25);
            assert!((f.max() - exact).abs() < 1e-12 && (f.min() - exact).abs() < 1e-12);
        }
        assert_eq!(end.t, 1.0);
    }
}
