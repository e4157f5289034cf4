//! Periodic scalar fields on torus grids and their Fourier calculus.
//!
//! Coordinates are normalised to the unit cube, so Fourier mode `m` has
//! wavevector `2 pi m` and the Laplacian of a constant Gram `G` has symbol
//! `-4 pi^2 m^T G^{-1} m`. On even grids the Nyquist index has no sign; cross
//! terms touching a Nyquist axis are dropped so every symbol stays even in `m`
//! (real fields map to real fields) and the Laplacian symbol stays negative
//! definite.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{FlatTorusMetric, Grid};

/// Cached FFT plans and per-mode wavenumbers for one grid.
pub(crate) struct SpectralPlan {
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    /// Signed wavenumber per (mode, axis), flattened mode-major.
    wavenumbers: Vec<i64>,
    /// Whether (mode, axis) sits on the Nyquist index.
    nyquist: Vec<bool>,
    laplacian: Vec<f64>,
    resolution: Vec<usize>,
    total: usize,
}

impl fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralPlan")
            .field("resolution", &self.resolution)
            .finish()
    }
}

impl SpectralPlan {
    pub(crate) fn new(metric: &FlatTorusMetric, resolution: &[usize]) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        let forward = resolution.iter().map(|&r| planner.plan_fft_forward(r)).collect();
        let inverse = resolution.iter().map(|&r| planner.plan_fft_inverse(r)).collect();
        let d = resolution.len();
        let total: usize = resolution.iter().product();
        let mut wavenumbers = Vec::with_capacity(total * d);
        let mut nyquist = Vec::with_capacity(total * d);
        for node in 0..total {
            let mut rest = node;
            for &r in resolution {
                let i = rest % r;
                rest /= r;
                let (m, nyq) = signed_wavenumber(i, r);
                wavenumbers.push(m);
                nyquist.push(nyq);
            }
        }
        let mut plan = Self {
            forward,
            inverse,
            wavenumbers,
            nyquist,
            laplacian: Vec::new(),
            resolution: resolution.to_vec(),
            total,
        };
        plan.laplacian = plan.laplacian_symbol(metric.inverse_gram());
        plan
    }

    fn dim(&self) -> usize {
        self.resolution.len()
    }

    fn total(&self) -> usize {
        self.total
    }

    pub(crate) fn laplacian(&self) -> &[f64] {
        &self.laplacian
    }

    /// Largest `|symbol|` of the grid's own Laplacian.
    pub(crate) fn max_laplacian_magnitude(&self) -> f64 {
        self.laplacian.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// `-4 pi^2 m^T A m` per mode, `A` a symmetric inverse Gram.
    pub(crate) fn laplacian_symbol(&self, inverse_gram: &DMatrix<f64>) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.total);
        for mode in 0..self.total {
            let m = &self.wavenumbers[mode * d..(mode + 1) * d];
            let nyq = &self.nyquist[mode * d..(mode + 1) * d];
            let mut q = 0.0;
            for a in 0..d {
                q += inverse_gram[(a, a)] * (m[a] * m[a]) as f64;
                for b in (a + 1)..d {
                    if !nyq[a] && !nyq[b] {
                        q += 2.0 * inverse_gram[(a, b)] * (m[a] * m[b]) as f64;
                    }
                }
            }
            out.push(-4.0 * PI * PI * q);
        }
        out
    }

    /// Symbol of `d/dx_axis` (purely imaginary part), zero on Nyquist.
    fn first_derivative_symbol(&self, axis: usize) -> Vec<f64> {
        let d = self.dim();
        (0..self.total())
            .map(|mode| {
                if self.nyquist[mode * d + axis] {
                    0.0
                } else {
                    2.0 * PI * self.wavenumbers[mode * d + axis] as f64
                }
            })
            .collect()
    }

    /// Symbol of `d^2/dx_a dx_b`, consistent with [`Self::laplacian_symbol`].
    fn second_derivative_symbol(&self, a: usize, b: usize) -> Vec<f64> {
        let d = self.dim();
        (0..self.total())
            .map(|mode| {
                let ma = self.wavenumbers[mode * d + a];
                let mb = self.wavenumbers[mode * d + b];
                if a != b && (self.nyquist[mode * d + a] || self.nyquist[mode * d + b]) {
                    0.0
                } else {
                    -4.0 * PI * PI * (ma * mb) as f64
                }
            })
            .collect()
    }

    /// Max `|m_a|/N_a` over axes, used for 2/3-rule truncation.
    fn beyond_two_thirds(&self, mode: usize) -> bool {
        let d = self.dim();
        (0..d).any(|a| {
            let m = self.wavenumbers[mode * d + a].unsigned_abs() as f64;
            let n = self.resolution[a] as f64;
            m > n / 3.0 || self.nyquist[mode * d + a]
        })
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, false);
        data
    }

    pub(crate) fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut data, true);
        let scale = 1.0 / data.len() as f64;
        data.into_iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let total = data.len();
        let mut stride = 1;
        for (axis, &len) in self.resolution.iter().enumerate() {
            let fft = if inverse {
                &self.inverse[axis]
            } else {
                &self.forward[axis]
            };
            if stride == 1 {
                fft.process(data);
            } else {
                let mut line = vec![Complex64::new(0.0, 0.0); len];
                let block = stride * len;
                for start in (0..total).step_by(block) {
                    for offset in 0..stride {
                        let base = start + offset;
                        for (i, slot) in line.iter_mut().enumerate() {
                            *slot = data[base + i * stride];
                        }
                        fft.process(&mut line);
                        for (i, value) in line.iter().enumerate() {
                            data[base + i * stride] = *value;
                        }
                    }
                }
            }
            stride *= len;
        }
    }
}

fn signed_wavenumber(i: usize, n: usize) -> (i64, bool) {
    if 2 * i < n {
        (i as i64, false)
    } else if 2 * i == n {
        ((n / 2) as i64, true)
    } else {
        (i as i64 - n as i64, false)
    }
}

/// Real periodic samples in grid node order.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl ScalarField {
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::FieldLength {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at node {i}")));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub(crate) fn from_vec_unchecked(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn constant(grid: &Arc<Grid>, value: f64) -> Self {
        Self::from_vec_unchecked(grid, vec![value; grid.len()])
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at the unit-cube coordinates of every node.
    pub fn from_fn(grid: &Arc<Grid>, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|node| f(&grid.coords(node))).collect();
        Self::from_vec_unchecked(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(&self.grid, self.values.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self::from_vec_unchecked(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|x| x * factor)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Midpoint rule, exact for trigonometric polynomials the grid resolves.
    pub fn integrate(&self) -> f64 {
        self.sum() * self.grid.metric().volume() / self.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Inner product `int f g dvol_gamma`.
    pub fn inner(&self, other: &Self) -> f64 {
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        s * self.grid.metric().volume() / self.len() as f64
    }

    pub(crate) fn spectrum(&self) -> Vec<Complex64> {
        self.grid.plan.forward(&self.values)
    }

    pub(crate) fn from_spectrum(grid: &Arc<Grid>, spectrum: Vec<Complex64>) -> Self {
        Self::from_vec_unchecked(grid, grid.plan.inverse_real(spectrum))
    }

    pub(crate) fn apply_real_symbol(&self, symbol: &[f64]) -> Self {
        let mut s = self.spectrum();
        for (c, &k) in s.iter_mut().zip(symbol) {
            *c *= k;
        }
        Self::from_spectrum(&self.grid, s)
    }

    /// `Delta_gamma` with the grid's own Gram.
    pub fn laplacian(&self) -> Self {
        self.apply_real_symbol(&self.grid.plan.laplacian)
    }

    /// Laplacian of another flat metric on the same coordinate grid.
    pub fn laplacian_with(&self, metric: &FlatTorusMetric) -> Self {
        let symbol = self.grid.plan.laplacian_symbol(metric.inverse_gram());
        self.apply_real_symbol(&symbol)
    }

    /// Coordinate derivative `d/dx_axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        let sym = self.grid.plan.first_derivative_symbol(axis);
        let mut s = self.spectrum();
        for (c, &k) in s.iter_mut().zip(&sym) {
            *c *= Complex64::new(0.0, k);
        }
        Self::from_spectrum(&self.grid, s)
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..self.grid.dim()).map(|a| self.derivative(a)).collect()
    }

    /// Coordinate second derivative `d^2/dx_a dx_b`.
    pub fn second_derivative(&self, a: usize, b: usize) -> Self {
        self.apply_real_symbol(&self.grid.plan.second_derivative_symbol(a, b))
    }

    /// Solves `Delta_gamma f = self` with `mean(f) = 0`.
    pub fn poisson_solve_zero_mean(&self) -> Result<Self> {
        let mean = self.mean();
        let max_abs = self.max_abs();
        if mean.abs() > 1e-10 * max_abs {
            return Err(Error::NonZeroMean { mean, max_abs });
        }
        let mut s = self.spectrum();
        for (c, &k) in s.iter_mut().zip(&self.grid.plan.laplacian) {
            if k == 0.0 {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c /= k;
            }
        }
        Ok(Self::from_spectrum(&self.grid, s))
    }

    /// Zeroes every mode beyond a third of the resolution on any axis.
    pub fn dealias_two_thirds(&self) -> Self {
        let plan = &self.grid.plan;
        let mut s = self.spectrum();
        for (mode, c) in s.iter_mut().enumerate() {
            if plan.beyond_two_thirds(mode) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Self::from_spectrum(&self.grid, s)
    }
}

impl std::ops::Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl std::ops::Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}
