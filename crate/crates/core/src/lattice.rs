//! Flat metrics on `T^{n-1} = S^1 x T^{n-2}` and their lattice geometry.
//!
//! Coordinates live on the unit cube `[0,1)^{n-1}`; all of the geometry is in
//! the constant Gram matrix. Coordinate 0 is the `S^1` factor, so a closed
//! geodesic winds non-trivially around it exactly when its lattice vector has a
//! non-zero component 0.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::SpectralPlan;

/// Axis carrying the winding form.
pub const WINDING_AXIS: usize = 0;

/// Default cap on the number of lattice points visited by [`enumerate_candidates`].
pub const DEFAULT_CANDIDATE_CAP: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct FlatTorusMetric {
    gram: DMatrix<f64>,
    inverse: DMatrix<f64>,
    volume: f64,
    min_eigenvalue: f64,
}

impl FlatTorusMetric {
    pub fn new(gram: DMatrix<f64>) -> Result<Self> {
        let d = gram.nrows();
        if gram.ncols() != d {
            return Err(Error::BadDimension(format!(
                "gram matrix is {}x{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if d < 2 {
            return Err(Error::BadDimension(format!(
                "torus dimension must be at least 2, got {d}"
            )));
        }
        if gram.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gram matrix".into()));
        }
        let scale = gram.amax().max(f64::MIN_POSITIVE);
        let asym = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| (gram[(i, j)] - gram[(j, i)]).abs())
            .fold(0.0, f64::max);
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let sym = (&gram + gram.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let min_eigenvalue = eig.eigenvalues.min();
        if min_eigenvalue <= 0.0 {
            return Err(Error::NotPositiveDefinite(min_eigenvalue));
        }
        let inverse = sym
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite(min_eigenvalue))?
            .inverse();
        let volume = sym.determinant().sqrt();
        Ok(Self {
            gram: sym,
            inverse,
            volume,
            min_eigenvalue,
        })
    }

    /// Builds a metric from row-major rows, as read from run configs.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::BadDimension("gram rows are ragged".into()));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let d = entries.len();
        Self::new(DMatrix::from_fn(d, d, |i, j| if i == j { entries[i] } else { 0.0 }))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn inverse_gram(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// `vol_gamma(Sigma) = sqrt(det gram)`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.gram[(i, j)]).collect())
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.gram * factor)
    }

    /// `k^T G k`, summed in a fixed order so equal vectors give bit-equal results.
    pub fn norm_squared(&self, k: &[i64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for (i, &ki) in k.iter().enumerate().take(d) {
            let mut row = 0.0;
            for (j, &kj) in k.iter().enumerate().take(d) {
                row += self.gram[(i, j)] * kj as f64;
            }
            acc += ki as f64 * row;
        }
        acc
    }

    /// Length of the shortest closed geodesic with non-zero winding around the
    /// `S^1` factor.
    ///
    /// Fincke-Pohst enumeration over the Cholesky factor, bounded by the pure
    /// winding circle `e_0`, which is always a candidate.
    pub fn winding_systole(&self) -> f64 {
        self.winding_systole_vector().1
    }

    /// Minimising lattice vector together with its length.
    pub fn winding_systole_vector(&self) -> (Vec<i64>, f64) {
        let d = self.dim();
        // G = R^T R with R upper triangular.
        let l = self
            .gram
            .clone()
            .cholesky()
            .expect("validated metric is positive definite")
            .unpack();
        let r = l.transpose();
        let diag: Vec<f64> = (0..d).map(|i| r[(i, i)] * r[(i, i)]).collect();
        let mu = DMatrix::from_fn(d, d, |i, j| if j > i { r[(i, j)] / r[(i, i)] } else { 0.0 });

        let mut best_vec = vec![0i64; d];
        best_vec[WINDING_AXIS] = 1;
        let mut best = self.norm_squared(&best_vec);
        let bound = best * (1.0 + 1e-9);

        let mut k = vec![0i64; d];
        let mut search = FinckePohst {
            diag: &diag,
            mu: &mu,
            bound,
        };
        search.descend(d, 0.0, &mut k, &mut |cand: &[i64]| {
            let q = self.norm_squared(cand);
            if q < best {
                best = q;
                best_vec.copy_from_slice(cand);
            }
        });
        (best_vec, best.sqrt())
    }
}

struct FinckePohst<'a> {
    diag: &'a [f64],
    mu: &'a DMatrix<f64>,
    bound: f64,
}

impl FinckePohst<'_> {
    /// Fixes coordinates `level-1, level-2, ..., 0` in turn; `partial` is the
    /// contribution of the coordinates already fixed.
    fn descend(&mut self, level: usize, partial: f64, k: &mut [i64], visit: &mut dyn FnMut(&[i64])) {
        if level == 0 {
            if k[WINDING_AXIS] != 0 {
                visit(k);
            }
            return;
        }
        let i = level - 1;
        let d = k.len();
        let center: f64 = -(i + 1..d).map(|j| self.mu[(i, j)] * k[j] as f64).sum::<f64>();
        let slack = self.bound - partial;
        if slack < 0.0 {
            return;
        }
        let radius = (slack / self.diag[i]).sqrt();
        let lo = (center - radius).ceil() as i64;
        let hi = (center + radius).floor() as i64;
        for ki in lo..=hi {
            let off = ki as f64 - center;
            let next = partial + self.diag[i] * off * off;
            if next > self.bound {
                continue;
            }
            k[i] = ki;
            self.descend(i, next, k, visit);
        }
        k[i] = 0;
    }
}

/// All lattice vectors with non-zero winding and `k^T G k <= length_bound^2`,
/// found by scanning the box `|k_i| <= ceil(length_bound / sqrt(lambda_min))`.
///
/// This is the brute-force oracle for [`FlatTorusMetric::winding_systole`].
pub fn enumerate_candidates(metric: &FlatTorusMetric, length_bound: f64) -> Result<Vec<Vec<i64>>> {
    enumerate_candidates_capped(metric, length_bound, DEFAULT_CANDIDATE_CAP)
}

pub fn enumerate_candidates_capped(
    metric: &FlatTorusMetric,
    length_bound: f64,
    cap: u128,
) -> Result<Vec<Vec<i64>>> {
    if !(length_bound > 0.0) || !length_bound.is_finite() {
        return Err(Error::DomainError(format!(
            "length bound must be positive, got {length_bound}"
        )));
    }
    let d = metric.dim();
    let radius = (length_bound / metric.min_eigenvalue().sqrt() * (1.0 + 1e-12)).ceil() as i64;
    let side = (2 * radius + 1) as u128;
    let count = side.checked_pow(d as u32).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::BoundTooLarge { count, cap });
    }
    let limit = length_bound * length_bound * (1.0 + 1e-12);
    let mut out = Vec::new();
    let mut k = vec![-radius; d];
    loop {
        if k[WINDING_AXIS] != 0 && metric.norm_squared(&k) <= limit {
            out.push(k.clone());
        }
        // odometer, last axis fastest
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            if k[axis] < radius {
                k[axis] += 1;
                break;
            }
            k[axis] = -radius;
        }
    }
}

/// Uniform grid over the fundamental domain, row-major with axis 0 fastest.
pub struct Grid {
    metric: FlatTorusMetric,
    resolution: Vec<usize>,
    strides: Vec<usize>,
    pub(crate) plan: SpectralPlan,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("metric", &self.metric)
            .field("resolution", &self.resolution)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.metric == other.metric && self.resolution == other.resolution
    }
}

impl Grid {
    pub fn new(metric: FlatTorusMetric, resolution: &[usize]) -> Result<Arc<Self>> {
        if resolution.len() != metric.dim() {
            return Err(Error::BadDimension(format!(
                "resolution has {} axes, metric has {}",
                resolution.len(),
                metric.dim()
            )));
        }
        if let Some(&bad) = resolution.iter().find(|&&r| r < 4) {
            return Err(Error::ResolutionTooSmall(bad));
        }
        let mut strides = Vec::with_capacity(resolution.len());
        let mut s = 1;
        for &r in resolution {
            strides.push(s);
            s *= r;
        }
        let plan = SpectralPlan::new(&metric, resolution);
        Ok(Arc::new(Self {
            metric,
            resolution: resolution.to_vec(),
            strides,
            plan,
        }))
    }

    /// Same metric on every axis with `points` nodes each.
    pub fn uniform(metric: FlatTorusMetric, points: usize) -> Result<Arc<Self>> {
        let res = vec![points; metric.dim()];
        Self::new(metric, &res)
    }

    pub fn metric(&self) -> &FlatTorusMetric {
        &self.metric
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.resolution.iter().map(|&r| 1.0 / r as f64).collect()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Multi-index of a node.
    pub fn index_of(&self, node: usize) -> Vec<usize> {
        let mut rest = node;
        self.resolution
            .iter()
            .map(|&r| {
                let i = rest % r;
                rest /= r;
                i
            })
            .collect()
    }

    pub fn node_at(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Node reached from `node` by moving `offset` cells along `axis`, wrapping periodically.
    pub fn shifted(&self, node: usize, axis: usize, offset: isize) -> usize {
        let r = self.resolution[axis] as isize;
        let i = ((node / self.strides[axis]) % self.resolution[axis]) as isize;
        let j = (i + offset).rem_euclid(r);
        (node as isize + (j - i) * self.strides[axis] as isize) as usize
    }

    /// Unit-cube coordinates of a node.
    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.index_of(node)
            .iter()
            .zip(&self.resolution)
            .map(|(&i, &r)| i as f64 / r as f64)
            .collect()
    }
}

/// Validates and wraps a Gram matrix.
pub fn make_flat_metric(gram: DMatrix<f64>) -> Result<FlatTorusMetric> {
    FlatTorusMetric::new(gram)
}

pub fn make_grid(metric: FlatTorusMetric, resolution: &[usize]) -> Result<Arc<Grid>> {
    Grid::new(metric, resolution)
}
