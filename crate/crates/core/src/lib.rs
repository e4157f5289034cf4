//! Numerical toolkit for fill-ins of flat tori with scalar curvature bounded below.
//!
//! The crate evolves the radial prescribed-scalar-curvature flow
//! `g = rho^2 gamma + u^2 rho^-2 drho^2` on `Sigma x [rho0, inf)`, tracks its
//! monotone mass functional and mass aspect, builds almost-CMC slices, the
//! interpolation band between two flat metrics, and the Horowitz-Myers
//! benchmark that saturates the total mean curvature bound
//! `mean(H) - (n-1) <= 1/2 (4 pi / (n sigma))^n`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod band;
pub mod curvature;
pub mod error;
pub mod flow;
pub mod hm;
pub mod io;
pub mod lattice;
pub mod mass;
pub mod spectral;
pub mod stencil;

pub use error::{Error, Result};

/// Crate version, for run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use lattice::{enumerate_candidates, FlatTorusMetric, Grid};
pub use spectral::ScalarField;

/// Right-hand side of the sharp bound, `1/2 (4 pi / (n sigma))^n`.
pub fn total_mean_curvature_bound(n: usize, systole: f64) -> f64 {
    0.5 * (4.0 * std::f64::consts::PI / (n as f64 * systole)).powi(n as i32)
}
