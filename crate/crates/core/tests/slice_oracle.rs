//! Mean curvature of `rho = lambda + kappa f(x)` against a numerical
//! divergence of the unit normal field.

use std::f64::consts::PI;

use fillin_core::mass::{level_set_mean_curvature, SlicePoint};
use nalgebra::DMatrix;
use proptest::prelude::*;

#[derive(Clone, Debug)]
struct Data {
    gram: DMatrix<f64>,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    kappa: f64,
}

impl Data {
    fn u(&self, x: &[f64], rho: f64) -> f64 {
        1.0 + self.a * (2.0 * PI * x[0]).cos() * rho.powi(-3) + self.b * (2.0 * PI * (x[0] + x[1])).sin() / (rho * rho)
    }

    fn du(&self, x: &[f64], rho: f64) -> Vec<f64> {
        let s = 2.0 * PI * self.b * (2.0 * PI * (x[0] + x[1])).cos() / (rho * rho);
        vec![-2.0 * PI * self.a * (2.0 * PI * x[0]).sin() * rho.powi(-3) + s, s]
    }

    fn rho_du_drho(&self, x: &[f64], rho: f64) -> f64 {
        -3.0 * self.a * (2.0 * PI * x[0]).cos() * rho.powi(-3) - 2.0 * self.b * (2.0 * PI * (x[0] + x[1])).sin() / (rho * rho)
    }

    fn f(&self, x: &[f64]) -> f64 {
        self.c * (2.0 * PI * x[1]).cos() + self.d * (2.0 * PI * x[0]).sin()
    }

    fn df(&self, x: &[f64]) -> Vec<f64> {
        vec![
            2.0 * PI * self.d * (2.0 * PI * x[0]).cos(),
            -2.0 * PI * self.c * (2.0 * PI * x[1]).sin(),
        ]
    }

    fn ddf(&self, x: &[f64]) -> DMatrix<f64> {
        let w = 4.0 * PI * PI;
        DMatrix::from_row_slice(2, 2, &[
            -w * self.d * (2.0 * PI * x[0]).sin(),
            0.0,
            0.0,
            -w * self.c * (2.0 * PI * x[1]).cos(),
        ])
    }

    /// `sqrt(det g) g^{ab} d_b phi / |d phi|_g` for `phi = rho - kappa f` in
    /// coordinates `(x^1, x^2, rho)`.
    fn flux(&self, y: &[f64; 3]) -> [f64; 3] {
        let (x, rho) = (&y[..2], y[2]);
        let u = self.u(x, rho);
        let inv = self.gram.clone().try_inverse().unwrap();
        let df = self.df(x);
        let dphi = [-self.kappa * df[0], -self.kappa * df[1], 1.0];
        let mut up = [0.0; 3];
        for i in 0..2 {
            for j in 0..2 {
                up[i] += inv[(i, j)] * dphi[j] / (rho * rho);
            }
        }
        up[2] = rho * rho / (u * u);
        let norm = (0..3).map(|a| up[a] * dphi[a]).sum::<f64>().sqrt();
        let vol = rho * rho * self.gram.determinant().sqrt() * u / rho;
        [vol * up[0] / norm, vol * up[1] / norm, vol * up[2] / norm]
    }

    fn divergence(&self, y: [f64; 3]) -> f64 {
        let h = 1e-3;
        let mut div = 0.0;
        for a in 0..3 {
            let at = |s: f64| {
                let mut z = y;
                z[a] += s * h;
                self.flux(&z)[a]
            };
            div += (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * h);
        }
        let (x, rho) = (&y[..2], y[2]);
        div / (rho * self.gram.determinant().sqrt() * self.u(x, rho))
    }
}

fn gram_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (0.5f64..3.0, 0.5f64..3.0, -0.4f64..0.4).prop_map(|(a, b, c)| {
        let off = c * (a * b).sqrt();
        DMatrix::from_row_slice(2, 2, &[a, off, off, b])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn level_set_mean_curvature_matches_divergence(
        gram in gram_strategy(),
        a in -0.5f64..0.5, b in -0.3f64..0.3, c in -0.5f64..0.5, d in -0.5f64..0.5,
        lambda in 1.5f64..6.0, x0 in 0.0f64..1.0, x1 in 0.0f64..1.0,
    ) {
        let data = Data { gram: gram.clone(), a, b, c, d, kappa: 1.0 / lambda };
        let x = [x0, x1];
        let rho = lambda + data.kappa * data.f(&x);
        let point = SlicePoint {
            rho,
            u: data.u(&x, rho),
            du: data.du(&x, rho),
            rho_du_drho: data.rho_du_drho(&x, rho),
            kappa: data.kappa,
            df: data.df(&x),
            ddf: data.ddf(&x),
        };
        let inverse = gram.clone().try_inverse().unwrap();
        let exact = level_set_mean_curvature(&gram, &inverse, &point);
        let numeric = data.divergence([x0, x1, rho]);
        prop_assert!((exact - numeric).abs() < 1e-7 * (1.0 + exact.abs()), "{exact} vs {numeric}");
    }
}

#[test]
fn hyperbolic_spheres_have_constant_mean_curvature() {
    let gram = DMatrix::identity(2, 2);
    for rho in [1.0, 3.0, 10.0] {
        let p = SlicePoint {
            rho,
            u: 1.0,
            du: vec![0.0, 0.0],
            rho_du_drho: 0.0,
            kappa: 0.0,
            df: vec![0.0, 0.0],
            ddf: DMatrix::zeros(2, 2),
        };
        assert!((level_set_mean_curvature(&gram, &gram, &p) - 2.0).abs() < 1e-14);
    }
}
