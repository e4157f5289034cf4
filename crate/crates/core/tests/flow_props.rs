use std::f64::consts::PI;

use fillin_core::flow::{
    evolve_to, exact_homogeneous_solution, init_state, FlowControls, FlowTrace, Scheme, StepControl,
};
use fillin_core::{FlatTorusMetric, Grid, ScalarField};
use proptest::prelude::*;

fn run(u0: &ScalarField, rho_target: f64, controls: &FlowControls) -> FlowTrace {
    let state = init_state(u0, 1.0, u0.grid().dim() + 1).unwrap();
    evolve_to(&state, rho_target, controls).unwrap().1
}

fn schedule(scheme: Scheme, level: i32) -> FlowControls {
    let scale = 2f64.powi(level);
    FlowControls {
        scheme,
        step_control: StepControl::Schedule {
            h0: 0.0005 / scale,
            h_max: 0.04 / scale,
        },
        dt_max: 1.0,
        ..FlowControls::default()
    }
}

fn final_u(trace: &FlowTrace) -> ScalarField {
    trace.checkpoints.last().unwrap().v.clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mass_monotone_and_barriers_hold(
        amp in 0.05f64..0.6,
        base in 0.8f64..2.5,
        k0 in 0i32..=2,
        k1 in 1i32..=2,
        second in -0.2f64..0.2,
    ) {
        let grid = Grid::uniform(FlatTorusMetric::diagonal(&[1.0, 1.5]).unwrap(), 12).unwrap();
        let u0 = ScalarField::from_fn(&grid, |x| {
            base + amp * base * (2.0 * PI * (k0 as f64 * x[0] + k1 as f64 * x[1])).cos()
                + second * amp * (2.0 * PI * x[0]).sin()
        });
        prop_assume!(u0.min() > 0.0);
        let trace = run(&u0, 8.0, &FlowControls::default());
        prop_assert!(trace.steps.windows(2).all(|w| w[1].mass <= w[0].mass));
        prop_assert!(trace.all_within_barriers());
        let (lo, hi) = (u0.min(), u0.max());
        for s in &trace.steps {
            let a = exact_homogeneous_solution(lo, 1.0, 3, s.rho).unwrap();
            let b = exact_homogeneous_solution(hi, 1.0, 3, s.rho).unwrap();
            let tol = 10.0 * s.error_estimate + 1e-14;
            prop_assert!(s.min_u >= a.min(1.0) - tol && s.max_u <= b.max(1.0) + tol);
        }
    }
}

#[test]
fn homogeneous_runs_match_closed_form_in_higher_dimension() {
    let grid = Grid::uniform(FlatTorusMetric::identity(3).unwrap(), 6).unwrap();
    for u0 in [0.6, 1.0, 1.7] {
        let controls = FlowControls {
            extra_checkpoints: vec![3.0, 20.0],
            ..FlowControls::default()
        };
        let trace = run(&ScalarField::constant(&grid, u0), 20.0, &controls);
        for rho in [3.0, 20.0] {
            let exact = exact_homogeneous_solution(u0, 1.0, 4, rho).unwrap();
            let cp = trace.checkpoint_at(rho).unwrap();
            let err = cp.v.values().iter().map(|v| (1.0 + v - exact).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-8 * exact, "u0 = {u0}, rho = {rho}: {err:e}");
        }
    }
}

#[test]
fn time_refinement_converges_at_scheme_order() {
    let grid = Grid::uniform(FlatTorusMetric::identity(2).unwrap(), 16).unwrap();
    let u0 = ScalarField::from_fn(&grid, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos() + 0.1 * (2.0 * PI * x[1]).sin());
    for (scheme, lo, hi) in [(Scheme::Imex, 3.5, 4.6), (Scheme::Rk4, 12.0, 20.0)] {
        let u: Vec<ScalarField> = (0..3).map(|l| final_u(&run(&u0, 10.0, &schedule(scheme, l)))).collect();
        let e01 = (&u[0] - &u[1]).max_abs();
        let e12 = (&u[1] - &u[2]).max_abs();
        let ratio = e01 / e12;
        assert!((lo..hi).contains(&ratio), "{scheme:?}: ratio {ratio} ({e01:e}, {e12:e})");
    }
}

#[test]
fn spatial_resolution_is_spectrally_accurate() {
    let make = |res: usize| {
        let grid = Grid::uniform(FlatTorusMetric::identity(2).unwrap(), res).unwrap();
        ScalarField::from_fn(&grid, |x| 1.0 + 0.2 * (2.0 * PI * (x[0] + x[1])).cos())
    };
    let controls = FlowControls {
        step_control: StepControl::Schedule { h0: 1e-4, h_max: 0.02 },
        dt_max: 1.0,
        ..FlowControls::default()
    };
    let coarse = final_u(&run(&make(16), 10.0, &controls));
    let fine = final_u(&run(&make(32), 10.0, &controls));
    let mut diff = 0.0f64;
    for (node, v) in coarse.values().iter().enumerate() {
        let idx = coarse.grid().index_of(node);
        let fine_node = fine.grid().node_at(&[2 * idx[0], 2 * idx[1]]);
        diff = diff.max((v - fine.values()[fine_node]).abs());
    }
    assert!(diff < 1e-9, "16 vs 32 points differ by {diff:e}");
}

#[test]
fn trivial_data_stays_trivial() {
    let grid = Grid::uniform(FlatTorusMetric::identity(2).unwrap(), 8).unwrap();
    let trace = run(&ScalarField::constant(&grid, 1.0), 50.0, &FlowControls::default());
    assert!(trace.steps.iter().all(|s| s.mass == 0.0 && s.dissipation == 0.0));
    assert!(trace.checkpoints.iter().all(|c| c.v.max_abs() == 0.0));
}
