use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use fillin_core::band::{band_evolve, band_fd_profile, init_band, verify_band};
use fillin_core::curvature::{certify_checkpoint, fd_scalar_curvature};
use fillin_core::flow::{evolve_to, init_state, FlowTrace};
use fillin_core::hm::{hm_sample_metric, hm_sharpness, HMModel, SharpnessPoint};
use fillin_core::io::{
    read_field_binary, read_field_csv, write_band_trace_csv, write_field_binary,
    write_flow_trace_csv, write_sharpness_csv,
};
use fillin_core::mass::{check_main_inequality, extract_mass_aspect, identity_residuals};
use fillin_core::{FlatTorusMetric, Grid, ScalarField};
use serde::Serialize;

use crate::bound::{bound_check, BoundVerdict, MeanCurvatureData};
use crate::config::{Experiment, InitialData, RunConfig};
use crate::error::{config_err, CliError};
use crate::output::{Check, OutputDir};
use crate::validate::validation_suite;

/// Relative tolerance on `rho dF/drho = dissipation` at checkpoints.
pub const IDENTITY_TOLERANCE: f64 = 1e-3;
/// Bound on `max |R + n(n-1)|` over certified checkpoints.
pub const CURVATURE_TOLERANCE: f64 = 1e-3;

/// Flat metric on the `(n-1)`-torus from config rows, identity by default.
pub fn torus_metric(rows: Option<&Vec<Vec<f64>>>, n: usize) -> Result<FlatTorusMetric, CliError> {
    let metric = match rows {
        Some(rows) => FlatTorusMetric::from_rows(rows).map_err(config_err)?,
        None => FlatTorusMetric::identity(n - 1).map_err(config_err)?,
    };
    if metric.dim() != n - 1 {
        return Err(CliError::Config(format!(
            "gram is {0}x{0}, expected {1}x{1} for n = {n}",
            metric.dim(),
            n - 1
        )));
    }
    Ok(metric)
}

/// Initial data on `grid`: the constant `value`, `value + amplitude cos(2 pi k.x)`,
/// or a field file (`.csv` or binary).
pub fn initial_field(
    cfg: &RunConfig,
    grid: &Arc<Grid>,
    default_value: f64,
) -> Result<ScalarField, CliError> {
    let value = cfg.value.unwrap_or(default_value);
    match cfg.initial_data {
        InitialData::Constant => Ok(ScalarField::constant(grid, value)),
        InitialData::Cosine => {
            let mode = cfg.mode.clone().unwrap_or_else(|| {
                let mut m = vec![0; grid.dim()];
                m[0] = 1;
                m
            });
            let amp = cfg.amplitude;
            Ok(ScalarField::from_fn(grid, |x| {
                let phase: f64 = mode.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
                value + amp * (2.0 * PI * phase).cos()
            }))
        }
        InitialData::File => {
            let path = cfg
                .initial_file
                .as_ref()
                .ok_or_else(|| CliError::Config("initial_file is missing".into()))?;
            let file = File::open(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let reader = BufReader::new(file);
            let field = if path.extension().is_some_and(|e| e == "csv") {
                read_field_csv(grid, reader)
            } else {
                read_field_binary(grid, reader)
            };
            field.map_err(config_err)
        }
    }
}

#[derive(Serialize)]
struct CheckpointRow {
    index: usize,
    rho: f64,
    file: String,
    psi_delta: f64,
    #[serde(rename = "rho_dF_drho")]
    rho_df_drho: Option<f64>,
    dissipation: Option<f64>,
    identity_relative: Option<f64>,
    #[serde(rename = "R_closed_dev")]
    r_closed_dev: Option<f64>,
    #[serde(rename = "R_fd_dev")]
    r_fd_dev: Option<f64>,
    fd_error_estimate: Option<f64>,
    fd_disagreement: Option<f64>,
}

#[derive(Serialize)]
struct MassOutput<T: Serialize, U: Serialize> {
    #[serde(flatten)]
    summary: T,
    main_inequality: U,
}

fn within(trace: &FlowTrace, rho: f64, rho_target: f64) -> bool {
    rho >= trace.rho0 && rho <= rho_target * (1.0 + 1e-9)
}

fn run_flow(cfg: &RunConfig, out: &mut OutputDir) -> Result<Vec<Check>, CliError> {
    let n = cfg.n;
    let metric = torus_metric(cfg.gram.as_ref(), n)?;
    let grid = Grid::uniform(metric, cfg.resolution).map_err(config_err)?;
    let u0 = initial_field(cfg, &grid, 1.0)?;
    let state = init_state(&u0, cfg.rho0, n).map_err(config_err)?;
    let (_, trace) = evolve_to(&state, cfg.rho_target, &cfg.flow_controls())?;
    out.write_with("trace.csv", |w| Ok(write_flow_trace_csv(&trace, w)?))?;

    let residuals = identity_residuals(&trace);
    let mut rows = Vec::with_capacity(trace.checkpoints.len());
    let mut certificates = Vec::new();
    for (index, cp) in trace.checkpoints.iter().enumerate() {
        let file = format!("checkpoint_{index:03}.bin");
        let u = cp.v.map(|x| 1.0 + x);
        out.write_with(&file, |w| Ok(write_field_binary(&u, w)?))?;
        let residual = residuals.iter().find(|r| r.rho == cp.rho);
        let cert = certify_checkpoint(cp, n)?;
        if let Some(c) = cert {
            certificates.push(c);
        }
        rows.push(CheckpointRow {
            index,
            rho: cp.rho,
            file,
            psi_delta: cp.psi_delta,
            rho_df_drho: residual.map(|r| r.rho_df_drho),
            dissipation: residual.map(|r| r.dissipation),
            identity_relative: residual.map(|r| r.relative),
            r_closed_dev: cert.map(|c| c.closed_form_deviation),
            r_fd_dev: cert.map(|c| c.fd_deviation),
            fd_error_estimate: cert.map(|c| c.fd_error_estimate),
            fd_disagreement: cert.map(|c| c.disagreement),
        });
    }
    out.write_csv("checkpoints.csv", &rows)?;

    let mut checks = Vec::new();
    let masses: Vec<f64> = trace
        .steps
        .iter()
        .filter(|s| within(&trace, s.rho, cfg.rho_target))
        .map(|s| s.mass)
        .collect();
    let max_increase = masses
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    checks.push(Check::new(
        "mass_monotone",
        masses.windows(2).all(|w| w[1] <= w[0]),
        format!("{} steps, largest increase {max_increase:e}", masses.len()),
    ));

    let in_range: Vec<_> = residuals
        .iter()
        .filter(|r| within(&trace, r.rho, cfg.rho_target))
        .collect();
    let worst = in_range.iter().map(|r| r.relative).fold(0.0f64, f64::max);
    checks.push(Check::new(
        "monotonicity_identity",
        worst <= IDENTITY_TOLERANCE,
        format!("{} checkpoints, max relative residual {worst:e}", in_range.len()),
    ));

    let steps: Vec<_> = trace
        .steps
        .iter()
        .filter(|s| within(&trace, s.rho, cfg.rho_target))
        .collect();
    let outside = steps.iter().filter(|s| !s.within_barriers).count();
    checks.push(Check::new(
        "barrier_containment",
        outside == 0,
        format!("{outside} of {} steps outside the barrier envelope", steps.len()),
    ));

    let r_dev = certificates
        .iter()
        .map(|c| c.closed_form_deviation)
        .fold(0.0f64, f64::max);
    checks.push(Check::new(
        "scalar_curvature",
        r_dev <= CURVATURE_TOLERANCE,
        format!("{} checkpoints, max |R + n(n-1)| = {r_dev:e}", certificates.len()),
    ));
    let disagree = certificates.iter().filter(|c| !c.agree).count();
    checks.push(Check::new(
        "curvature_routes_agree",
        disagree == 0,
        format!("{disagree} of {} checkpoints outside the fd error estimate", certificates.len()),
    ));

    if cfg.run_to_convergence {
        checks.push(Check::new(
            "psi_converged",
            trace.converged,
            format!("stopped at rho = {}", trace.final_rho()),
        ));
    }
    if trace.converged {
        let report = extract_mass_aspect(&trace)?;
        let inequality = check_main_inequality(&trace)?;
        out.write_with("mu.bin", |w| Ok(write_field_binary(&report.mu, w)?))?;
        out.write_with("f.bin", |w| Ok(write_field_binary(&report.f, w)?))?;
        out.write_json(
            "mass.json",
            &MassOutput {
                summary: report.summary(Some("mu.bin".into()), Some("f.bin".into())),
                main_inequality: &inequality,
            },
        )?;
        checks.push(Check::new(
            "main_inequality",
            inequality.pass,
            format!(
                "F_initial = {:e}, F_limit = {:e}, (n-1) mu0 = {:e}",
                inequality.f_initial, inequality.f_limit, inequality.expected_limit
            ),
        ));
    }
    Ok(checks)
}

fn run_band(cfg: &RunConfig, out: &mut OutputDir) -> Result<Vec<Check>, CliError> {
    let n = cfg.n;
    let hat = torus_metric(cfg.gram_hat.as_ref(), n)?;
    let outer = torus_metric(cfg.gram.as_ref(), n)?;
    let grid = Grid::uniform(hat.clone(), cfg.resolution).map_err(config_err)?;
    let h = initial_field(cfg, &grid, (n - 1) as f64)?;
    let state = init_band(hat, outer, &h).map_err(config_err)?;
    let (_, trace) = band_evolve(&state, cfg.band_steps)?;
    let report = verify_band(&trace, &h)?;
    let profile = band_fd_profile(&trace)?;
    out.write_with("band_trace.csv", |w| {
        Ok(write_band_trace_csv(&trace.records, &profile, w)?)
    })?;
    out.write_json("band_report.json", &report)?;
    Ok(report
        .items
        .iter()
        .map(|i| Check::new(i.name.clone(), i.pass, i.detail.clone()))
        .collect())
}

#[derive(Serialize)]
struct HmCertificateRow {
    #[serde(rename = "R")]
    r: f64,
    fd_scalar_curvature: f64,
    error_estimate: f64,
    deviation: f64,
    observed_order: Option<f64>,
}

fn run_hm_sweep(cfg: &RunConfig, out: &mut OutputDir) -> Result<Vec<Check>, CliError> {
    let n = cfg.n;
    let circumferences = cfg.circumferences.clone().unwrap_or_else(|| vec![1.0; n - 2]);
    let model = HMModel::new(n, cfg.r0, circumferences).map_err(config_err)?;
    let mut radii = cfg.radii.clone();
    radii.sort_by(f64::total_cmp);
    let points = radii
        .iter()
        .map(|&r| hm_sharpness(&model, r))
        .collect::<Result<Vec<SharpnessPoint>, _>>()?;
    out.write_with("sharpness.csv", |w| Ok(write_sharpness_csv(&points, w)?))?;

    let exact = -((n * (n - 1)) as f64);
    let mut rows = Vec::with_capacity(radii.len());
    for &r in &radii {
        let sample = hm_sample_metric(&model, (r * 0.98, r * 1.02), cfg.resolution.min(9), 21)?;
        let fd = fd_scalar_curvature(&sample, 0, 10)?;
        rows.push(HmCertificateRow {
            r,
            fd_scalar_curvature: fd.value,
            error_estimate: fd.error_estimate,
            deviation: (fd.value - exact).abs(),
            observed_order: fd.observed_order,
        });
    }
    out.write_csv("hm_curvature.csv", &rows)?;

    let increasing = points.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let below = points.iter().all(|p| p.ratio <= 1.0);
    let fd_ok = rows.iter().all(|r| r.deviation <= r.error_estimate.max(1e-9));
    let ratios: Vec<String> = points.iter().map(|p| format!("{:.9}", p.ratio)).collect();
    Ok(vec![
        Check::new("ratio_increasing", increasing, ratios.join(" ")),
        Check::new("ratio_at_most_one", below, ratios.join(" ")),
        Check::new(
            "fd_scalar_curvature",
            fd_ok,
            format!(
                "max |R + n(n-1)| = {:e}",
                rows.iter().map(|r| r.deviation).fold(0.0, f64::max)
            ),
        ),
    ])
}

/// Verdict of the bound checker for the config's gram, `n` and mean curvature data.
pub fn bound_verdict(cfg: &RunConfig) -> Result<BoundVerdict, CliError> {
    let metric = torus_metric(cfg.gram.as_ref(), cfg.n)?;
    let data = match cfg.initial_data {
        InitialData::Constant => MeanCurvatureData::Constant(cfg.value.unwrap_or((cfg.n - 1) as f64)),
        _ => {
            let grid = Grid::uniform(metric.clone(), cfg.resolution).map_err(config_err)?;
            MeanCurvatureData::Field(initial_field(cfg, &grid, (cfg.n - 1) as f64)?)
        }
    };
    bound_check(&metric, cfg.n, &data)
}

fn run_bound_check(cfg: &RunConfig, out: &mut OutputDir) -> Result<Vec<Check>, CliError> {
    out.write_json("verdict.json", &bound_verdict(cfg)?)?;
    Ok(Vec::new())
}

fn run_validate(cfg: &RunConfig, out: &mut OutputDir) -> Result<Vec<Check>, CliError> {
    let checks = validation_suite(cfg.seed)?;
    out.write_json("validation.json", &checks)?;
    Ok(checks)
}

/// Runs one experiment, writing its artifacts into `out`, and returns the
/// embedded checks.
pub fn run_experiment(cfg: &RunConfig, out: &mut OutputDir) -> Result<Vec<Check>, CliError> {
    match cfg.experiment {
        Experiment::Flow => run_flow(cfg, out),
        Experiment::Band => run_band(cfg, out),
        Experiment::HmSweep => run_hm_sweep(cfg, out),
        Experiment::BoundCheck => run_bound_check(cfg, out),
        Experiment::Validate => run_validate(cfg, out),
    }
}
