//! Experiment driver for `fillin-core`: flat-JSON run configs, the total
//! mean curvature bound checker, and CSV/JSON artifacts with a manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod validate;

use std::path::Path;

pub use bound::{bound_check, Admissibility, BoundVerdict, MeanCurvatureData};
pub use config::{Experiment, InitialData, RunConfig};
pub use error::CliError;
pub use output::{Check, Manifest, OutputDir, Status};

/// Runs `cfg` with outputs under `root` (when the configured directory is
/// relative), writes `manifest.json`, and returns the manifest.
pub fn run(cfg: &RunConfig, root: Option<&Path>) -> Result<Manifest, CliError> {
    cfg.validate()?;
    let dir = output::resolve_output_dir(&cfg.output_dir, root);
    let mut out = OutputDir::create(dir)?;
    let checks = experiments::run_experiment(cfg, &mut out)?;
    let mut outputs = out.files().to_vec();
    outputs.push("manifest.json".into());
    let manifest = Manifest::new(cfg.clone(), checks, outputs);
    out.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}
