use std::path::{Path, PathBuf};

use fillin_core::flow::{FlowControls, Scheme, StepControl};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Flow,
    Band,
    HmSweep,
    BoundCheck,
    Validate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    #[default]
    Constant,
    Cosine,
    File,
}

/// One experiment, read from flat JSON with exactly these keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Rows of the flat torus Gram matrix (outer metric for `band`).
    #[serde(default)]
    pub gram: Option<Vec<Vec<f64>>>,
    /// Inner metric for `band`.
    #[serde(default)]
    pub gram_hat: Option<Vec<Vec<f64>>>,
    /// Grid points per axis.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_rho0")]
    pub rho0: f64,
    #[serde(default = "default_rho_target")]
    pub rho_target: f64,
    #[serde(default)]
    pub initial_data: InitialData,
    /// Base value of the initial data: `u0` for `flow`, `h` for `band`,
    /// `H` for `bound_check`.
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub amplitude: f64,
    /// Integer wave vector of the cosine perturbation.
    #[serde(default)]
    pub mode: Option<Vec<i64>>,
    /// Field file (`.bin` or `.csv`) for `initial_data = "file"`.
    #[serde(default)]
    pub initial_file: Option<PathBuf>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_dt0")]
    pub dt0: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_checkpoint_ratio")]
    pub checkpoint_ratio: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub run_to_convergence: bool,
    #[serde(default)]
    pub extra_checkpoints: Vec<f64>,
    #[serde(default = "default_band_steps")]
    pub band_steps: usize,
    #[serde(default = "default_r0")]
    pub r0: f64,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub circumferences: Option<Vec<f64>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    3
}
fn default_resolution() -> usize {
    32
}
fn default_rho0() -> f64 {
    1.0
}
fn default_rho_target() -> f64 {
    100.0
}
fn default_scheme() -> Scheme {
    Scheme::Imex
}
fn default_dt0() -> f64 {
    FlowControls::default().dt0
}
fn default_dt_max() -> f64 {
    FlowControls::default().dt_max
}
fn default_safety() -> f64 {
    FlowControls::default().safety
}
fn default_checkpoint_ratio() -> f64 {
    FlowControls::default().checkpoint_ratio
}
fn default_tolerance() -> f64 {
    match FlowControls::default().step_control {
        StepControl::Adaptive { tolerance } => tolerance,
        StepControl::Schedule { .. } => 1e-8,
    }
}
fn default_band_steps() -> usize {
    100
}
fn default_r0() -> f64 {
    1.0
}
fn default_radii() -> Vec<f64> {
    vec![5.0, 10.0, 20.0, 40.0, 80.0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn require<T>(&self, field: &Option<T>, name: &str) -> Result<(), CliError> {
        if field.is_none() {
            return Err(CliError::Config(format!(
                "experiment {:?} requires `{name}`",
                self.experiment
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.resolution < 4 {
            return bad(format!("resolution must be at least 4, got {}", self.resolution));
        }
        for (name, x) in [
            ("rho0", self.rho0),
            ("dt0", self.dt0),
            ("dt_max", self.dt_max),
            ("safety", self.safety),
            ("tolerance", self.tolerance),
            ("r0", self.r0),
        ] {
            if !(x > 0.0) || !x.is_finite() {
                return bad(format!("{name} must be positive and finite, got {x}"));
            }
        }
        if !(self.checkpoint_ratio > 1.0) {
            return bad(format!("checkpoint_ratio must exceed 1, got {}", self.checkpoint_ratio));
        }
        if !self.amplitude.is_finite() {
            return bad("amplitude must be finite".into());
        }
        if let Some(mode) = &self.mode {
            if mode.len() != self.n - 1 {
                return bad(format!("mode needs {} entries, got {}", self.n - 1, mode.len()));
            }
        }
        if self.initial_data == InitialData::File {
            self.require(&self.initial_file, "initial_file")?;
        }
        match self.experiment {
            Experiment::Flow => {
                if !(self.rho_target > self.rho0) {
                    return bad("rho_target must exceed rho0".into());
                }
            }
            Experiment::Band => {
                self.require(&self.gram, "gram")?;
                self.require(&self.gram_hat, "gram_hat")?;
                if self.band_steps == 0 {
                    return bad("band_steps must be positive".into());
                }
            }
            Experiment::HmSweep => {
                if self.radii.is_empty() || self.radii.iter().any(|&r| !(r > self.r0)) {
                    return bad("radii must be non-empty and exceed r0".into());
                }
                if let Some(c) = &self.circumferences {
                    if c.len() != self.n - 2 {
                        return bad(format!("circumferences needs {} entries", self.n - 2));
                    }
                }
            }
            Experiment::BoundCheck => {
                self.require(&self.gram, "gram")?;
            }
            Experiment::Validate => {}
        }
        Ok(())
    }

    pub fn flow_controls(&self) -> FlowControls {
        FlowControls {
            scheme: self.scheme,
            step_control: StepControl::Adaptive {
                tolerance: self.tolerance,
            },
            dt0: self.dt0,
            dt_max: self.dt_max,
            safety: self.safety,
            checkpoint_ratio: self.checkpoint_ratio,
            extra_checkpoints: self.extra_checkpoints.clone(),
            run_to_convergence: self.run_to_convergence,
            ..FlowControls::default()
        }
    }
}
