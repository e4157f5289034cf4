use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

/// Environment variable naming the directory relative output paths resolve against.
pub const OUTPUT_ROOT_VAR: &str = "FILLIN_OUTPUT_ROOT";

/// Resolves a configured output directory against an optional root.
pub fn resolve_output_dir(dir: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(root) if dir.is_relative() => root.join(dir),
        _ => dir.to_path_buf(),
    }
}

/// Output directory that records every file it writes.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Writes `name` through a temporary file in the same directory, then
    /// renames it into place.
    pub fn write_with<F>(&mut self, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        let target = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf)?;
            buf.flush()?;
        }
        tmp.persist(&target)
            .map_err(|e| CliError::Io(format!("{}: {e}", target.display())))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.write_with(name, |w| Ok(w.write_all(bytes)?))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        self.write_with(name, |w| {
            let mut out = csv::Writer::from_writer(w);
            for row in rows {
                out.serialize(row)?;
            }
            out.flush()?;
            Ok(())
        })
    }
}

/// One embedded pass/fail check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub fillin_cli: &'static str,
    pub fillin_core: &'static str,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            fillin_cli: env!("CARGO_PKG_VERSION"),
            fillin_core: fillin_core::VERSION,
        }
    }
}

/// `manifest.json`: config echo, versions, checks, outputs and status.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub config: RunConfig,
    pub versions: Versions,
    pub checks: Vec<Check>,
    pub outputs: Vec<String>,
    pub failures: Vec<String>,
    pub status: Status,
}

impl Manifest {
    pub fn new(config: RunConfig, checks: Vec<Check>, outputs: Vec<String>) -> Self {
        let failures: Vec<String> = checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.clone())
            .collect();
        let status = if failures.is_empty() {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            config,
            versions: Versions::default(),
            checks,
            outputs,
            failures,
            status,
        }
    }
}
