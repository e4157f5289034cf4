use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fillin_cli::experiments::bound_verdict;
use fillin_cli::output::OUTPUT_ROOT_VAR;
use fillin_cli::{CliError, Experiment, InitialData, RunConfig, Status};

#[derive(Parser)]
#[command(name = "fillin", version, about = "Fill-in experiments for flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Check boundary data against the total mean curvature bound.
    BoundCheck {
        /// Gram matrix rows as JSON, e.g. `[[1,0],[0,1]]`.
        #[arg(long)]
        gram: String,
        #[arg(long)]
        n: usize,
        /// Constant boundary mean curvature.
        #[arg(long = "H", conflicts_with = "h_file")]
        h: Option<f64>,
        /// Boundary mean curvature field (`.csv` or binary).
        #[arg(long)]
        h_file: Option<PathBuf>,
        /// Grid points per axis of the field file.
        #[arg(long, default_value_t = 32)]
        resolution: usize,
    },
    /// Run the oracle validation suite.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "validate")]
        output_dir: PathBuf,
    },
}

fn report_error(e: &CliError) -> ExitCode {
    let body = serde_json::json!({
        "status": "error",
        "kind": e.kind(),
        "failures": e.failures(),
    });
    eprintln!("{body}");
    ExitCode::from(e.exit_code() as u8)
}

fn run_config(cfg: &RunConfig) -> Result<ExitCode, CliError> {
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from);
    let manifest = fillin_cli::run(cfg, root.as_deref())?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    match manifest.status {
        Status::Pass => Ok(ExitCode::SUCCESS),
        Status::Fail => Err(CliError::Invariant(manifest.failures)),
    }
}

fn bound_check_command(
    gram: &str,
    n: usize,
    h: Option<f64>,
    h_file: Option<&Path>,
    resolution: usize,
) -> Result<ExitCode, CliError> {
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(gram).map_err(|e| CliError::Config(format!("--gram: {e}")))?;
    let mut text = serde_json::json!({
        "experiment": Experiment::BoundCheck,
        "n": n,
        "gram": rows,
        "resolution": resolution,
        "value": h,
    });
    if let Some(path) = h_file {
        text["initial_data"] = serde_json::json!(InitialData::File);
        text["initial_file"] = serde_json::json!(path);
    }
    let cfg = RunConfig::from_json(&text.to_string())?;
    let verdict = bound_verdict(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => RunConfig::load(&config).and_then(|cfg| run_config(&cfg)),
        Command::BoundCheck {
            gram,
            n,
            h,
            h_file,
            resolution,
        } => bound_check_command(&gram, n, h, h_file.as_deref(), resolution),
        Command::Validate { seed, output_dir } => {
            let text = serde_json::json!({
                "experiment": Experiment::Validate,
                "seed": seed,
                "output_dir": output_dir,
            });
            RunConfig::from_json(&text.to_string()).and_then(|cfg| run_config(&cfg))
        }
    };
    result.unwrap_or_else(|e| report_error(&e))
}
