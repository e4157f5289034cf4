use std::path::Path;
use std::process::{Command, Output};

use fillin_cli::{run, RunConfig, Status};

fn fillin(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fillin"))
        .args(args)
        .env("FILLIN_OUTPUT_ROOT", root)
        .output()
        .expect("fillin binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("machine-readable failure report")
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{"experiment": "flow", "speed": 3}"#);
    let out = fillin(&["run", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["kind"], "config");
}

#[test]
fn missing_config_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fillin(&["run", "/nonexistent/config.json"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn non_dominating_band_metrics_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "band.json",
        r#"{"experiment": "band", "gram_hat": [[4, 0], [0, 4]], "gram": [[1, 0], [0, 1]], "resolution": 8}"#,
    );
    assert_eq!(fillin(&["run", &cfg], tmp.path()).status.code(), Some(3));
}

#[test]
fn invariant_violation_exits_two_with_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "loose.json",
        r#"{"experiment": "flow", "resolution": 16, "rho_target": 20.0, "initial_data": "cosine",
            "value": 1.0, "amplitude": 0.3, "tolerance": 0.01, "dt_max": 0.5, "output_dir": "loose"}"#,
    );
    let out = fillin(&["run", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let report = stderr_json(&out);
    assert_eq!(report["kind"], "invariant");
    let failures: Vec<String> = serde_json::from_value(report["failures"].clone()).unwrap();
    assert!(failures.contains(&"monotonicity_identity".to_string()));
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("loose/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "fail");
}

#[test]
fn trivial_flow_has_zero_mass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_json(
        r#"{"experiment": "flow", "resolution": 8, "rho_target": 5.0, "value": 1.0, "output_dir": "unit"}"#,
    )
    .unwrap();
    let manifest = run(&cfg, Some(tmp.path())).unwrap();
    assert_eq!(manifest.status, Status::Pass);
    let mut reader = csv::Reader::from_path(tmp.path().join("unit/trace.csv")).unwrap();
    let col = reader.headers().unwrap().iter().position(|h| h == "F").unwrap();
    let mut rows = 0;
    for rec in reader.records() {
        assert_eq!(rec.unwrap()[col].parse::<f64>().unwrap(), 0.0);
        rows += 1;
    }
    assert!(rows > 1);
}

#[test]
fn manifest_lists_outputs_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "hm.json",
        r#"{"experiment": "hm_sweep", "radii": [5, 10, 20], "output_dir": "hm"}"#,
    );
    let out = fillin(&["run", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["status"], "pass");
    assert_eq!(manifest["config"]["experiment"], "hm_sweep");
    assert_eq!(manifest["versions"]["fillin_core"], fillin_core::VERSION);
    for name in manifest["outputs"].as_array().unwrap() {
        assert!(tmp.path().join("hm").join(name.as_str().unwrap()).is_file());
    }
    let on_disk = std::fs::read(tmp.path().join("hm/manifest.json")).unwrap();
    let disk: serde_json::Value = serde_json::from_slice(&on_disk).unwrap();
    assert_eq!(disk, manifest);
}

#[test]
fn band_example_passes_all_items() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "band.json",
        r#"{"experiment": "band", "gram_hat": [[1, 0], [0, 1]], "gram": [[4, 0], [0, 4]],
            "resolution": 16, "value": 3.0, "output_dir": "band"}"#,
    );
    let out = fillin(&["run", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = manifest["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 6);
    assert!(checks.iter().all(|c| c["pass"] == true));
}

#[test]
fn validate_subcommand_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fillin(&["validate", "--seed", "3"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("validate/validation.json").is_file());
}

#[test]
fn bound_check_on_identity_torus() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fillin(&["bound-check", "--gram", "[[1,0],[0,1]]", "--n", "3", "--H", "2"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "ADMISSIBLE");
    assert!((v["rhs"].as_f64().unwrap() - 36.748).abs() < 1e-3);

    let out = fillin(&["bound-check", "--gram", "[[1,0],[0,1]]", "--n", "3", "--H", "60"], tmp.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["verdict"], "EXCLUDED");

    let out = fillin(&["bound-check", "--gram", "[[1,2],[2,1]]", "--n", "3", "--H", "2"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bound_check_accepts_a_field_file() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = fillin_core::Grid::uniform(fillin_core::FlatTorusMetric::identity(2).unwrap(), 8).unwrap();
    let h = fillin_core::ScalarField::from_fn(&grid, |x| 2.0 + 0.5 * (2.0 * std::f64::consts::PI * x[1]).sin());
    let path = tmp.path().join("h.csv");
    fillin_core::io::write_field_csv(&h, std::fs::File::create(&path).unwrap()).unwrap();
    let out = fillin(
        &[
            "bound-check",
            "--gram",
            "[[1,0],[0,1]]",
            "--n",
            "3",
            "--h-file",
            path.to_str().unwrap(),
            "--resolution",
            "8",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["lhs"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "band.json",
        r#"{"experiment": "band", "gram_hat": [[1, 0.2], [0.2, 1]], "gram": [[3, 0], [0, 2.5]],
            "resolution": 8, "initial_data": "cosine", "value": 2.0, "amplitude": 0.3, "mode": [1, 2],
            "band_steps": 40, "output_dir": "det"}"#,
    );
    let snapshot = || {
        assert_eq!(fillin(&["run", &cfg], tmp.path()).status.code(), Some(0));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(tmp.path().join("det"))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let first = snapshot();
    assert_eq!(first, snapshot());
    assert_eq!(first.len(), 3);
}
