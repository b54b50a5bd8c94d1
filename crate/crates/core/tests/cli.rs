//! End-to-end checks of the `mlse` binary: run → plot round trip, the
//! verify subcommand, exit codes and the output-dir override.

use std::fs;
use std::process::Command;

fn mlse() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlse"))
}

fn write_config(dir: &std::path::Path, extra: &str) -> std::path::PathBuf {
    let out = dir.join("out");
    let cfg = format!(
        r#"{{
        "kernel": {{"family": "squared_exponential", "scale": 1.0, "length": 1.0}},
        "dimension": 1,
        "noise_var": 0.1,
        "tau": 0.0,
        "delta": 0.1,
        "budgets": [5, 10],
        "seeds": {{"start": 0, "count": 4}},
        "grid_resolution": 41,
        {extra}
        "output_dir": {:?}
    }}"#,
        out.to_str().unwrap()
    );
    let path = dir.join("config.json");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn run_then_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let status = mlse()
        .args(["run", "--config", cfg.to_str().unwrap(), "--threads", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = dir.path().join("out").join("results.csv");
    assert!(csv.exists());
    assert!(dir.path().join("out").join("config_used.json").exists());

    let plots = dir.path().join("plots");
    let status = mlse()
        .args([
            "plot",
            "--input",
            csv.to_str().unwrap(),
            "--out",
            plots.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(plots.join("error_vs_budget.tsv").exists());
    assert!(plots.join("info_gain_vs_budget.tsv").exists());
}

#[test]
fn verify_subcommand_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let output = mlse()
        .args([
            "verify",
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            "2",
        ])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "verify failed:\n{stdout}");
    assert!(stdout.contains("[PASS] posterior_oracle_equivalence"));
    assert!(stdout.contains("[PASS] partition_x3_geometry"));
    assert!(!stdout.contains("[FAIL]"));
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // Budgets out of order: semantic config error.
    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"kernel": {"family": "squared_exponential", "scale": 1.0, "length": 1.0},
            "dimension": 1, "noise_var": 0.1, "tau": 0.0, "delta": 0.1,
            "budgets": [10, 5], "seeds": [1], "output_dir": "x"}"#,
    )
    .unwrap();
    let status = mlse()
        .args(["run", "--config", bad.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    // Missing file is a config error too.
    let status = mlse()
        .args(["run", "--config", dir.path().join("nope.json").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn seed_offset_shifts_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let status = mlse()
        .args([
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--seed-offset",
            "100",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(dir.path().join("out").join("results.csv")).unwrap();
    assert!(csv.contains("\n5,100,"));
    assert!(!csv.contains("\n5,0,"));
}

#[test]
fn env_var_overrides_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let override_dir = dir.path().join("elsewhere");
    let status = mlse()
        .env("MLSE_OUTPUT_DIR", override_dir.to_str().unwrap())
        .args(["run", "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(override_dir.join("results.csv").exists());
    assert!(!dir.path().join("out").join("results.csv").exists());
}
