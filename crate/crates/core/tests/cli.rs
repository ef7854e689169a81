use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn abbkan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abbkan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn summary(args: &[&str]) -> Value {
    let out = abbkan(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_str(&stdout(&out)).unwrap()
}

#[test]
fn scenario_summary_is_self_describing() {
    let v = summary(&["scenario", "C"]);
    assert_eq!(v["artifact"], "abbkan");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["command"], "scenario");
    assert_eq!(v["seed"], 1);
    assert_eq!(v["config"]["points"]["p0"], 0.15);
    assert_eq!(v["config"]["points"]["p2"], 0.85);
    assert!(v["results"]["nmpe"].as_f64().unwrap() < 0.0);
}

#[test]
fn ideal_scenario_is_exact() {
    let v = summary(&["scenario", "A", "--ideal"]);
    assert!(v["results"]["nmpe"].as_f64().unwrap().abs() <= 1e-12);
    assert_eq!(v["results"]["max_abs_error"].as_f64().unwrap(), 0.0);
}

#[test]
fn out_directory_receives_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = abbkan(&["scenario", "B", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("scenario_B.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# abbkan "));
    assert_eq!(lines[2], "# seed: 1");
    assert_eq!(lines[4], "x,ideal,analog,abs_err");
    assert!(!csv.contains('\r'));
    assert!(dir.path().join("scenario_B.json").exists());
}

#[test]
fn infeasible_points_exit_with_constraint_code() {
    let out = abbkan(&["compare", "--points", "0,0.3,0.6"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("P1 - P0"), "{err}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(abbkan(&["scenario", "D"]).status.code(), Some(1));
    assert_eq!(abbkan(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(abbkan(&["scenario"]).status.code(), Some(1));
    assert_eq!(
        abbkan(&["sweep", "--domain", "0.5:-0.5", "--scenario", "A"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        abbkan(&["scenario", "A", "--domain", "-1:1"]).status.code(),
        Some(1)
    );
    assert_eq!(
        abbkan(&["scenario", "A", "--config", "/nonexistent.toml"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn help_exits_cleanly() {
    let out = abbkan(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    for cmd in ["scenario", "kan", "compare", "cost", "sweep", "blocks"] {
        assert!(stdout(&out).contains(cmd));
    }
}

#[test]
fn divergence_exits_with_numerical_code() {
    let out = abbkan(&["kan", "--seeds", "1", "--learning-rate", "1e300"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iteration 1"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        "seed = 7\ngrid = 50\nscenario = \"A\"\nnoise = 0.01\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();

    let v = summary(&["scenario", "--config", p]);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["config"]["grid"], 50);
    assert_eq!(v["results"]["scenario"], "A");

    let v = summary(&[
        "scenario", "B", "--config", p, "--seed", "3", "--grid", "20",
    ]);
    assert_eq!(v["seed"], 3);
    assert_eq!(v["config"]["grid"], 20);
    assert_eq!(v["config"]["noise"], 0.01);
    assert_eq!(v["results"]["scenario"], "B");
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "seeed = 7\n").unwrap();
    let out = abbkan(&["cost", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seed_changes_noisy_output() {
    let a = stdout(&abbkan(&[
        "sweep",
        "--scenario",
        "A",
        "--noise",
        "0.02",
        "--seed",
        "1",
    ]));
    let b = stdout(&abbkan(&[
        "sweep",
        "--scenario",
        "A",
        "--noise",
        "0.02",
        "--seed",
        "2",
    ]));
    let body = |s: &str| s.lines().skip(5).collect::<Vec<_>>().join("\n");
    assert_ne!(body(&a), body(&b));
}

#[test]
fn sweep_emits_csv_with_requested_grid() {
    let s = stdout(&abbkan(&[
        "sweep",
        "--points",
        "0.1,0.2,0.25",
        "--grid",
        "11",
    ]));
    let rows: Vec<&str> = s.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "x,ideal,analog,abs_err");
    assert_eq!(rows.len(), 12);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 4));
}

#[test]
fn compare_reports_all_codes() {
    let v = summary(&["compare", "--scenario", "C"]);
    let r = &v["results"];
    assert_eq!(r["codes"], 256);
    assert!(r["max_abs_digital_all_codes"].as_f64().unwrap() <= 3.0 / 64.0);
    assert!(r["nmpe_analog"].as_f64().unwrap().abs() > r["nmpe_digital"].as_f64().unwrap().abs());
}

#[test]
fn cost_weights_from_flags() {
    let v = summary(&["cost"]);
    assert!((v["results"]["uniform_saving"]["area"].as_f64().unwrap() - 4.0 / 9.0).abs() < 1e-12);
    let v = summary(&["cost", "--weight", "SUB=1.2:1.15"]);
    let w = &v["results"]["weighted_saving"];
    assert!((w["area"].as_f64().unwrap() - 0.46).abs() < 0.05);
    assert!((w["power"].as_f64().unwrap() - 0.457).abs() < 0.05);
    assert_eq!(
        abbkan(&["cost", "--weight", "MUL=-1"]).status.code(),
        Some(1)
    );
}

#[test]
fn blocks_lists_every_instance() {
    let s = stdout(&abbkan(&["blocks"]));
    let rows: Vec<&str> = s.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(
        rows.iter().filter(|r| r.starts_with("canonical,")).count(),
        9
    );
    assert_eq!(
        rows.iter().filter(|r| r.starts_with("rewritten,")).count(),
        5
    );
    let s = stdout(&abbkan(&[
        "blocks",
        "--formulation",
        "rewritten",
        "--weight",
        "MUL=2",
    ]));
    let area: f64 = s
        .lines()
        .filter(|l| l.starts_with("rewritten,"))
        .map(|l| l.split(',').nth(4).unwrap().parse::<f64>().unwrap())
        .sum();
    assert_eq!(area, 7.0);
}

#[test]
fn kan_writes_four_curves_and_losses() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = abbkan(&[
        "kan", "--seeds", "2", "--target", "exp", "--grid", "64", "--out", d,
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let curves = fs::read_to_string(dir.path().join("kan_curves.csv")).unwrap();
    assert!(curves.contains("\nx,target,kan_noiseless,kan_noisy,error\n"));
    assert_eq!(
        curves.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 640
    );
    let loss = fs::read_to_string(dir.path().join("kan_loss.csv")).unwrap();
    assert!(loss.contains("\nnoisy,0,") && loss.contains("\nnoiseless,0,"));
    let v: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("kan.json")).unwrap()).unwrap();
    assert_eq!(v["results"]["per_seed"].as_array().unwrap().len(), 2);
    assert_eq!(v["config"]["noise"], -0.0758);
}

#[test]
fn kan_accepts_tabulated_target() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("target.csv");
    let mut text = String::from("x,y\n");
    for i in 0..=20 {
        let x = -0.5 + i as f64 / 20.0;
        text.push_str(&format!("{x},{}\n", x * x * x));
    }
    fs::write(&path, text).unwrap();
    let v = summary(&[
        "kan",
        "--seeds",
        "2",
        "--target",
        "file",
        "--target-file",
        path.to_str().unwrap(),
        "--noise",
        "0",
    ]);
    assert!(v["results"]["median_abs_nmpe_noiseless"].as_f64().unwrap() < 0.01);
    assert_eq!(abbkan(&["kan", "--target", "file"]).status.code(), Some(1));
}

#[test]
fn sequential_and_parallel_agree() {
    let a = stdout(&abbkan(&["kan", "--seeds", "3", "--seed", "4"]));
    let b = stdout(&abbkan(&[
        "kan",
        "--seeds",
        "3",
        "--seed",
        "4",
        "--sequential",
    ]));
    assert_eq!(a, b);
}
