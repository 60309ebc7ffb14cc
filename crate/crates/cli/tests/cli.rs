//! End-to-end command tests against the built binary: exit codes, error
//! accumulation on bad configs, and byte-identical reports under the
//! fixed clock.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_stabmin")
}

fn run(args: &[&str]) -> Output {
    Command::new(binary()).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

const LINEAR_SMALL: &str = "\
[domain]
n = 2
bounds = 0, 1, 0, 1
resolution = 9, 9

[function]
m = 2
builtin = linear
matrix = 0.1, 0.0, 0.0, 0.2

[constants]
mode = slope
seed = 7

[output]
fixed_clock = true
";

const LINEAR_STEEP: &str = "\
[domain]
n = 2
bounds = 0, 1, 0, 1
resolution = 9, 9

[function]
m = 2
builtin = linear
matrix = 2.0, 0.0, 0.0, 0.2

[constants]
mode = slope

[output]
fixed_clock = true
";

#[test]
fn criterion_passes_and_fails_by_slope() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.ini", LINEAR_SMALL);
    let out = run(&["criterion", "--config", &ok]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["criterion"]["pass"], true);
    assert_eq!(report["seed"], 7);

    let steep = write(dir.path(), "steep.ini", LINEAR_STEEP);
    let out = run(&["criterion", "--config", &steep]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_reports_every_error_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.ini",
        "\
[domain]
n = 2
bounds = 0, 1, 0, 1
resolution = nine, 9

[function]
m = 2
builtin = linear
matrix = 0.1, 0.0
",
    );
    let out = run(&["criterion", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("resolution"), "{stderr}");
    assert!(stderr.contains("matrix"), "{stderr}");
}

#[test]
fn missing_config_file_is_an_operational_error() {
    let out = run(&["criterion", "--config", "/nonexistent/x.ini"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn pipeline_reports_are_byte_identical_under_fixed_clock() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "pipe.ini",
        "\
[domain]
n = 2
bounds = 0, 1, 0, 1
resolution = 9, 9

[function]
m = 2
builtin = random_smooth
amplitude = 1.0
modes = 2
tilt = 0.3, -0.2, 0.1, 0.25

[constants]
mode = slope
seed = 11

[flow]
scaling = auto
residual_target = 1e-8

[output]
fixed_clock = true
",
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let ra = run(&["pipeline", "--config", &cfg, "--out", out_a.to_str().unwrap()]);
    let rb = run(&["pipeline", "--config", &cfg, "--out", out_b.to_str().unwrap()]);
    assert_eq!(ra.status.code(), Some(0), "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(rb.status.code(), Some(0));
    let a = fs::read(out_a.join("report.json")).unwrap();
    let b = fs::read(out_b.join("report.json")).unwrap();
    assert_eq!(a, b, "reports must be byte-identical");
    // artifacts present
    assert!(out_a.join("trace.csv").exists());
    assert!(out_a.join("fields.csv").exists());
    assert!(out_a.join("eigenfield.csv").exists());
    let report: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["flow"]["status"], "converged");
    assert!(report["tolerances"]["tol_eig"].as_f64().unwrap() > 0.0);
    assert_eq!(report["spectrum"]["report"]["verdict"], "stable_numerically");
}

#[test]
fn verify_algebra_defaults_find_no_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "alg.ini",
        "\
[domain]
n = 3
bounds = 0, 1, 0, 1, 0, 1
resolution = 5, 5, 5

[function]
m = 3
builtin = zero

[algebra]
count = 20000

[output]
fixed_clock = true
",
    );
    let out = run(&["verify-algebra", "--config", &cfg, "--seed", "123"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["batch"]["violations"], 0);
    assert_eq!(report["seed"], 123);
}

#[test]
fn flow_converges_on_small_data_and_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "flow.ini",
        "\
[domain]
n = 1
bounds = 0, 1
resolution = 17

[function]
m = 1
builtin = sinusoidal
amplitude = 0.2
frequency = 1

[flow]
scaling = none

[output]
fixed_clock = true
",
    );
    let out_dir = dir.path().join("flow_out");
    let out = run(&["flow", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,residual,min_star_omega\n"));
    assert!(trace.lines().count() >= 3);
    let finals = fs::read_to_string(out_dir.join("final.csv")).unwrap();
    assert!(finals.starts_with("node_index,x1,f1\n"));
}

#[test]
fn analyze_exits_by_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "an.ini", LINEAR_SMALL);
    let out_dir = dir.path().join("an_out");
    let out = run(&["analyze", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["spectrum"]["report"]["verdict"], "stable_numerically");
    assert!(report["spectrum"]["mu_min"].as_f64().unwrap() > 0.0);
}
