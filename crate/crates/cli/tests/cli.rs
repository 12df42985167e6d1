use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rfbsde(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfbsde"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Every failure is one line of the form `error[E-...]: ...`.
fn assert_single_error_line(o: &Output, code: &str) {
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error[{code}]: ")), "{err}");
}

#[test]
fn unstable_explicit_step_is_refused_with_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfl.toml",
        "model = \"example-classical\"\n[hjb]\nsubsteps = { fixed = 1 }\n",
    );
    let o = rfbsde(&["solve", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_single_error_line(&o, "E-CFL");
    assert!(stderr(&o).contains("stable bound"));
    assert!(stderr(&o).contains("substeps"));
}

#[test]
fn unknown_config_key_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "model = \"zero\"\n[mc]\npahts = 10\n");
    let o = rfbsde(&["cost", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_single_error_line(&o, "E-CONFIG");
    assert!(stderr(&o).contains("pahts"));
}

#[test]
fn unknown_bundle_lists_valid_ids() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfbsde(&["paper", "9.9"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_single_error_line(&o, "E-CONFIG");
    assert!(stderr(&o).contains("example-classical"));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfbsde(&["solve", "--tol.bogus", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_single_error_line(&o, "E-USAGE");
}

#[test]
fn zero_model_cost_is_exactly_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "zero.toml",
        "model = \"zero\"\n[mc]\npaths = 200\nsteps = 10\n",
    );
    let o = rfbsde(&["cost", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("J = 0 ± 0"), "{}", stdout(&o));
    rfbsde(&["cost", "--config", &cfg, "--out", "o"], dir.path());
    let rows = fs::read_to_string(dir.path().join("o/cost.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3, "header plus one row per run");
}

#[test]
fn tree_cost_is_close_to_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tree.toml",
        "model = \"example-classical\"\n[cost]\nmethod = \"tree\"\ntree_depth = 12\n",
    );
    let o = rfbsde(&["cost", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    let value: f64 = line
        .trim()
        .strip_prefix("J = ")
        .and_then(|s| s.split(' ').next())
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| panic!("unexpected output {line}"));
    let e2 = 2f64.exp();
    assert!((value - e2).abs() / e2 < 0.02, "{value}");
}

#[test]
fn reruns_reproduce_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "small.toml",
        "model = \"example-viscosity\"\n[grid]\nnt = 400\nnx = 40\n",
    );
    for out in ["a", "b"] {
        let o = rfbsde(&["solve", "--config", &cfg, "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["surface.csv", "residual.csv", "law.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs between runs");
    }
    let manifest = fs::read_to_string(dir.path().join("a/manifest.json")).unwrap();
    assert!(manifest.contains("\"kink_columns\": \"20 (x = 0)\""), "{manifest}");
    assert!(manifest.contains("config_sha256"));
}

#[test]
fn constant_law_fails_classical_verification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "neg.toml",
        r#"model = "example-classical"
[grid]
nt = 1000
nx = 100
[point]
t = 0.5
x = 1.0
[mc]
paths = 2000
steps = 50
battery_random = 2
[verify]
mode = "classical"
law = "constant"
law_value = 1.0
"#,
    );
    let o = rfbsde(&["verify", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("[fail] B"), "{}", stdout(&o));
    let report = fs::read_to_string(dir.path().join("o/report.json")).unwrap();
    assert!(report.contains("\"verdict\": \"fail\""));
}

#[test]
fn viscosity_origin_certificate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "visc.toml",
        r#"model = "example-viscosity"
surface = "candidate-viscosity"
[grid]
nt = 200
nx = 40
[point]
t = 0.0
x = 0.0
[mc]
paths = 500
steps = 20
battery_random = 2
[verify]
mode = "viscosity"
control = 1.0
triple = [0.0, 1.0, 0.0]
"#,
    );
    let o = rfbsde(&["verify", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let neg = fs::read_to_string(&cfg)
        .unwrap()
        .replace("[0.0, 1.0, 0.0]", "[0.0, 1.0, -1.0]");
    let cfg = write_config(dir.path(), "visc-neg.toml", &neg);
    let o = rfbsde(&["verify", "--config", &cfg, "--out", "o2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[fail] i "), "{}", stdout(&o));
}

#[test]
fn assumptions_report_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "a.toml",
        "model = \"example-viscosity\"\n[assumptions.box]\ntime = [0.0, 1.0]\nstate = [[-2.0, 2.0]]\nsamples = 200\nsweep = 21\n",
    );
    let o = rfbsde(
        &["assumptions", "--config", &cfg, "--out", "o", "--seed", "3"],
        dir.path(),
    );
    assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("o/assumptions.json")).unwrap();
    assert!(text.contains("\"seed\": 3"));
}
