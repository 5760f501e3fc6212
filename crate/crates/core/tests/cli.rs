use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn curvreg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvreg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SMALL_CONFIG: &str = r#"
format_version = 1

[dataset]
kind = "paraboloid"
n = 40
noise = 0.1
validation = 20
test_grid = 6

[model]
hidden = 8

[training]
loss = "MECAE"
alpha = 0.01
epochs = 4
batch_size = 16
learning_rate = 0.01

[output]
dir = "run"
"#;

#[test]
fn gen_data_shapes_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = curvreg(&["gen-data", "--kind", "paraboloid", "--n", "200", "--noise", "0.2", "--seed", "1", "--out", "p.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# curvreg-data v1"));
    assert_eq!(lines[1], "x0,x1,x2");
    assert_eq!(lines.len(), 202);

    let o = curvreg(&["gen-data", "--kind", "paraboloid-grid", "--n", "100", "--out", "g.csv"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("g.csv")).unwrap().lines().count(), 10_002);

    let o = curvreg(&["gen-data", "--kind", "torus", "--n", "3", "--out", "x.csv"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("x.csv").exists());

    let o = curvreg(&["gen-data", "--kind", "paraboloid", "--n", "0", "--out", "x.csv"], dir.path());
    assert_eq!(code(&o), 1);

    assert_eq!(code(&curvreg(&["--help"], dir.path())), 0);
    assert_eq!(code(&curvreg(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&curvreg(&[], dir.path())), 1);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), SMALL_CONFIG.replace("epochs = 4", "epochs = -4")).unwrap();
    let o = curvreg(&["train", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("training.epochs"));

    fs::write(dir.path().join("typo.toml"), SMALL_CONFIG.replace("[model]", "[model]\nhiden = 3")).unwrap();
    let o = curvreg(&["train", "--config", "typo.toml"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model"));

    let o = curvreg(&["train", "--config", "missing.toml"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn train_eval_scan_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.toml"), SMALL_CONFIG).unwrap();
    assert_eq!(code(&curvreg(&["train", "--config", "c.toml"], p)), 0);
    for f in ["config.toml", "metrics.csv", "timings.csv", "summary.toml", "model.bin", "test.csv"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(p.join("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 5);

    // Zero-noise corruption reproduces the clean test set, so both errors agree.
    assert_eq!(
        code(&curvreg(&["gen-data", "--kind", "paraboloid-grid", "--n", "6", "--noise", "0", "--out", "c0.csv"], p)),
        0
    );
    let o = curvreg(&["eval", "--model", "run/model.bin", "--clean", "run/test.csv", "--corrupt", "c0.csv", "--out", "ev"], p);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: toml::Table = fs::read_to_string(p.join("ev/report.toml")).unwrap().parse().unwrap();
    assert_eq!(report["clean2clean"], report["corrupt2clean"]);
    assert!(report["clean2clean"].as_float().unwrap() >= 0.0);
    let points = fs::read_to_string(p.join("ev/points.csv")).unwrap();
    assert_eq!(points.lines().count(), 37);

    let o = curvreg(&["eval", "--model", "run/model.bin", "--clean", "run/test.csv", "--corrupt", "c0.csv", "--out", "ev2"], p);
    assert_eq!(code(&o), 0);
    for f in ["report.toml", "points.csv"] {
        assert_eq!(fs::read(p.join("ev").join(f)).unwrap(), fs::read(p.join("ev2").join(f)).unwrap(), "{f}");
    }

    let o = curvreg(
        &["curvature-scan", "--model", "run/model.bin", "--test", "run/test.csv", "--mode", "estimated", "--samples", "50", "--seed", "3", "--out", "scan.csv"],
        p,
    );
    assert_eq!(code(&o), 0);
    let scan = fs::read_to_string(p.join("scan.csv")).unwrap();
    assert!(scan.starts_with("# mode=estimated samples=50 seed=3 model_sha256="));
    assert_eq!(scan.lines().count(), 38);
}

#[test]
fn dimension_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.toml"), SMALL_CONFIG.replace("epochs = 4", "epochs = 1")).unwrap();
    assert_eq!(code(&curvreg(&["train", "--config", "c.toml"], p)), 0);
    assert_eq!(code(&curvreg(&["gen-data", "--kind", "sincurve", "--n", "10", "--out", "s.csv"], p)), 0);
    let o = curvreg(&["eval", "--model", "run/model.bin", "--clean", "s.csv", "--out", "ev"], p);
    assert_eq!(code(&o), 1);
}

#[test]
fn diagnostic_suites_pass_and_self_test_fails() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["estimator-check", "invariance-check"] {
        let o = curvreg(&[cmd, "--seed", "2"], dir.path());
        let out = String::from_utf8_lossy(&o.stdout);
        assert_eq!(code(&o), 0, "{out}");
        assert!(out.contains(", 0 failed"));
        let o = curvreg(&[cmd, "--tolerance-scale", "0"], dir.path());
        assert_eq!(code(&o), 3);
        assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    }
    let o = curvreg(&["invariance-check"], dir.path());
    let out = String::from_utf8_lossy(&o.stdout);
    let identity = out.lines().find(|l| l.starts_with("sphere identity")).unwrap();
    assert!(identity.contains(" 0.000e0"), "{identity}");
}
