use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn extlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extlab"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The deterministic config with `edit` applied line by line.
fn variant(dir: &Path, name: &str, edit: impl Fn(&str) -> String) -> PathBuf {
    let text = fs::read_to_string(configs().join("deterministic.toml")).unwrap();
    let body: String = text.lines().map(|l| edit(l) + "\n").collect();
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

/// Short noisy ensemble of 12 paths.
fn small_noisy(dir: &Path, extra_top: &str) -> PathBuf {
    variant(dir, "small.toml", |l| match l {
        "n_paths = 1" => format!("n_paths = 12\n{extra_top}"),
        "k_modes = 0" => "k_modes = 2".into(),
        "mu = []" => "mu = [0.05, 0.02]".into(),
        "n_interior = 255" => "n_interior = 63".into(),
        "dt = 1e-4" => "dt = 5e-4".into(),
        other => other.into(),
    })
}

#[test]
fn simulate_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = extlab(&[
        "simulate",
        "--config",
        s(&configs().join("deterministic.toml")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("extinct at t ="));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,hm1_norm,lp_norm,min,max,supermartingale"));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[1], 0.0);
}

#[test]
fn ensemble_writes_summary_and_tau_and_honours_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_noisy(dir.path(), "");
    let out = extlab(&[
        "ensemble",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--seed",
        "77",
        "--workers",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in [
        "checkpoints",
        "empirical_cdf",
        "wilson_lo",
        "wilson_hi",
        "theory_bound",
        "supermartingale_report",
        "extinct_fraction",
        "n_failed",
        "gamma_used",
        "c_star",
    ] {
        assert!(json.get(key).is_some(), "summary lacks {key}");
    }
    assert_eq!(json["config"]["master_seed"], 77);
    assert_eq!(json["checkpoints"].as_array().unwrap().len(), 3);
    let tau = fs::read_to_string(dir.path().join("tau.csv")).unwrap();
    assert_eq!(tau.lines().next(), Some("path_index,tau_hat,extinct,failed"));
    assert_eq!(tau.lines().count(), 13);
}

#[test]
fn bound_and_gamma_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("deterministic.toml");
    let out = extlab(&["bound", "--config", s(&cfg), "--out", s(dir.path()), "--points", "5"]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("bound.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "t,bound");
    assert_eq!(rows.len(), 6);
    // without noise the bound reaches 1 only at t → ∞ but is positive past T_det
    let last: f64 = rows[5].split(',').nth(1).unwrap().parse().unwrap();
    assert!(last > 0.0 && last < 1.0);

    let out = extlab(&["gamma", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("gamma.json")).unwrap()).unwrap();
    assert!(json["value"].as_f64().unwrap() > 0.0);
    assert_eq!(json["minimizer"].as_array().unwrap().len(), 255);
}

#[test]
fn convergence_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_noisy(dir.path(), "");
    let out = extlab(&["convergence", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("lambda_a,lambda_b,sup_hm1,l2_l2"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.toml");
    fs::write(&garbage, "grid = 3\n").unwrap();
    assert_eq!(code(&extlab(&["ensemble", "--config", s(&garbage)])), 2);
    assert_eq!(
        code(&extlab(&["simulate", "--config", s(&dir.path().join("missing.toml"))])),
        2
    );
    let bad_alpha = variant(dir.path(), "alpha.toml", |l| {
        if l == "alpha = 0.5" {
            "alpha = 1.5".into()
        } else {
            l.into()
        }
    });
    assert_eq!(code(&extlab(&["gamma", "--config", s(&bad_alpha)])), 2);
}

#[test]
fn solver_collapse_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "starved.toml", |l| match l {
        "record_every = 10" => "record_every = 10\nnewton_max_iter = 1\nnewton_tol = 1e-30".into(),
        other => other.into(),
    });
    let out = extlab(&["ensemble", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 3);
    let out = extlab(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code(&out), 3);
}

#[test]
fn strict_reports_failed_comparison_with_4() {
    let dir = tempfile::tempdir().unwrap();
    // an absurd coercivity constant makes the bound claim near-certain
    // extinction long before any path dies
    let cfg = small_noisy(dir.path(), "gamma = 100.0");
    let args = ["ensemble", "--config", s(&cfg), "--out", s(dir.path())];
    assert_eq!(code(&extlab(&args)), 0);
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(code(&extlab(&strict)), 4);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = extlab(&["bound", "--config", s(&path), "--out", s(dir.path()), "--points", "3"]);
        assert_eq!(code(&out), 0, "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}
