use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robreg"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("robreg runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn cfg(name: &str) -> String {
    configs().join(name).display().to_string()
}

#[test]
fn check_classifies_example_configs() {
    let pass = run(&["check", "--config", &cfg("canonical.conf")]);
    assert_eq!(code(&pass), 0, "{}", stderr(&pass));

    let moment = run(&["check", "--config", &cfg("moment-fail.conf"), "--json"]);
    assert_eq!(code(&moment), 3);
    let v: Value = serde_json::from_slice(&moment.stdout).unwrap();
    assert_eq!(v["moment"]["analytic_finite"], false);
    assert_eq!(v["condition"]["holds"], true);

    let cond = run(&["check", "--config", &cfg("condition-fail.conf")]);
    assert_eq!(code(&cond), 3);
    let text = String::from_utf8_lossy(&cond.stdout);
    assert!(text.contains("outside the theorem"), "{text}");
}

#[test]
fn sweep_refuses_failed_check_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let refused = run(&["sweep", "--config", &cfg("moment-fail.conf"), "--out", &out]);
    assert_eq!(code(&refused), 3);
    assert!(stderr(&refused).contains("--force"));
    assert!(!dir.path().join("sweep.json").exists());
}

#[test]
fn forced_sweep_outside_theorem_is_watermarked() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = run(&[
        "sweep",
        "--force",
        "--config",
        &cfg("condition-fail.conf"),
        "--omega-ladder",
        "1e2,1e4",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("OUTSIDE THEOREM"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(v["report"]["outside_theorem"], true);
    assert_eq!(v["criterion"]["assessed"], false);
}

#[test]
fn grid_sweep_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = run(&["sweep", "--omega-ladder", "1e2,1e6,1e12", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("omega,sup_dist,sup_dist_se,ratio_dist,log_marginal_ratio,ln_envelope")
    );
    assert_eq!(lines.count(), 3);
    let control = std::fs::read_to_string(dir.path().join("control.csv")).unwrap();
    assert_eq!(control.lines().count(), 4);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(v["criterion"]["held"], true);
    assert_eq!(v["report"]["method"], "grid");
}

#[test]
fn unreachable_tolerance_fails_criterion() {
    // Stopping at ω = 10 leaves the distance far above the tolerance.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = run(&["sweep", "--omega-ladder", "2,5", "--out", &out]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("criterion FAILED"));
}

fn mcmc_sweep(seed: u64) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = run(&[
        "sweep",
        "--method",
        "mcmc",
        "--seed",
        &seed.to_string(),
        "--omega-ladder",
        "1e2,1e4,1e8,1e12",
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    serde_json::from_str(&std::fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap()
}

#[test]
fn mcmc_seeds_agree_within_monte_carlo_error() {
    let a = mcmc_sweep(11);
    let b = mcmc_sweep(12);
    let f = |v: &Value, k: &str| -> Vec<f64> {
        v["report"][k].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
    };
    let (da, sa, db, sb) = (
        f(&a, "pointwise_sup_dist"),
        f(&a, "pointwise_sup_se"),
        f(&b, "pointwise_sup_dist"),
        f(&b, "pointwise_sup_se"),
    );
    for i in 0..da.len() {
        let tol = 4.0 * (sa[i].powi(2) + sb[i].powi(2)).sqrt();
        assert!(sa[i] > 0.0 && sb[i] > 0.0);
        assert!((da[i] - db[i]).abs() < tol, "omega #{i}: {} vs {} (tol {tol})", da[i], db[i]);
    }
}

#[test]
fn mcmc_sweep_is_seed_deterministic() {
    let a = mcmc_sweep(5);
    let b = mcmc_sweep(5);
    assert_eq!(a["report"], b["report"]);
}

#[test]
fn missing_csv_column_is_named() {
    let o = run(&["check", "--set", &format!("problem={}", cfg("data/missing-b.csv"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing column `b`"), "{}", stderr(&o));
}

#[test]
fn csv_problem_matches_builtin() {
    let o = run(&["check", "--json", "--set", &format!("problem={}", cfg("data/canonical.csv"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["condition"]["clean"], 4);
    assert_eq!(v["condition"]["outliers"], 1);
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "# comment\nproblem = canonical\nrho = lots\n").unwrap();
    let o = run(&["check", "--config", &path.display().to_string()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    std::fs::write(&path, "colour = blue\n").unwrap();
    let o = run(&["check", "--config", &path.display().to_string()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown key `colour`"));

    let o = run(&["check", "--config", "/nonexistent/robreg.conf"]);
    assert_eq!(code(&o), 2);
    let o = run(&["check", "--set", "rho"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn subset_budget_exhaustion_exits_four() {
    // C(1500, 2) pairs exceed the general-position subset budget.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    let mut text = String::from("x1,a,b\n");
    for i in 0..1500 {
        text.push_str(&format!("1,{},{}\n", i as f64 * 1e-3, if i == 0 { 1 } else { 0 }));
    }
    std::fs::write(&path, text).unwrap();
    let o = run(&["check", "--set", &format!("problem={}", path.display())]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn duplicated_instance_rows_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = run(&[
        "lemmas",
        "--no-builtin",
        "--instance",
        &cfg("data/duplicate-rows.json"),
        "--out",
        &out,
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("general position"), "{}", stderr(&o));
}

#[test]
fn lemmas_certify_suite_byte_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["lemmas", "--budget", "20000", "--out", &d.path().display().to_string()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let ca = std::fs::read(a.path().join("certificates.json")).unwrap();
    let cb = std::fs::read(b.path().join("certificates.json")).unwrap();
    assert_eq!(ca, cb);
    let v: Value = serde_json::from_slice(&ca).unwrap();
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 6);
    for e in entries {
        assert_eq!(e["covering"]["status"], "certified", "{e}");
        assert_eq!(e["product"]["status"], "certified", "{e}");
        assert_eq!(e["covering"]["budget"], 20000);
    }
}

#[test]
fn threads_flag_is_accepted() {
    let o = run(&["--threads", "1", "check"]);
    assert_eq!(code(&o), 0);
    let o = bin().env("ROBREG_THREADS", "1").arg("check").output().unwrap();
    assert_eq!(code(&o), 0);
}
