use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use igahd::modes::{read_mode_csv, Regime};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_igahd"));
    c.env_remove("IGAHD_OUT");
    c
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn quadratic(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "quad.json",
        r#"{
            "problem": {"kind": "quadratic", "diagonal": [1.0, 1000.0]},
            "algorithm": "igahd",
            "schedule": {"alpha": 3.1, "eta": 0.5},
            "max_iter": 400,
            "fit": {"k_min": 20}
        }"#,
    )
}

fn regression(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "reg.json",
        r#"{
            "problem": {"kind": "regression", "dim": 3, "n_samples": 500},
            "algorithm": "sigahd",
            "schedule": {"alpha": 3.1, "eta": 0.9, "step_exponent": 0.6, "batch": {"max": 2000}},
            "seeds": [1, 2],
            "max_iter": 150,
            "fit": {"k_min": 10}
        }"#,
    )
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output {
        status,
        stdout,
        stderr,
    } = cmd.output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn run_writes_files_and_nothing_to_stdout() {
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let out = tmp.path().join("out");
    let (code, stdout, stderr) = run(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "7", "--out"])
        .arg(&out));
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.is_empty());
    assert!(stderr.contains("igahd"));
    let csv = fs::read_to_string(out.join("seed_7.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 401);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["seeds"][0]["seed"], 7);

    let again = tmp.path().join("again");
    let (code, _, _) = run(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "7", "--out"])
        .arg(&again));
    assert_eq!(code, 0);
    assert_eq!(
        fs::read(out.join("seed_7.csv")).unwrap(),
        fs::read(again.join("seed_7.csv")).unwrap()
    );
}

#[test]
fn missing_config_is_a_config_error() {
    let (code, stdout, stderr) = run(bin().args(["run", "--config", "/nonexistent/cfg.json"]));
    assert_eq!(code, 2);
    assert!(stdout.is_empty());
    assert!(stderr.contains("/nonexistent/cfg.json"), "{stderr}");
}

#[test]
fn alpha_below_three_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = regression(tmp.path());
    let (code, _, stderr) = run(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--set", "schedule.alpha=2.9", "--out"])
        .arg(tmp.path()));
    assert_eq!(code, 2);
    assert!(stderr.contains("alpha"), "{stderr}");
}

#[test]
fn unknown_override_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let (code, _, stderr) = run(bin()
        .args(["validate-config", "--config"])
        .arg(&cfg)
        .args(["--set", "schedule.alhpa=3"]));
    assert_eq!(code, 2);
    assert!(stderr.contains("schedule.alhpa"));
}

#[test]
fn validate_config_agrees_with_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let cases: &[&[&str]] = &[
        &[],
        &["schedule.alpha=2.5"],
        &["schedule.eta=1.5"],
        &["schedule.s0=0.01"],
        &["schedule.s0=0.0005"],
        &["max_iter=0"],
        &["algorithm=\"sigahd\""],
        &["algorithm=\"shbf\"", "schedule.hbf_damping=40"],
        &["x0=[1.0]"],
        &["max_iter=30", "schedule.step_exponent=0.5"],
    ];
    for set in cases {
        let mut v = bin();
        v.args(["validate-config", "--config"]).arg(&cfg);
        let mut r = bin();
        r.args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(tmp.path().join("o"));
        for s in *set {
            v.args(["--set", s]);
            r.args(["--set", s]);
        }
        let (vc, _, ve) = run(&mut v);
        let (rc, _, re) = run(&mut r);
        assert!(vc == 0 || vc == 2, "{set:?}: {ve}");
        assert_eq!(
            vc == 0,
            rc == 0 || rc == 3,
            "{set:?}: validate {vc} ({ve}), run {rc} ({re})"
        );
    }
}

#[test]
fn check_lemma_passes_on_default_quadratic() {
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let (code, stdout, stderr) = run(bin()
        .args(["check-lemma", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path()));
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.is_empty());
    assert!(
        stderr.contains("violations after burn-in 10: 0"),
        "{stderr}"
    );
    let lemma = fs::read_to_string(tmp.path().join("lemma.csv")).unwrap();
    assert_eq!(lemma.lines().count(), 401);
}

#[test]
fn check_lemma_skips_without_damping() {
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let (code, _, stderr) = run(bin()
        .args(["check-lemma", "--config"])
        .arg(&cfg)
        .args(["--set", "schedule.eta=0", "--out"])
        .arg(tmp.path()));
    assert_eq!(code, 0);
    assert!(stderr.contains("check skipped (β = 0)"), "{stderr}");
}

#[test]
fn check_lemma_accounts_for_huge_errors() {
    // The right-hand side carries ‖M‖² terms, so even ‖M‖ = 10³ errors
    // leave the inequality intact.
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let (code, _, stderr) = run(bin()
        .args(["check-lemma", "--config"])
        .arg(&cfg)
        .args([
            "--set",
            r#"errors={"scale": 1000.0, "exponent": 0.0}"#,
            "--out",
        ])
        .arg(tmp.path()));
    assert_eq!(code, 0, "{stderr}");
    assert!(
        stderr.contains("violations after burn-in 10: 0"),
        "{stderr}"
    );
}

#[test]
fn check_lemma_needs_exact_gradients() {
    let tmp = TempDir::new().unwrap();
    let cfg = regression(tmp.path());
    let (code, _, _) = run(bin()
        .args(["check-lemma", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path()));
    assert_eq!(code, 2);
}

#[test]
fn all_seeds_diverging_exits_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let (code, _, stderr) = run(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args([
            "--set",
            r#"errors={"scale": 1e308, "exponent": -3.0}"#,
            "--set",
            "seeds=[0,1]",
            "--out",
        ])
        .arg(tmp.path()));
    assert_eq!(code, 3, "{stderr}");
}

#[test]
fn modes_without_damping_are_underdamped() {
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let (code, stdout, stderr) = run(bin()
        .args(["modes", "--config"])
        .arg(&cfg)
        .args(["--set", "schedule.eta=0", "--out"])
        .arg(tmp.path()));
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.is_empty());
    let rows = read_mode_csv(fs::File::open(tmp.path().join("modes.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.regime == Regime::Underdamped));
    assert_eq!((rows[0].lambda, rows[1].lambda), (1.0, 1000.0));
}

#[test]
fn strong_mode_damping_overdamps_the_stiff_mode() {
    // β²λ² > 4λ for λ = 1000 once β > 2/√1000 ≈ 0.063.
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let (code, _, stderr) = run(bin()
        .args(["modes", "--config"])
        .arg(&cfg)
        .args(["--beta", "0.1", "--out"])
        .arg(tmp.path()));
    assert_eq!(code, 0, "{stderr}");
    let rows = read_mode_csv(fs::File::open(tmp.path().join("modes.csv")).unwrap()).unwrap();
    assert_eq!(rows[1].regime, Regime::Overdamped);
    assert!((rows[1].predicted_rate - 2.0 / 0.1).abs() < 1e-12);
    assert_eq!(rows[0].regime, Regime::Underdamped);
}

#[test]
fn modes_need_a_quadratic() {
    let tmp = TempDir::new().unwrap();
    let cfg = regression(tmp.path());
    let (code, _, _) = run(bin()
        .args(["modes", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path()));
    assert_eq!(code, 2);
}

#[test]
fn compare_ranks_three_algorithms() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "easy.json",
        r#"{
            "problem": {"kind": "quadratic", "diagonal": [1.0, 2.0, 4.0]},
            "algorithm": "igahd",
            "max_iter": 300,
            "fit": {"k_min": 20}
        }"#,
    );
    let out = tmp.path().join("cmp");
    let (code, stdout, stderr) = run(bin()
        .args(["compare", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.is_empty());
    let report = read_json(&out.join("compare.json"));
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    assert!(entries
        .iter()
        .all(|e| e["diverged"] == 0 && e["final_gap_median"].as_f64().unwrap() < 1e-3));
    assert_eq!(report["ranking"].as_array().unwrap().len(), 3);
    for name in ["igahd", "sfista", "shbf"] {
        assert!(out.join(name).join("seed_0.csv").exists());
    }
}

#[test]
fn paired_compare_is_reproducible_and_differs_from_unpaired() {
    let tmp = TempDir::new().unwrap();
    let cfg = regression(tmp.path());
    let go = |dir: &str, extra: &[&str]| {
        let out = tmp.path().join(dir);
        let (code, _, stderr) = run(bin()
            .args(["compare", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(extra));
        assert_eq!(code, 0, "{stderr}");
        out
    };
    let a = go("a", &["--jobs", "1"]);
    let b = go("b", &["--jobs", "2"]);
    let c = go("c", &["--unpaired"]);
    assert_eq!(
        fs::read(a.join("compare.json")).unwrap(),
        fs::read(b.join("compare.json")).unwrap()
    );
    assert_eq!(read_json(&c.join("compare.json"))["paired"], false);
    assert_ne!(
        fs::read(a.join("sfista/seed_1.csv")).unwrap(),
        fs::read(c.join("sfista/seed_1.csv")).unwrap()
    );
}

#[test]
fn out_flag_beats_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = quadratic(tmp.path());
    let env_dir = tmp.path().join("from_env");
    let flag_dir = tmp.path().join("from_flag");
    let (code, _, _) = run(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("IGAHD_OUT", &env_dir));
    assert_eq!(code, 0);
    assert!(env_dir.join("summary.json").exists());
    let (code, _, _) = run(bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&flag_dir)
        .env("IGAHD_OUT", tmp.path().join("unused")));
    assert_eq!(code, 0);
    assert!(flag_dir.join("summary.json").exists());
    assert!(!tmp.path().join("unused").exists());
}
