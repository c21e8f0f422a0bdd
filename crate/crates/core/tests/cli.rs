mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_birthday-census"));
    c.env_remove("BIRTHDAY_CENSUS_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().unwrap()
}

#[test]
fn simulate_classic_day_count() {
    let v = json(&[
        "simulate",
        "--uniform",
        "366",
        "--batch",
        "23",
        "--exact",
        "--trials",
        "20000",
    ]);
    let exact = v["exact"].as_f64().unwrap();
    assert!((exact - common::product_formula(366, 23)).abs() < 1e-12);
    let point = v["estimate"]["point"].as_f64().unwrap();
    assert!((point - exact).abs() < 4.0 * (exact * (1.0 - exact) / 20000.0).sqrt());
}

#[test]
fn simulate_trivial_cases() {
    assert_eq!(
        json(&["simulate", "--uniform", "5", "--batch", "6", "--exact"])["exact"],
        1.0
    );
    assert_eq!(
        json(&[
            "simulate",
            "--head-uniform",
            "1.0,5,0",
            "--batch",
            "6",
            "--exact"
        ])["exact"],
        1.0
    );
}

#[test]
fn simulate_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    std::fs::write(&path, "# two atoms\n0.25\n0.75\n").unwrap();
    let v = json(&[
        "simulate",
        "--dist",
        path.to_str().unwrap(),
        "--batch",
        "2",
        "--exact",
    ]);
    assert!((v["exact"].as_f64().unwrap() - 0.625).abs() < 1e-15);
    std::fs::write(&path, "0.25\nabc\n").unwrap();
    let out = run(&["simulate", "--dist", path.to_str().unwrap(), "--batch", "2"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn exit_codes() {
    assert_eq!(
        code(&["bounds", "--batch", "1", "--gamma", "0.5", "--rho", "1"]),
        2
    );
    assert_eq!(code(&["simulate", "--batch", "3"]), 2);
    assert_eq!(code(&["nonsense"]), 2);
    assert_eq!(
        code(&[
            "simulate",
            "--head-uniform",
            "0.5,100000,1000000",
            "--batch",
            "50000",
            "--exact",
            "--trials",
            "1"
        ]),
        3
    );
    assert_eq!(
        code(&[
            "pairs",
            "--manifest",
            "/nonexistent.json",
            "--batch-file",
            "/x"
        ]),
        4
    );
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn bounds_examples() {
    let v = json(&["bounds", "--batch", "400", "--gamma", "0.5", "--rho", "1"]);
    let beta = v["beta_star"].as_f64().unwrap();
    assert!((beta / 115_548.0 - 1.0).abs() < 0.01);
    assert_eq!(v["support_bound"], v["beta_star"]);
    let v = json(&["bounds", "--batch", "400", "--gamma", "0.5", "--rho", "0.9"]);
    assert!(v["support_bound"].is_null());
    assert_eq!(v["denominator_positive"], false);
    let v = json(&["bounds", "--batch", "10", "--gamma", "0", "--rho", "1"]);
    assert!(v["beta_star"].is_null());
}

#[test]
fn census_output_is_reproducible_across_threads() {
    let args = [
        "census",
        "--uniform",
        "10000",
        "--trials",
        "2000",
        "--seed",
        "5",
    ];
    let one = bin().args(["--threads", "1"]).args(args).output().unwrap();
    let four = bin().args(["--threads", "4"]).args(args).output().unwrap();
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
    let v: Value = serde_json::from_slice(&one.stdout).unwrap();
    let s = v["outcome"]["s_star"].as_u64().unwrap();
    assert_eq!(v["outcome"]["support_estimate"].as_u64().unwrap(), s * s);
    assert!((5_000..=30_000).contains(&(s * s)), "{s}");
}

#[test]
fn config_file_and_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[bounds]\nrho = 0.9\n").unwrap();
    let out = bin()
        .env("BIRTHDAY_CENSUS_CONFIG", &cfg)
        .args(["bounds", "--batch", "400", "--gamma", "0.5"])
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rho"], 0.9);
    let out = bin()
        .env("BIRTHDAY_CENSUS_CONFIG", &cfg)
        .args(["bounds", "--batch", "400", "--gamma", "0.5", "--rho", "1"])
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rho"], 1.0);
}

fn write_ids(dir: &Path, ids: &[&str]) -> String {
    let p = dir.join("batch.txt");
    std::fs::write(&p, ids.join("\n")).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn pairs_and_neighbors_on_images() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_gray_pool(dir.path(), 12, 8, 1, &[(0, 11)], 2);
    let m = manifest.to_str().unwrap();
    let batch = write_ids(dir.path(), &["g00000", "g00003", "g00011", "g00007"]);
    let v = json(&["pairs", "--manifest", m, "--batch-file", &batch, "--k", "2"]);
    let list = v.as_array().unwrap();
    assert_eq!(list.len(), 2);
    assert_eq!(list[0]["id_a"], "g00000");
    assert_eq!(list[0]["id_b"], "g00011");
    assert_eq!(list[0]["rank"], 1);

    let v = json(&[
        "neighbors",
        "--manifest",
        m,
        "--training",
        m,
        "--items",
        "g00003",
    ]);
    assert_eq!(v[0]["neighbor"], "g00003");
    assert_eq!(v[0]["distance"], 0.0);

    let missing = write_ids(dir.path(), &["g00000", "nope"]);
    assert_eq!(
        code(&["pairs", "--manifest", m, "--batch-file", &missing]),
        4
    );
}

#[test]
fn human_census_writes_pending_session() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_gray_pool(dir.path(), 30, 6, 2, &[(1, 2)], 1);
    let session = dir.path().join("s.json");
    let v = json(&[
        "census",
        "--manifest",
        manifest.to_str().unwrap(),
        "--mode",
        "human",
        "--trials",
        "4",
        "--session",
        session.to_str().unwrap(),
    ]);
    assert_eq!(v["status"], "awaiting_review");
    assert_eq!(v["pending_trials"], 4);
    let s: Value = serde_json::from_slice(&std::fs::read(&session).unwrap()).unwrap();
    assert_eq!(s["current_probe"], 2);
    assert!(s["verdict_log"]["path"]
        .as_str()
        .unwrap()
        .ends_with("s.json.verdicts.jsonl"));

    // a pool in auto mode needs a threshold
    assert_eq!(
        code(&["census", "--manifest", manifest.to_str().unwrap()]),
        2
    );
    let v = json(&[
        "census",
        "--manifest",
        manifest.to_str().unwrap(),
        "--threshold",
        "0.5",
        "--trials",
        "50",
    ]);
    assert!(v["outcome"]["status"].is_string());
}
