use std::path::{Path, PathBuf};
use std::process::Command;

use supermarket_cli::{EXIT_CONFIG, EXIT_STABILITY};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_supermarket"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(sub: &str, config: &Path, out: &Path) -> i32 {
    bin()
        .args([
            sub,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .code()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn fixed_point_mm_matches_doubly_exponential_tail() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fp.csv");
    assert_eq!(
        run("fixed-point", &configs().join("fixed_point_mm.json"), &out),
        0
    );
    let rows = rows(&out);
    assert_eq!(rows.len(), 11);
    for r in &rows {
        let k: i32 = r[0].parse().unwrap();
        let v: f64 = r[1].parse().unwrap();
        let expect = 0.5f64.powi((1 << k) - 1);
        assert!(
            (v - expect).abs() <= 1e-12 * expect,
            "k={k}: {v} vs {expect}"
        );
        assert_eq!(r[2], "mm_reduction");
    }
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("fp.csv.json")).unwrap()).unwrap();
    assert_eq!(sidecar["experiment"], "fixed_point");
    let oracle: f64 = (1..8).map(|i| 0.5f64.powi((1 << i) - 2)).sum();
    assert!((sidecar["summary"]["expected_sojourn"].as_f64().unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn erlang_ratio_column_is_power_of_m() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("erlang.csv");
    assert_eq!(run("erlang", &configs().join("erlang.json"), &out), 0);
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(configs().join("erlang.json")).unwrap())
            .unwrap();
    let m = cfg["params"]["m"].as_f64().unwrap_or(2.0);
    let d = cfg["params"]["d"].as_i64().unwrap_or(2) as i32;
    for r in rows(&out).iter().take(4) {
        let k: i32 = r[0].parse().unwrap();
        let ratio: f64 = r[3].parse().unwrap();
        let expect = m.powi(d.pow(k as u32 - 1) - 1);
        assert!(
            (ratio - expect).abs() <= 1e-9 * expect,
            "k={k}: {ratio} vs {expect}"
        );
    }
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\"experiment\": \"ode\", ").unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(run("ode", &cfg, &out), EXIT_CONFIG);
    assert!(!out.exists());
    assert!(!dir.path().join("x.csv.json").exists());
}

#[test]
fn subcommand_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(
        run("ode", &configs().join("erlang.json"), &out),
        EXIT_CONFIG
    );
    assert!(!out.exists());
}

#[test]
fn unstable_model_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("unstable.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": "fixed_point", "model": {"map": {"C": [[-2.0]], "D": [[2.0]]}, "ph": {"alpha": [1.0], "T": [[-1.0]]}, "d": 2}}"#,
    )
    .unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(run("fixed-point", &cfg, &out), EXIT_STABILITY);
    assert!(!out.exists());
}

#[test]
fn rerun_overwrites_with_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ode.csv");
    let cfg = configs().join("ode_mm.json");
    assert_eq!(run("ode", &cfg, &out), 0);
    let first = std::fs::read(&out).unwrap();
    assert_eq!(run("ode", &cfg, &out), 0);
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("simulate_mm.json");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, seed) in [(&a, "7"), (&b, "8")] {
        let status = bin()
            .args([
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                seed,
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.csv.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 7);
}
