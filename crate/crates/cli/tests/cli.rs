//! End-to-end runs of the `flowkernel` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_flowkernel"));
    c.env_remove("FLOWKERNEL_SEED");
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("flowkernel-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

/// Synthetic panel plus a run config pointing at it (relative path).
fn setup(dir: &Path, extra: Value) -> PathBuf {
    fs::write(dir.join("synth.json"), json!({ "n_stocks": 8, "n_days": 300, "seed": 4 }).to_string()).unwrap();
    let out = run(bin()
        .arg("synth")
        .arg("--config")
        .arg(dir.join("synth.json"))
        .arg("--out")
        .arg(dir.join("panel.csv"))
        .arg("--truth")
        .arg(dir.join("truth.json")));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut cfg = json!({
        "input": { "panel": { "path": "panel.csv" } },
        "seed": 11,
        "deconv": { "n_stocks": 6, "n_iter": 2 },
        "hawkes": { "n_boot": 20 },
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("run.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn synth_then_recipe_then_figure() {
    let dir = scratch("flow");
    setup(&dir, json!({}));
    let truth: Value = serde_json::from_slice(&fs::read(dir.join("truth.json")).unwrap()).unwrap();
    assert!(truth["kernels"]["foreign"].is_array());

    let out = run(bin().args(["global_kernels", "--config"]).arg(dir.join("run.json")).arg("--out").arg(dir.join("out")));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.join("out"));
    assert_eq!(r["provenance"]["seed"], 11);
    assert_eq!(r["recipes"]["global_kernels"]["status"], "ok");
    assert_eq!(r["data"]["input_sha256"].as_str().unwrap().len(), 64);

    let fig = run(bin().args(["figure", "--figure", "kernels", "--report"]).arg(dir.join("out/report.json")));
    assert!(fig.status.success());
    assert_eq!(String::from_utf8(fig.stdout).unwrap().lines().count(), 1 + 3 * 61);

    let missing = run(bin().args(["figure", "--figure", "epr_bars", "--report"]).arg(dir.join("out/report.json")));
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("`epr`"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn reruns_are_identical_and_seed_env_overrides() {
    let dir = scratch("det");
    let cfg = setup(&dir, json!({}));
    let go = |out: &str, seed: Option<&str>| {
        let mut c = bin();
        c.args(["memory", "--config"]).arg(&cfg).arg("--out").arg(dir.join(out));
        if let Some(s) = seed {
            c.env("FLOWKERNEL_SEED", s);
        }
        assert!(run(&mut c).status.success());
        fs::read(dir.join(out).join("report.json")).unwrap()
    };
    let (a, b, c) = (go("a", None), go("b", None), go("c", Some("7")));
    assert_eq!(a, b);
    let rc: Value = serde_json::from_slice(&c).unwrap();
    assert_eq!(rc["provenance"]["seed"], 7);

    let bad = run(bin().args(["memory", "--config"]).arg(&cfg).env("FLOWKERNEL_SEED", "minus one"));
    assert_eq!(bad.status.code(), Some(1));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn default_output_dir_is_next_to_the_config() {
    let dir = scratch("outdir");
    let cfg = setup(&dir, json!({ "output_dir": "results" }));
    assert!(run(bin().args(["memory", "--config"]).arg(&cfg)).status.success());
    assert!(dir.join("results/report.json").exists());
    assert!(dir.join("results/memory/result.json").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn unknown_recipe_is_a_usage_error() {
    let out = run(bin().args(["global_kernel", "--config", "run.json"]));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("global_kernels") && err.contains("normalization_robustness"));
}

#[test]
fn failed_recipe_sets_exit_code() {
    let dir = scratch("fail");
    let cfg = setup(&dir, json!({ "hawkes": { "threshold_sigma": 1e6 } }));
    let out = run(bin().args(["all", "--config"]).arg(&cfg).arg("--out").arg(dir.join("out")));
    assert_eq!(out.status.code(), Some(1));
    let r = report(&dir.join("out"));
    assert_eq!(r["recipes"]["hawkes_criticality"]["status"], "failed");
    assert_eq!(r["recipes"]["epr"]["status"], "ok");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn invalid_config_is_rejected() {
    let dir = scratch("badcfg");
    let cfg = setup(&dir, json!({ "deconv": { "lags": 60, "lamda": 5.0 } }));
    let out = run(bin().args(["global_kernels", "--config"]).arg(&cfg));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn simulate_then_fit() {
    let dir = scratch("hawkes");
    let ev = dir.join("events.csv");
    let sim = run(bin().args(["hawkes", "simulate", "--mu", "0.5", "--alpha", "0.5", "--beta", "1.0", "--days", "4000", "--seed", "3", "--out"]).arg(&ev));
    assert!(sim.status.success());
    let fit = run(bin().args(["hawkes", "fit", "--unconstrained", "--span", "4000", "--events"]).arg(&ev));
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
    let v: Value = serde_json::from_slice(&fit.stdout).unwrap();
    let n = v["fit"]["branching_ratio"].as_f64().unwrap();
    assert!((n - 0.5).abs() < 0.1, "n = {n}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn epr_tool_and_recipe_share_a_name() {
    let dir = scratch("epr");
    let cfg = setup(&dir, json!({ "epr": { "shuffles": 10, "boot": 10 } }));
    let tool = run(bin().args(["epr", "--shuffles", "10", "--boot", "10", "--input"]).arg(dir.join("panel.csv")));
    assert!(tool.status.success(), "{}", String::from_utf8_lossy(&tool.stderr));
    let v: Value = serde_json::from_slice(&tool.stdout).unwrap();
    assert!(v.is_object());
    let recipe = run(bin().args(["epr", "--config"]).arg(&cfg).arg("--out").arg(dir.join("out")));
    assert!(recipe.status.success());
    assert_eq!(report(&dir.join("out"))["recipes"]["epr"]["status"], "ok");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn lp_tool_runs_without_config() {
    let dir = scratch("lp");
    let rows: Vec<String> = (0..120).map(|i| format!("{},{}", ((i * 37) % 11) as f64 - 5.0, ((i * 53) % 7) as f64)).collect();
    fs::write(dir.join("t.csv"), format!("y,x\n{}\n", rows.join("\n"))).unwrap();
    let out = run(bin().args(["lp", "--y", "y", "--x", "x", "--horizons", "3", "--input"]).arg(dir.join("t.csv")));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(serde_json::from_slice::<Value>(&out.stdout).is_ok());
    let _ = fs::remove_dir_all(&dir);
}
