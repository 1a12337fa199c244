//! Recipe runner, report and figure export on small synthetic panels.

use std::path::Path;

use serde_json::Value;

use flowkernel::pipeline::{self, emit_figure_data, PipelineError, RunConfig, Status};
use flowkernel::synth::SynthConfig;

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::synthetic(SynthConfig { n_stocks: 12, n_days: 400, seed: 3, ..SynthConfig::default() });
    cfg.deconv.n_stocks = 8;
    cfg.deconv.n_iter = 2;
    cfg.hawkes.n_boot = 20;
    cfg.epr.shuffles = 20;
    cfg.epr.boot = 20;
    cfg
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn kernel_figure_has_one_row_per_lag() {
    let cfg = small_config();
    let data = pipeline::prepare(&cfg, Path::new(".")).unwrap();
    let report = pipeline::run_recipes(&cfg, &data, &["global_kernels"], false);
    assert!(report.all_ok(), "{:?}", report.recipes);
    let rows = csv_rows(&emit_figure_data(&report.to_json(), "kernels").unwrap());
    assert_eq!(rows.len(), 3 * 61);
    // cumulative column is the running sum of y within each series
    for series in rows.chunks(61) {
        let mut acc = 0.0;
        for r in series {
            acc += r[2].parse::<f64>().unwrap();
            let cum: f64 = r[3].parse().unwrap();
            assert!((cum - acc).abs() <= 1e-12 * acc.abs().max(1e-12));
        }
    }
}

#[test]
fn regime_figure_has_one_row_per_day() {
    let cfg = small_config();
    let data = pipeline::prepare(&cfg, Path::new(".")).unwrap();
    let report = pipeline::run_recipes(&cfg, &data, &["regime_breakdown"], false);
    assert!(report.all_ok(), "{:?}", report.recipes["regime_breakdown"].error);
    let rows = csv_rows(&emit_figure_data(&report.to_json(), "intensity_regimes").unwrap());
    assert_eq!(rows.len(), data.summary.n_days);
    assert!(rows.iter().all(|r| r[3] == pipeline::HIGH || r[3] == pipeline::NORMAL));
}

#[test]
fn missing_block_names_the_recipe() {
    let cfg = small_config();
    let data = pipeline::prepare(&cfg, Path::new(".")).unwrap();
    let json = pipeline::run_recipes(&cfg, &data, &["memory"], false).to_json();
    for (fig, recipe) in [("kernels", "global_kernels"), ("epr_bars", "epr"), ("conditional_kernels", "regime_breakdown")] {
        match emit_figure_data(&json, fig) {
            Err(PipelineError::MissingBlock { recipe: r, .. }) => assert_eq!(r, recipe),
            other => panic!("{fig}: expected a missing block, got {other:?}"),
        }
    }
    assert!(emit_figure_data(&json, "memory_profile").is_ok());
    assert!(emit_figure_data(&json, "pie_chart").is_err());
}

#[test]
fn failing_recipe_leaves_others_untouched() {
    let mut cfg = small_config();
    let data = pipeline::prepare(&cfg, Path::new(".")).unwrap();
    let alone = pipeline::run_recipes(&cfg, &data, &["epr"], false);
    // no day clears this threshold, so there is nothing to fit
    cfg.hawkes.threshold_sigma = 1e6;
    let mixed = pipeline::run_recipes(&cfg, &data, &["hawkes_criticality", "epr"], false);
    assert_eq!(mixed.recipes["hawkes_criticality"].status, Status::Failed);
    assert!(mixed.recipes["hawkes_criticality"].error.is_some());
    assert_eq!(mixed.recipes["epr"], alone.recipes["epr"]);
    assert!(!mixed.all_ok());
}

#[test]
fn outputs_are_written_and_reproducible() {
    let cfg = small_config();
    let data = pipeline::prepare(&cfg, Path::new(".")).unwrap();
    let names = ["global_kernels", "memory"];
    let dir = std::env::temp_dir().join(format!("flowkernel-pipeline-{}", std::process::id()));
    let mut reports = Vec::new();
    for i in 0..2 {
        let report = pipeline::run_recipes(&cfg, &data, &names, false);
        let out = dir.join(i.to_string());
        let written = pipeline::write_outputs(&report, &data, &out).unwrap();
        assert!(written.contains(&out.join("truth.json")));
        assert!(out.join("global_kernels/result.json").exists());
        assert!(out.join("figures/kernels.csv").exists());
        assert!(out.join("figures/memory_profile.csv").exists());
        assert!(!out.join("figures/epr_bars.csv").exists());
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    let _ = std::fs::remove_dir_all(&dir);
    assert_eq!(reports[0], reports[1]);
    let json: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(json["provenance"]["seed"], 0);
    assert_eq!(json["provenance"]["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(json["provenance"]["recipes"], serde_json::json!(names));
}

#[test]
fn seed_changes_the_config_hash() {
    let a = small_config();
    let mut b = small_config();
    b.seed = 1;
    let data = pipeline::prepare(&a, Path::new(".")).unwrap();
    let ra = pipeline::run_recipes(&a, &data, &[], false);
    let rb = pipeline::run_recipes(&b, &data, &[], false);
    assert_ne!(ra.provenance.config_hash, rb.provenance.config_hash);
}

#[test]
fn config_json_round_trip() {
    let cfg = small_config();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    let bad = text.replacen("\"seed\"", "\"sede\"", 1);
    assert!(RunConfig::from_json(&bad).is_err());
}
