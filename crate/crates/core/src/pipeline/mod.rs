//! Config-driven recipe runner producing a JSON report.

mod config;
mod context;
pub mod figures;
pub mod io;
mod recipes;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    DataParams, DeconvParams, DiagnosticParams, EprParams, HawkesParams, InputSpec, MemoryParams, RunConfig, CONVENTIONS,
};
pub use context::{build_signal, Context, DataSummary, Prepared, SurgeState, HIGH, NORMAL};
pub use figures::{emit_figure_data, FIGURES};
pub use recipes::{default_splits, regime_flips, RECIPES};

use crate::deconv::DeconvError;
use crate::econometrics::EconError;
use crate::epr::EprError;
use crate::hawkes::HawkesError;
use crate::memory::MemoryError;
use crate::panel::{self, PanelError, Schema};
use crate::synth::{self, SynthError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown recipe `{0}`; valid: all, {list}", list = RECIPES.join(", "))]
    UnknownRecipe(String),
    #[error("report has no `{block}` block; run the `{recipe}` recipe first")]
    MissingBlock { block: String, recipe: String },
    #[error("upstream step failed: {0}")]
    Upstream(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Deconv(#[from] DeconvError),
    #[error(transparent)]
    Hawkes(#[from] HawkesError),
    #[error(transparent)]
    Epr(#[from] EprError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Econ(#[from] EconError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Expands `all` and checks names.
pub fn resolve_recipes(names: &[String]) -> Result<Vec<&'static str>, PipelineError> {
    let mut out: Vec<&'static str> = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(RECIPES);
        } else {
            let r = RECIPES.iter().find(|r| **r == n.as_str()).ok_or_else(|| PipelineError::UnknownRecipe(n.clone()))?;
            out.push(r);
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    out.retain(|r| seen.insert(*r));
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads or generates the panel and applies the data filters. Relative panel
/// paths resolve against `base_dir`.
pub fn prepare(cfg: &RunConfig, base_dir: &Path) -> Result<Prepared, PipelineError> {
    let (raw, load, input_sha256, truth) = match &cfg.input {
        InputSpec::Panel { path, schema } => {
            let path: PathBuf = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let bytes = fs::read(&path).map_err(|e| PipelineError::Config(format!("cannot read panel {}: {e}", path.display())))?;
            let schema = schema.clone().unwrap_or_else(Schema::default);
            let (p, report) = panel::load_panel(bytes.as_slice(), &schema)?;
            (p, Some(report), Some(sha256_hex(&bytes)), None)
        }
        InputSpec::Synth(s) => {
            let (p, t) = synth::generate(s)?;
            (p, None, None, Some(t))
        }
    };
    let (filtered, filter) = panel::apply_filters(&raw, cfg.data.price_floor, cfg.data.winsor_tail)?;
    let dates = filtered.dates();
    let summary = DataSummary {
        n_rows: filtered.len(),
        n_stocks: filtered.stock_ids().len(),
        n_days: dates.len(),
        first_date: dates.first().copied(),
        last_date: dates.last().copied(),
        load,
        filter,
        input_sha256,
    };
    Ok(Prepared { panel: filtered, dates, summary, truth })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub input_sha256: Option<String>,
    pub recipes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecipeOutcome {
    pub status: Status,
    pub error: Option<String>,
    pub result: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub provenance: Provenance,
    pub config: Value,
    pub data: DataSummary,
    pub recipes: BTreeMap<String, RecipeOutcome>,
}

impl Report {
    pub fn all_ok(&self) -> bool {
        self.recipes.values().all(|r| r.status == Status::Ok)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serialises")
    }
}

fn run_one(name: &str, ctx: &mut Context) -> RecipeOutcome {
    let res = panic::catch_unwind(AssertUnwindSafe(|| recipes::run(name, ctx)));
    match res {
        Ok(Ok(v)) => RecipeOutcome { status: Status::Ok, error: None, result: Some(v) },
        Ok(Err(e)) => RecipeOutcome { status: Status::Failed, error: Some(e.to_string()), result: None },
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            RecipeOutcome { status: Status::Failed, error: Some(format!("panicked: {msg}")), result: None }
        }
    }
}

/// Runs recipes in order (or one thread each when `parallel`). A failing
/// recipe is recorded and the rest still run; output does not depend on
/// `parallel`.
pub fn run_recipes(cfg: &RunConfig, data: &Prepared, names: &[&str], parallel: bool) -> Report {
    let mut outcomes = BTreeMap::new();
    if parallel {
        let results: Vec<(String, RecipeOutcome)> = std::thread::scope(|s| {
            let handles: Vec<_> = names
                .iter()
                .map(|n| {
                    s.spawn(move || {
                        let mut ctx = Context::new(cfg, data);
                        (n.to_string(), run_one(n, &mut ctx))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("recipe thread")).collect()
        });
        outcomes.extend(results);
    } else {
        let mut ctx = Context::new(cfg, data);
        for n in names {
            outcomes.insert(n.to_string(), run_one(n, &mut ctx));
        }
    }
    Report {
        provenance: Provenance {
            config_hash: sha256_hex(cfg.canonical_json().as_bytes()),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_sha256: data.summary.input_sha256.clone(),
            recipes: names.iter().map(|s| s.to_string()).collect(),
        },
        config: cfg.echo(),
        data: data.summary.clone(),
        recipes: outcomes,
    }
}

/// `report.json`, one `<recipe>/result.json` per recipe, `truth.json` for
/// synthetic input and every figure whose prerequisite block is present.
pub fn write_outputs(report: &Report, data: &Prepared, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: String| -> Result<(), PipelineError> {
        if let Some(p) = path.parent() {
            fs::create_dir_all(p)?;
        }
        fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    let json = report.to_json();
    put(dir.join("report.json"), serde_json::to_string_pretty(&json)?)?;
    for (name, outcome) in &report.recipes {
        put(dir.join(name).join("result.json"), serde_json::to_string_pretty(outcome)?)?;
    }
    if let Some(t) = &data.truth {
        put(dir.join("truth.json"), serde_json::to_string_pretty(t)?)?;
    }
    for fig in FIGURES {
        if let Ok(csv) = emit_figure_data(&json, fig) {
            put(dir.join("figures").join(format!("{fig}.csv")), csv)?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_expands_all_and_dedups() {
        let r = resolve_recipes(&["epr".into(), "all".into()]).unwrap();
        assert_eq!(r.len(), RECIPES.len());
        assert_eq!(r[0], "epr");
        assert!(matches!(resolve_recipes(&["nope".into()]), Err(PipelineError::UnknownRecipe(_))));
    }

    #[test]
    fn unknown_recipe_message_lists_names() {
        let msg = PipelineError::UnknownRecipe("x".into()).to_string();
        assert!(msg.contains("global_kernels") && msg.contains("all"));
    }
}
