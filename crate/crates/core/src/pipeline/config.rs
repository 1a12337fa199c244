use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::deconv::{Aggregation, Regularizer, ResponseColumn, DEFAULT_LAGS, DEFAULT_LAMBDA};
use crate::econometrics::Split;
use crate::epr::SymbolScheme;
use crate::hawkes::{BootstrapScheme, DEFAULT_N_MAX, DEFAULT_RESTARTS, DEFAULT_SWEEP, DEFAULT_THRESHOLD_SIGMA};
use crate::panel::{Investor, Scheme, Schema};
use crate::synth::SynthConfig;

use super::PipelineError;

/// Where the panel comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Panel {
        path: PathBuf,
        #[serde(default)]
        schema: Option<Schema>,
    },
    /// Generate the panel in memory.
    Synth(SynthConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataParams {
    pub price_floor: f64,
    pub winsor_tail: f64,
    pub vol_window: usize,
    pub vol_min_obs: usize,
}

impl Default for DataParams {
    fn default() -> Self {
        Self { price_floor: 1000.0, winsor_tail: 0.005, vol_window: 20, vol_min_obs: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvParams {
    pub lags: usize,
    pub lambda: f64,
    pub n_stocks: usize,
    pub n_iter: usize,
    pub pre_standardize: bool,
    pub response: ResponseColumn,
    pub aggregation: Aggregation,
    pub lasso_lambda: f64,
    pub ridge_lambda: f64,
    pub enet_l1: f64,
    pub enet_l2: f64,
    /// Investor whose kernels are split by size quintile.
    pub quintile_investor: Investor,
    pub n_quintiles: usize,
}

impl Default for DeconvParams {
    fn default() -> Self {
        Self {
            lags: DEFAULT_LAGS,
            lambda: DEFAULT_LAMBDA,
            n_stocks: 100,
            n_iter: 5,
            pre_standardize: true,
            response: ResponseColumn::Raw,
            aggregation: Aggregation::ByStockMean,
            lasso_lambda: 0.1,
            ridge_lambda: 10.0,
            enet_l1: 0.05,
            enet_l2: 2.5,
            quintile_investor: Investor::Institutional,
            n_quintiles: 5,
        }
    }
}

impl DeconvParams {
    /// Tikhonov, LASSO, ridge and elastic net at the configured strengths.
    pub fn regularizers(&self) -> [Regularizer; 4] {
        [
            Regularizer::Tikhonov { lambda: self.lambda },
            Regularizer::Lasso { lambda: self.lasso_lambda },
            Regularizer::Ridge { lambda: self.ridge_lambda },
            Regularizer::ElasticNet { l1: self.enet_l1, l2: self.enet_l2 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HawkesParams {
    /// Investor whose market-wide aggregate defines surge events.
    pub investor: Investor,
    pub threshold_sigma: f64,
    pub constrained: bool,
    pub n_max: f64,
    pub restarts: usize,
    pub percentile: f64,
    pub n_boot: usize,
    pub bootstrap: BootstrapScheme,
    pub sweep: Vec<f64>,
    /// Trading days per segment of the yearly trend.
    pub year_length: usize,
    /// Investor whose herding/normal impact ratio is tracked.
    pub impact_investor: Investor,
}

impl Default for HawkesParams {
    fn default() -> Self {
        Self {
            investor: Investor::Individual,
            threshold_sigma: DEFAULT_THRESHOLD_SIGMA,
            constrained: true,
            n_max: DEFAULT_N_MAX,
            restarts: DEFAULT_RESTARTS,
            percentile: 90.0,
            n_boot: 1000,
            bootstrap: BootstrapScheme::Parametric,
            sweep: DEFAULT_SWEEP.to_vec(),
            year_length: 252,
            impact_investor: Investor::Institutional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EprParams {
    pub scheme: SymbolScheme,
    pub shuffles: usize,
    pub boot: usize,
    pub block: usize,
}

impl Default for EprParams {
    fn default() -> Self {
        Self { scheme: SymbolScheme::TernaryQuantile, shuffles: 200, boot: 500, block: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryParams {
    pub horizon: usize,
    pub lift: f64,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self { horizon: 20, lift: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticParams {
    /// Local projections run for horizons `0..lp_horizons`.
    pub lp_horizons: usize,
    pub granger_max_lag: usize,
    pub warning_window: usize,
    pub roc_leads: Vec<usize>,
    /// Empty means three expanding splits cut at 60/80/90% of the dates.
    pub tscv_splits: Vec<Split>,
    pub hurst_min_window: usize,
}

impl Default for DiagnosticParams {
    fn default() -> Self {
        Self {
            lp_horizons: 60,
            granger_max_lag: 10,
            warning_window: 20,
            roc_leads: vec![5, 10, 20],
            tscv_splits: Vec::new(),
            hurst_min_window: 10,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("flowkernel_out")
}

fn default_investors() -> Vec<Investor> {
    Investor::ALL.to_vec()
}

fn default_scheme() -> Scheme {
    Scheme::Mc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_investors")]
    pub investors: Vec<Investor>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub data: DataParams,
    #[serde(default)]
    pub deconv: DeconvParams,
    #[serde(default)]
    pub hawkes: HawkesParams,
    #[serde(default)]
    pub epr: EprParams,
    #[serde(default)]
    pub memory: MemoryParams,
    #[serde(default)]
    pub diagnostics: DiagnosticParams,
}

/// Parameters whose defaults are our choice rather than a published value.
pub const CONVENTIONS: &[&str] = &[
    "seed",
    "deconv.pre_standardize",
    "deconv.response",
    "deconv.aggregation",
    "deconv.enet_l1",
    "deconv.enet_l2",
    "hawkes.n_max",
    "hawkes.restarts",
    "hawkes.bootstrap",
    "hawkes.year_length",
    "diagnostics.granger_max_lag",
    "diagnostics.tscv_splits",
    "diagnostics.hurst_min_window",
];

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A small synthetic run, handy for smoke tests.
    pub fn synthetic(synth: SynthConfig) -> Self {
        Self {
            input: InputSpec::Synth(synth),
            output_dir: default_output_dir(),
            seed: 0,
            investors: default_investors(),
            scheme: Scheme::Mc,
            data: DataParams::default(),
            deconv: DeconvParams::default(),
            hawkes: HawkesParams::default(),
            epr: EprParams::default(),
            memory: MemoryParams::default(),
            diagnostics: DiagnosticParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        let d = &self.data;
        if !(0.0..0.5).contains(&d.winsor_tail) {
            return bad("data.winsor_tail must lie in [0, 0.5)");
        }
        if !(d.price_floor >= 0.0) {
            return bad("data.price_floor must be >= 0");
        }
        if !(d.vol_window >= d.vol_min_obs && d.vol_min_obs >= 2) {
            return bad("data.vol_window >= data.vol_min_obs >= 2 required");
        }
        if self.investors.is_empty() {
            return bad("investors must not be empty");
        }
        let k = &self.deconv;
        if k.n_stocks == 0 || k.n_iter == 0 {
            return bad("deconv.n_stocks and deconv.n_iter must be positive");
        }
        let penalties = [k.lambda, k.lasso_lambda, k.ridge_lambda, k.enet_l1, k.enet_l2];
        if penalties.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("deconv penalties must be finite and >= 0");
        }
        if k.n_quintiles < 2 {
            return bad("deconv.n_quintiles must be >= 2");
        }
        let h = &self.hawkes;
        if !(h.threshold_sigma.is_finite() && h.threshold_sigma >= 0.0) {
            return bad("hawkes.threshold_sigma must be >= 0");
        }
        if !(h.n_max > 0.0 && h.n_max < 1.0) {
            return bad("hawkes.n_max must lie in (0, 1)");
        }
        if !(0.0..=100.0).contains(&h.percentile) {
            return bad("hawkes.percentile must lie in [0, 100]");
        }
        if h.n_boot == 0 || h.year_length == 0 {
            return bad("hawkes.n_boot and hawkes.year_length must be positive");
        }
        if let BootstrapScheme::BlockGaps { block: 0 } = h.bootstrap {
            return bad("hawkes.bootstrap block must be positive");
        }
        if h.sweep.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("hawkes.sweep thresholds must be >= 0");
        }
        let e = &self.epr;
        if e.shuffles == 0 || e.boot == 0 || e.block == 0 {
            return bad("epr.shuffles, epr.boot and epr.block must be positive");
        }
        if self.memory.horizon == 0 || !(self.memory.lift > 0.0) {
            return bad("memory.horizon and memory.lift must be positive");
        }
        let g = &self.diagnostics;
        if g.lp_horizons == 0 || g.granger_max_lag == 0 || g.warning_window < 2 || g.hurst_min_window < 4 {
            return bad("diagnostics: lp_horizons, granger_max_lag >= 1, warning_window >= 2, hurst_min_window >= 4");
        }
        if let InputSpec::Synth(s) = &self.input {
            s.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical serialisation used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// The config as JSON, with every convention parameter wrapped as
    /// `{"value": …, "convention": true}`.
    pub fn echo(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serialises");
        for path in CONVENTIONS {
            let mut node = &mut v;
            let parts: Vec<&str> = path.split('.').collect();
            for p in &parts[..parts.len() - 1] {
                node = &mut node[*p];
            }
            let last = parts[parts.len() - 1];
            if let Some(obj) = node.as_object_mut() {
                if let Some(leaf) = obj.remove(last) {
                    obj.insert(last.to_string(), serde_json::json!({ "value": leaf, "convention": true }));
                }
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_json(r#"{"input": {"panel": {"path": "p.csv"}}}"#).unwrap();
        assert_eq!(cfg.deconv.lambda, 5.0);
        assert_eq!(cfg.deconv.lags, 60);
        assert_eq!(cfg.hawkes.threshold_sigma, 1.5);
        assert_eq!(cfg.hawkes.percentile, 90.0);
        assert_eq!((cfg.epr.shuffles, cfg.epr.boot, cfg.epr.block), (200, 500, 20));
        assert_eq!(cfg.investors.len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"input": {"panel": {"path": "p.csv"}}, "lambda": 5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"input": {"panel": {"path": "p.csv"}}, "deconv": {"lamda": 5}}"#).is_err());
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(RunConfig::from_json(r#"{"input": {"panel": {"path": "p"}}, "hawkes": {"n_max": 1.0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"input": {"panel": {"path": "p"}}, "data": {"winsor_tail": 0.5}}"#).is_err());
    }

    #[test]
    fn echo_marks_conventions() {
        let cfg = RunConfig::from_json(r#"{"input": {"panel": {"path": "p.csv"}}}"#).unwrap();
        let e = cfg.echo();
        assert_eq!(e["hawkes"]["n_max"]["convention"], true);
        assert_eq!(e["hawkes"]["n_max"]["value"], 0.9999);
        assert_eq!(e["deconv"]["lambda"], 5.0);
        assert_eq!(e["seed"]["convention"], true);
    }
}
