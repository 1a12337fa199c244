//! Prepared panel plus lazily built shared series.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::deconv::{DeconvSettings, Regularizer, SignalColumn};
use crate::hawkes::{self, EventExtraction, FitOptions, HawkesFit, Regime, RegimeSeries};
use crate::panel::{self, FilterReport, FlowPanel, Investor, LoadReport, NormalizedSignal, Scheme};
use crate::stats;
use crate::synth::GroundTruth;

use super::config::{DataParams, RunConfig};
use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSummary {
    pub n_rows: usize,
    pub n_stocks: usize,
    pub n_days: usize,
    pub first_date: Option<i64>,
    pub last_date: Option<i64>,
    pub load: Option<LoadReport>,
    pub filter: FilterReport,
    /// SHA-256 of the input file, when read from disk.
    pub input_sha256: Option<String>,
}

/// Filtered panel shared by every recipe.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub panel: FlowPanel,
    pub dates: Vec<i64>,
    pub summary: DataSummary,
    pub truth: Option<GroundTruth>,
}

/// Hawkes surge state for the configured aggregate.
#[derive(Debug, Clone, Serialize)]
pub struct SurgeState {
    pub extraction: EventExtraction,
    pub fit: HawkesFit,
    pub regimes: RegimeSeries,
}

impl SurgeState {
    pub fn is_high(&self, day: usize) -> bool {
        self.regimes.labels.get(day) == Some(&Regime::HighHerding)
    }
}

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub data: &'a Prepared,
    day_index: BTreeMap<i64, usize>,
    signals: BTreeMap<(Investor, Scheme), NormalizedSignal>,
    aggregates: BTreeMap<(Investor, Scheme), Vec<f64>>,
    surge: Option<Result<SurgeState, String>>,
}

/// Normalised, volatility-adjusted and cross-sectionally standardised.
pub fn build_signal(panel: &FlowPanel, investor: Investor, scheme: Scheme, data: &DataParams) -> Result<NormalizedSignal, PipelineError> {
    let s = panel::normalize(panel, investor, scheme);
    let s = panel::rolling_vol_adjust(&s, data.vol_window, data.vol_min_obs)?;
    Ok(panel::cross_sectional_standardize(&s))
}

pub const HIGH: &str = "high_herding";
pub const NORMAL: &str = "normal";

impl<'a> Context<'a> {
    pub fn new(cfg: &'a RunConfig, data: &'a Prepared) -> Self {
        let day_index = data.dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        Self { cfg, data, day_index, signals: BTreeMap::new(), aggregates: BTreeMap::new(), surge: None }
    }

    pub fn n_days(&self) -> usize {
        self.data.dates.len()
    }

    pub fn day_of(&self, date: i64) -> Option<usize> {
        self.day_index.get(&date).copied()
    }

    pub fn signal(&mut self, investor: Investor, scheme: Scheme) -> Result<&NormalizedSignal, PipelineError> {
        if !self.signals.contains_key(&(investor, scheme)) {
            let s = build_signal(&self.data.panel, investor, scheme, &self.cfg.data)?;
            self.signals.insert((investor, scheme), s);
        }
        Ok(&self.signals[&(investor, scheme)])
    }

    /// Daily cross-sectional mean of each stock's time-series z-scored signal.
    /// Days with no usable stock get 0.
    pub fn aggregate(&mut self, investor: Investor, scheme: Scheme) -> Result<Vec<f64>, PipelineError> {
        if let Some(a) = self.aggregates.get(&(investor, scheme)) {
            return Ok(a.clone());
        }
        let n = self.n_days();
        let day_index = self.day_index.clone();
        let sig = self.signal(investor, scheme)?;
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (_, rows) in sig.stock_slices() {
            let vals: Vec<f64> = rows.iter().map(|r| r.signal).collect();
            let m = stats::mean(&vals);
            let sd = stats::std_dev(&vals, 0);
            if !(sd > 0.0) {
                continue;
            }
            for r in rows {
                let d = day_index[&r.date];
                sum[d] += (r.signal - m) / sd;
                count[d] += 1;
            }
        }
        let agg: Vec<f64> = sum.iter().zip(&count).map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 }).collect();
        self.aggregates.insert((investor, scheme), agg.clone());
        Ok(agg)
    }

    /// Equal-weighted mean return per day.
    pub fn market_return(&self) -> Vec<f64> {
        self.daily_mean(|r| Some(r.close_return))
    }

    pub fn daily_mean<F: Fn(&panel::PanelRow) -> Option<f64>>(&self, f: F) -> Vec<f64> {
        let n = self.n_days();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for r in self.data.panel.rows() {
            if let Some(v) = f(r) {
                let d = self.day_index[&r.date];
                sum[d] += v;
                count[d] += 1;
            }
        }
        sum.iter().zip(&count).map(|(s, c)| if *c > 0 { s / *c as f64 } else { f64::NAN }).collect()
    }

    /// Cross-sectional population SD of returns per day.
    pub fn return_dispersion(&self) -> Vec<f64> {
        let mut by_day: Vec<Vec<f64>> = vec![Vec::new(); self.n_days()];
        for r in self.data.panel.rows() {
            by_day[self.day_index[&r.date]].push(r.close_return);
        }
        by_day.iter().map(|v| if v.len() > 1 { stats::std_dev(v, 0) } else { f64::NAN }).collect()
    }

    /// Amihud-style illiquidity, mean of `|R| / traded value` per day, used
    /// as the spread proxy.
    pub fn spread_proxy(&self) -> Vec<f64> {
        self.daily_mean(|r| (r.total_volume > 0.0).then(|| r.close_return.abs() / r.total_volume))
    }

    /// Mean of the market-cap signal times the same-day return per day.
    pub fn efficacy(&mut self, investor: Investor) -> Result<Vec<f64>, PipelineError> {
        let n = self.n_days();
        let day_index = self.day_index.clone();
        let sig = self.signal(investor, Scheme::Mc)?;
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for r in &sig.rows {
            let d = day_index[&r.date];
            sum[d] += r.s_mc * r.ret;
            count[d] += 1;
        }
        Ok(sum.iter().zip(&count).map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 }).collect())
    }

    pub fn fit_options(&self, constrained: bool) -> FitOptions {
        let h = &self.cfg.hawkes;
        FitOptions {
            constrained,
            n_max: h.n_max,
            restarts: h.restarts,
            seed: stats::derive_seed(self.cfg.seed, 0x4A, constrained as u64),
            ..FitOptions::default()
        }
    }

    /// Surge events, fit and regime labels at the configured threshold.
    pub fn surge(&mut self) -> Result<SurgeState, PipelineError> {
        if self.surge.is_none() {
            let k = self.cfg.hawkes.threshold_sigma;
            let r = self.surge_at(k).map_err(|e| e.to_string());
            self.surge = Some(r);
        }
        self.surge.clone().expect("set above").map_err(PipelineError::Upstream)
    }

    pub fn surge_at(&mut self, threshold_sigma: f64) -> Result<SurgeState, PipelineError> {
        let h = &self.cfg.hawkes;
        let (investor, constrained, percentile) = (h.investor, h.constrained, h.percentile);
        let agg = self.aggregate(investor, self.cfg.scheme)?;
        let extraction = hawkes::extract_events(&agg, threshold_sigma)?;
        let fit = hawkes::fit(&extraction.events, &self.fit_options(constrained))?;
        let grid = hawkes::daily_grid(&extraction.events);
        let intensity = hawkes::intensity_series(&extraction.events, &fit, &grid)?;
        let regimes = hawkes::classify_regimes(grid, intensity, percentile)?;
        Ok(SurgeState { extraction, fit, regimes })
    }

    pub fn settings(&self, regularizer: Regularizer, signal: SignalColumn) -> DeconvSettings {
        let k = &self.cfg.deconv;
        DeconvSettings { lags: k.lags, regularizer, pre_standardize: k.pre_standardize, signal, response: k.response }
    }

    pub fn default_settings(&self) -> DeconvSettings {
        self.settings(Regularizer::Tikhonov { lambda: self.cfg.deconv.lambda }, SignalColumn::Raw)
    }
}
