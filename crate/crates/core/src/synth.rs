//! Synthetic flow panels with planted impact kernels.
//!
//! Each investor class carries a driver series `u_t`: an AR(1) base plus
//! surge bursts on the days a market-wide Hawkes process fires, plus an
//! optional feedback term on the previous day's return. Returns are the
//! convolution of the drivers with the planted kernels plus Gaussian noise:
//!
//! ```text
//! R_t = Σ_i Σ_τ ψ_i,τ(t) · u_i,t−τ + ε_t
//! ```
//!
//! The panel stores `net_flow = signal_scale · market_cap · u`, so the
//! market-cap normalised signal equals `signal_scale · u`.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hawkes::{self, Direction, HawkesFit, SimulationOptions};
use crate::panel::{FlowPanel, Investor, PanelRow};
use crate::stats;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Invalid(String),
    #[error("surge process has branching ratio {0:.4} >= 1 and no event cap")]
    Explosive(f64),
    #[error(transparent)]
    Hawkes(#[from] hawkes::HawkesError),
    #[error("generated series diverged (feedback too strong?)")]
    Diverged,
}

/// Returns beyond this many noise SDs count as divergence.
const DIVERGENCE_FACTOR: f64 = 1e6;
const FLOW_STREAM: u64 = 0x5F10;
const NOISE_STREAM: u64 = 0x5E05;
const STOCK_STREAM: u64 = 0x5C0C;
const SURGE_STREAM: u64 = 0x5A6E;
const BURN_IN: usize = 100;

/// Planted kernel, indexed by lag `0..=lags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `scale · 0.6^τ`.
    Permanent { scale: f64, lags: usize },
    /// `ψ_0 = scale`, then a damped alternating tail that cancels it exactly.
    Transient { scale: f64, lags: usize },
    /// `ψ_0 = scale`, then a geometric negative tail summing to `−1.5·scale`.
    Reverting { scale: f64, lags: usize },
    Custom { coefficients: Vec<f64> },
}

impl KernelSpec {
    pub fn coefficients(&self) -> Result<Vec<f64>, SynthError> {
        let positive = |scale: f64| {
            if scale > 0.0 && scale.is_finite() {
                Ok(())
            } else {
                Err(SynthError::Invalid(format!("kernel scale must be positive, got {scale}")))
            }
        };
        let with_tail = |lags: usize| {
            if lags == 0 {
                Err(SynthError::Invalid("transient and reverting kernels need lags >= 1".into()))
            } else {
                Ok(())
            }
        };
        match *self {
            KernelSpec::Permanent { scale, lags } => {
                positive(scale)?;
                Ok((0..=lags).map(|t| scale * 0.6f64.powi(t as i32)).collect())
            }
            KernelSpec::Transient { scale, lags } => {
                positive(scale)?;
                with_tail(lags)?;
                let shape: Vec<f64> = (0..lags).map(|k| (-0.5f64).powi(k as i32)).collect();
                let norm: f64 = shape.iter().sum();
                let mut psi = vec![scale];
                psi.extend(shape.iter().map(|w| -scale * w / norm));
                Ok(psi)
            }
            KernelSpec::Reverting { scale, lags } => {
                positive(scale)?;
                with_tail(lags)?;
                let shape: Vec<f64> = (0..lags).map(|k| 0.7f64.powi(k as i32)).collect();
                let norm: f64 = shape.iter().sum();
                let mut psi = vec![scale];
                psi.extend(shape.iter().map(|w| -1.5 * scale * w / norm));
                Ok(psi)
            }
            KernelSpec::Custom { ref coefficients } => {
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(SynthError::Invalid("custom kernel needs finite coefficients".into()));
                }
                Ok(coefficients.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvestorSpec {
    pub kernel: KernelSpec,
    /// Innovation SD of the AR(1) driver.
    #[serde(default = "one")]
    pub flow_sd: f64,
    #[serde(default = "default_phi")]
    pub ar_phi: f64,
    /// Weight on the previous day's standardised return in the driver.
    #[serde(default)]
    pub coupling: f64,
}

fn one() -> f64 {
    1.0
}

fn default_phi() -> f64 {
    0.3
}

/// Market-wide Hawkes surge process. Each event adds
/// `± multiplier · flow_sd` to the target investor's driver in every stock on
/// the event day, with the sign of the event direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeSpec {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    #[serde(default = "default_surge_investor")]
    pub investor: Investor,
    #[serde(default = "half")]
    pub buy_probability: f64,
    /// Required when `alpha / beta >= 1`.
    #[serde(default)]
    pub event_cap: Option<usize>,
}

fn default_multiplier() -> f64 {
    5.0
}

fn default_surge_investor() -> Investor {
    Investor::Individual
}

fn half() -> f64 {
    0.5
}

/// Kernel overrides on days `start_day..end_day` (response day).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpan {
    pub start_day: usize,
    pub end_day: usize,
    pub kernels: BTreeMap<Investor, KernelSpec>,
}

/// Kernel overrides on days when the planted surge intensity exceeds its
/// `percentile` (type-7 quantile, strict).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HerdingSpec {
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    pub kernels: BTreeMap<Investor, KernelSpec>,
}

fn default_percentile() -> f64 {
    90.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_stocks: usize,
    pub n_days: usize,
    pub seed: u64,
    /// Return noise SD.
    pub noise_sd: f64,
    pub investors: BTreeMap<Investor, InvestorSpec>,
    pub surge: Option<SurgeSpec>,
    pub regimes: Vec<RegimeSpan>,
    pub herding: Option<HerdingSpec>,
    /// `s_mc = signal_scale · u`.
    pub signal_scale: f64,
    /// Market caps are log-uniform on this range, fixed per stock.
    pub market_cap_range: (f64, f64),
    /// Mean daily traded value as a fraction of market cap.
    pub turnover: f64,
    pub first_date: i64,
}

fn default_signal_scale() -> f64 {
    1e-3
}

fn default_cap_range() -> (f64, f64) {
    (1e10, 1e13)
}

fn default_turnover() -> f64 {
    0.01
}

impl Default for SynthConfig {
    /// Three investor classes with the three kernel shapes, a subcritical
    /// surge process on individual flow and SNR of order one.
    fn default() -> Self {
        let spec = |kernel| InvestorSpec { kernel, flow_sd: 1.0, ar_phi: 0.3, coupling: 0.0 };
        let investors = BTreeMap::from([
            (Investor::Foreign, spec(KernelSpec::Permanent { scale: 0.004, lags: 60 })),
            (Investor::Institutional, spec(KernelSpec::Transient { scale: 0.003, lags: 60 })),
            (Investor::Individual, spec(KernelSpec::Reverting { scale: 0.002, lags: 60 })),
        ]);
        Self {
            n_stocks: 50,
            n_days: 1000,
            seed: 0,
            noise_sd: 0.01,
            investors,
            surge: Some(SurgeSpec {
                mu: 0.05,
                alpha: 0.5,
                beta: 1.0,
                multiplier: 5.0,
                investor: Investor::Individual,
                buy_probability: 0.5,
                event_cap: None,
            }),
            regimes: Vec::new(),
            herding: None,
            signal_scale: default_signal_scale(),
            market_cap_range: default_cap_range(),
            turnover: default_turnover(),
            first_date: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.n_stocks == 0 || self.n_days == 0 {
            return bad("n_stocks and n_days must be positive".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be >= 0, got {}", self.noise_sd));
        }
        if self.investors.is_empty() {
            return bad("at least one investor spec is required".into());
        }
        for (inv, s) in &self.investors {
            s.kernel.coefficients()?;
            if !(s.flow_sd > 0.0 && s.flow_sd.is_finite()) {
                return bad(format!("{inv}: flow_sd must be positive"));
            }
            if !(s.ar_phi.abs() < 1.0) {
                return bad(format!("{inv}: |ar_phi| must be < 1"));
            }
            if !s.coupling.is_finite() {
                return bad(format!("{inv}: coupling must be finite"));
            }
        }
        if let Some(s) = &self.surge {
            if !(s.mu > 0.0 && s.alpha >= 0.0 && s.beta > 0.0) || !(s.mu.is_finite() && s.alpha.is_finite() && s.beta.is_finite()) {
                return bad("surge needs mu > 0, alpha >= 0, beta > 0".into());
            }
            if !(0.0..=1.0).contains(&s.buy_probability) {
                return bad("surge buy_probability must lie in [0, 1]".into());
            }
            if !self.investors.contains_key(&s.investor) {
                return bad(format!("surge investor {} has no spec", s.investor));
            }
            let n = s.alpha / s.beta;
            if n >= 1.0 && s.event_cap.is_none() {
                return Err(SynthError::Explosive(n));
            }
        }
        for r in &self.regimes {
            if r.start_day >= r.end_day {
                return bad(format!("regime span {}..{} is empty", r.start_day, r.end_day));
            }
            for (inv, k) in &r.kernels {
                k.coefficients()?;
                if !self.investors.contains_key(inv) {
                    return bad(format!("regime kernel for {inv}, which has no spec"));
                }
            }
        }
        if let Some(h) = &self.herding {
            if self.surge.is_none() {
                return bad("herding kernels need a surge process".into());
            }
            if !(0.0..=100.0).contains(&h.percentile) {
                return bad("herding percentile must lie in [0, 100]".into());
            }
            for k in h.kernels.values() {
                k.coefficients()?;
            }
        }
        let (lo, hi) = self.market_cap_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("market_cap_range must satisfy 0 < lo <= hi".into());
        }
        if !(self.signal_scale > 0.0 && self.signal_scale.is_finite()) {
            return bad("signal_scale must be positive".into());
        }
        if !(self.turnover > 0.0 && self.turnover.is_finite()) {
            return bad("turnover must be positive".into());
        }
        Ok(())
    }

    fn max_lags(&self) -> usize {
        let mut all: Vec<&KernelSpec> = self.investors.values().map(|s| &s.kernel).collect();
        all.extend(self.regimes.iter().flat_map(|r| r.kernels.values()));
        all.extend(self.herding.iter().flat_map(|h| h.kernels.values()));
        all.iter().filter_map(|k| k.coefficients().ok()).map(|c| c.len() - 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeTruth {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub branching_ratio: f64,
    /// `μ / (1 − n)` when subcritical.
    pub steady_state_rate: Option<f64>,
    pub n_events: usize,
    pub n_event_days: usize,
    pub event_times: Vec<f64>,
    pub event_directions: Vec<Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockTruth {
    pub stock_id: String,
    pub market_cap: f64,
    pub snr: Snr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snr {
    /// Missing when the noise variance is zero.
    pub ratio: Option<f64>,
    pub infinite: bool,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl Snr {
    fn new(signal_variance: f64, noise_variance: f64) -> Self {
        let infinite = noise_variance == 0.0;
        let ratio = (!infinite).then(|| signal_variance / noise_variance);
        Self { ratio, infinite, signal_variance, noise_variance }
    }
}

/// Sidecar record of everything planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    /// Base kernel per investor, in driver units.
    pub kernels: BTreeMap<Investor, Vec<f64>>,
    /// Base kernel per investor in units of the market-cap signal
    /// (`ψ / signal_scale`).
    pub kernels_mc: BTreeMap<Investor, Vec<f64>>,
    pub regime_kernels: Vec<BTreeMap<Investor, Vec<f64>>>,
    pub herding_kernels: Option<BTreeMap<Investor, Vec<f64>>>,
    /// Day indices (0-based) on which the herding kernels apply.
    pub herding_days: Vec<usize>,
    pub surge: Option<SurgeTruth>,
    pub stocks: Vec<StockTruth>,
    pub pooled_snr: Snr,
}

impl GroundTruth {
    /// Kernel in force for `investor` on day index `day`.
    pub fn kernel_on(&self, investor: Investor, day: usize) -> Option<&[f64]> {
        if let Some(h) = &self.herding_kernels {
            if let Some(k) = h.get(&investor) {
                if self.herding_days.binary_search(&day).is_ok() {
                    return Some(k);
                }
            }
        }
        for (span, kernels) in self.config.regimes.iter().zip(&self.regime_kernels).rev() {
            if (span.start_day..span.end_day).contains(&day) {
                if let Some(k) = kernels.get(&investor) {
                    return Some(k);
                }
            }
        }
        self.kernels.get(&investor).map(Vec::as_slice)
    }

    pub fn date_of(&self, day: usize) -> i64 {
        self.config.first_date + day as i64
    }
}

/// Draws the panel and its ground-truth record.
pub fn generate(config: &SynthConfig) -> Result<(FlowPanel, GroundTruth), SynthError> {
    config.validate()?;
    let kernels: BTreeMap<Investor, Vec<f64>> =
        config.investors.iter().map(|(i, s)| Ok((*i, s.kernel.coefficients()?))).collect::<Result<_, SynthError>>()?;
    let kernels_mc = kernels.iter().map(|(i, k)| (*i, k.iter().map(|c| c / config.signal_scale).collect())).collect();
    let regime_kernels = config
        .regimes
        .iter()
        .map(|r| r.kernels.iter().map(|(i, k)| Ok((*i, k.coefficients()?))).collect::<Result<BTreeMap<_, _>, SynthError>>())
        .collect::<Result<Vec<_>, _>>()?;
    let herding_kernels = config
        .herding
        .as_ref()
        .map(|h| h.kernels.iter().map(|(i, k)| Ok((*i, k.coefficients()?))).collect::<Result<BTreeMap<_, _>, SynthError>>())
        .transpose()?;

    let surge = config.surge.as_ref().map(|s| simulate_surges(s, config)).transpose()?;
    let herding_days = match (&config.herding, &surge) {
        (Some(h), Some((truth, _))) => herding_days(truth, config.n_days, h.percentile)?,
        _ => Vec::new(),
    };

    let mut truth = GroundTruth {
        config: config.clone(),
        kernels,
        kernels_mc,
        regime_kernels,
        herding_kernels,
        herding_days,
        surge: surge.as_ref().map(|(t, _)| t.clone()),
        stocks: Vec::with_capacity(config.n_stocks),
        pooled_snr: Snr::new(0.0, 0.0),
    };
    let bursts = surge.map(|(_, b)| b).unwrap_or_default();

    let width = config.n_stocks.saturating_sub(1).to_string().len().max(4);
    let stocks: Vec<usize> = (0..config.n_stocks).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(config.n_stocks);
    let chunk = config.n_stocks.div_ceil(workers);
    let results: Vec<Result<StockSeries, SynthError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = stocks
            .chunks(chunk)
            .map(|ids| {
                let truth = &truth;
                let bursts = &bursts;
                scope.spawn(move || ids.iter().map(|&s| stock_series(config, truth, bursts, s, width)).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("generator thread panicked")).collect()
    });

    let mut rows = Vec::with_capacity(config.n_stocks * config.n_days);
    let (mut conv_all, mut noise_all) = (Vec::new(), Vec::new());
    for r in results {
        let s = r?;
        truth.stocks.push(StockTruth {
            stock_id: s.stock_id.clone(),
            market_cap: s.market_cap,
            snr: Snr::new(stats::variance(&s.conv, 0), stats::variance(&s.noise, 0)),
        });
        conv_all.extend_from_slice(&s.conv);
        noise_all.extend_from_slice(&s.noise);
        rows.extend(s.rows);
    }
    truth.pooled_snr = Snr::new(stats::variance(&conv_all, 0), stats::variance(&noise_all, 0));
    let panel = FlowPanel::new(rows).map_err(|e| SynthError::Invalid(e.to_string()))?;
    Ok((panel, truth))
}

/// Signed burst size per day, from the market-wide surge process.
fn simulate_surges(s: &SurgeSpec, config: &SynthConfig) -> Result<(SurgeTruth, Vec<f64>), SynthError> {
    let opts = SimulationOptions {
        buy_probability: s.buy_probability,
        event_cap: s.event_cap.unwrap_or(hawkes::DEFAULT_EVENT_CAP),
    };
    let mut rng = stats::task_rng(config.seed, SURGE_STREAM, 0);
    let events = hawkes::simulate_with(s.mu, s.alpha, s.beta, config.n_days as f64, &mut rng, &opts)?;
    let mut bursts = vec![0.0; config.n_days];
    let mut days = BTreeSet::new();
    for (&t, d) in events.times().iter().zip(events.directions()) {
        let day = (t.floor() as usize).min(config.n_days - 1);
        days.insert(day);
        bursts[day] += match d {
            Direction::Buy => s.multiplier,
            Direction::Sell => -s.multiplier,
        };
    }
    let n = s.alpha / s.beta;
    let truth = SurgeTruth {
        mu: s.mu,
        alpha: s.alpha,
        beta: s.beta,
        branching_ratio: n,
        steady_state_rate: hawkes::steady_state_intensity(s.mu, n).ok(),
        n_events: events.len(),
        n_event_days: days.len(),
        event_times: events.times().to_vec(),
        event_directions: events.directions().to_vec(),
    };
    Ok((truth, bursts))
}

fn herding_days(surge: &SurgeTruth, n_days: usize, percentile: f64) -> Result<Vec<usize>, SynthError> {
    let events = hawkes::EventSeries::new(
        surge.event_times.clone(),
        surge.event_directions.clone(),
        0.0,
        n_days as f64,
    )?;
    let fit = HawkesFit::from_params(surge.mu, surge.alpha, surge.beta);
    let grid: Vec<f64> = (0..n_days).map(|d| d as f64).collect();
    let intensity = hawkes::intensity_series(&events, &fit, &grid)?;
    let regimes = hawkes::classify_regimes(grid, intensity, percentile)?;
    Ok(regimes
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == hawkes::Regime::HighHerding)
        .map(|(d, _)| d)
        .collect())
}

struct StockSeries {
    stock_id: String,
    market_cap: f64,
    rows: Vec<PanelRow>,
    conv: Vec<f64>,
    noise: Vec<f64>,
}

fn stock_series(
    config: &SynthConfig,
    truth: &GroundTruth,
    bursts: &[f64],
    stock: usize,
    width: usize,
) -> Result<StockSeries, SynthError> {
    let idx = stock as u64;
    let mut meta_rng = stats::task_rng(config.seed, STOCK_STREAM, idx);
    let mut noise_rng = stats::task_rng(config.seed, NOISE_STREAM, idx);
    let (lo, hi) = config.market_cap_range;
    let market_cap = if hi > lo { (lo.ln() + meta_rng.random::<f64>() * (hi.ln() - lo.ln())).exp() } else { lo };

    let investors: Vec<(Investor, &InvestorSpec)> = config.investors.iter().map(|(i, s)| (*i, s)).collect();
    let mut flow_rngs: Vec<_> =
        investors.iter().map(|(i, _)| stats::task_rng(config.seed, FLOW_STREAM + i.index() as u64, idx)).collect();
    let surge_investor = config.surge.as_ref().map(|s| s.investor);
    let return_scale = if config.noise_sd > 0.0 { config.noise_sd } else { 1.0 };

    let burn = config.max_lags() + BURN_IN;
    let total = burn + config.n_days;
    let mut u = vec![vec![0.0f64; total]; investors.len()];
    let mut ret = vec![0.0f64; total];
    let mut conv = Vec::with_capacity(config.n_days);
    let mut noise = Vec::with_capacity(config.n_days);
    let mut rows = Vec::with_capacity(config.n_days);
    let stock_id = format!("S{stock:0width$}");

    for t in 0..total {
        let day = t.checked_sub(burn);
        for (k, (inv, spec)) in investors.iter().enumerate() {
            let e: f64 = StandardNormal.sample(&mut flow_rngs[k]);
            let prev = if t > 0 { u[k][t - 1] } else { 0.0 };
            let feedback = if t > 0 { spec.coupling * ret[t - 1] / return_scale } else { 0.0 };
            let burst = match day {
                Some(d) if surge_investor == Some(*inv) => bursts[d] * spec.flow_sd,
                _ => 0.0,
            };
            u[k][t] = spec.ar_phi * prev + spec.flow_sd * e + feedback + burst;
        }
        let mut c = 0.0;
        for (k, (inv, _)) in investors.iter().enumerate() {
            let kernel = match day {
                Some(d) => truth.kernel_on(*inv, d).unwrap_or(&[]),
                None => &truth.kernels[inv],
            };
            for (tau, psi) in kernel.iter().enumerate().take(t + 1) {
                c += psi * u[k][t - tau];
            }
        }
        let eps = if config.noise_sd > 0.0 {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            config.noise_sd * z
        } else {
            0.0
        };
        ret[t] = c + eps;
        // an unstable feedback loop grows geometrically long before overflow
        if !(ret[t].abs() <= DIVERGENCE_FACTOR * return_scale) {
            return Err(SynthError::Diverged);
        }
        if let Some(d) = day {
            conv.push(c);
            noise.push(eps);
            let mut net_flow = [0.0; 3];
            let mut gross = 0.0;
            for (k, (inv, _)) in investors.iter().enumerate() {
                let f = config.signal_scale * market_cap * u[k][t];
                net_flow[inv.index()] = f;
                gross += f.abs();
            }
            let jitter: f64 = StandardNormal.sample(&mut meta_rng);
            let total_volume = config.turnover * market_cap * (0.3 * jitter).exp() + gross;
            rows.push(PanelRow {
                date: truth.date_of(d),
                stock_id: stock_id.clone(),
                close_return: ret[t],
                market_cap,
                total_volume,
                net_flow,
                close_price: None,
            });
        }
    }
    Ok(StockSeries { stock_id, market_cap, rows, conv, noise })
}

/// Convolution-to-noise variance ratio recomputed from a panel and its truth
/// record, per stock and pooled. Days before the longest kernel has a full
/// history in the panel are skipped.
pub fn snr(truth: &GroundTruth, panel: &FlowPanel) -> Result<(BTreeMap<String, Snr>, Snr), SynthError> {
    let cfg = &truth.config;
    let start = cfg.max_lags();
    let mut per_stock = BTreeMap::new();
    let (mut conv_all, mut noise_all) = (Vec::new(), Vec::new());
    for (id, rows) in panel.stock_slices() {
        let mut conv = Vec::new();
        let mut noise = Vec::new();
        for (t, row) in rows.iter().enumerate().skip(start) {
            let day = usize::try_from(row.date - cfg.first_date)
                .map_err(|_| SynthError::Invalid(format!("date {} precedes first_date", row.date)))?;
            let mut c = 0.0;
            for inv in cfg.investors.keys() {
                let kernel = truth.kernel_on(*inv, day).unwrap_or(&[]);
                for (tau, psi) in kernel.iter().enumerate() {
                    let r = &rows[t - tau];
                    c += psi * r.flow(*inv) / (cfg.signal_scale * r.market_cap);
                }
            }
            conv.push(c);
            noise.push(row.close_return - c);
        }
        if conv.is_empty() {
            continue;
        }
        per_stock.insert(id.to_string(), Snr::new(stats::variance(&conv, 0), exact_zero(stats::variance(&noise, 0), cfg)));
        conv_all.extend(conv);
        noise_all.extend(noise);
    }
    if conv_all.is_empty() {
        return Err(SynthError::Invalid("panel is shorter than the longest kernel".into()));
    }
    let pooled = Snr::new(stats::variance(&conv_all, 0), exact_zero(stats::variance(&noise_all, 0), cfg));
    Ok((per_stock, pooled))
}

/// Recomputed residuals carry rounding error; a noiseless config is reported
/// as such.
fn exact_zero(v: f64, cfg: &SynthConfig) -> f64 {
    if cfg.noise_sd == 0.0 {
        0.0
    } else {
        v
    }
}
