//! Univariate exponential-kernel Hawkes process for market-wide surge events.
//!
//! Conditional intensity `λ(t) = μ + Σ_{t_i < t} α e^{−β(t − t_i)}`, branching
//! ratio `n = α/β`. Event times are measured in days from the series origin.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::stats;

pub const DEFAULT_THRESHOLD_SIGMA: f64 = 1.5;
pub const DEFAULT_N_MAX: f64 = 0.9999;
pub const DEFAULT_RESTARTS: usize = 8;
pub const DEFAULT_EVENT_CAP: usize = 1_000_000;
pub const MIN_FIT_EVENTS: usize = 5;
pub const MIN_BOOTSTRAP_EVENTS: usize = 10;
pub const DEFAULT_SWEEP: [f64; 6] = [1.0, 1.25, 1.5, 1.75, 2.0, 2.5];

/// Offset added to the j-th of m events sharing a day: `j / m`, so two tied
/// events land at `d` and `d + 0.5`.
const TIE_SPACING: f64 = 1.0;

#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid events: {0}")]
    InvalidEvents(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient events: {have} < {need}")]
    InsufficientEvents { have: usize, need: usize },
    #[error("steady state undefined for branching ratio {0} >= 1")]
    Supercritical(f64),
    #[error("simulation exceeded the event cap of {0}; process looks explosive")]
    Explosive(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Buy,
    Sell,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Buy => "buy",
            Direction::Sell => "sell",
        })
    }
}

impl FromStr for Direction {
    type Err = HawkesError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buy" | "b" | "1" | "+" => Ok(Direction::Buy),
            "sell" | "s" | "-1" | "-" => Ok(Direction::Sell),
            other => Err(HawkesError::InvalidEvents(format!("unknown direction {other:?}"))),
        }
    }
}

/// Strictly increasing event times on the window `[origin, origin + span]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSeries {
    times: Vec<f64>,
    directions: Vec<Direction>,
    origin: f64,
    span: f64,
    threshold_sigma: Option<f64>,
}

impl EventSeries {
    pub fn new(times: Vec<f64>, directions: Vec<Direction>, origin: f64, span: f64) -> Result<Self, HawkesError> {
        if times.len() != directions.len() {
            return Err(HawkesError::InvalidEvents(format!(
                "{} times but {} directions",
                times.len(),
                directions.len()
            )));
        }
        if !(span.is_finite() && span > 0.0 && origin.is_finite()) {
            return Err(HawkesError::InvalidEvents(format!("bad window origin {origin}, span {span}")));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(HawkesError::InvalidEvents(format!("times not strictly increasing at {} -> {}", w[0], w[1])));
            }
        }
        if let (Some(&first), Some(&last)) = (times.first(), times.last()) {
            if !first.is_finite() || first < origin || last > origin + span {
                return Err(HawkesError::InvalidEvents(format!(
                    "events [{first}, {last}] outside window [{origin}, {}]",
                    origin + span
                )));
            }
        }
        Ok(Self { times, directions, origin, span, threshold_sigma: None })
    }

    /// Builds a series from whole-day event stamps. Events sharing a day are
    /// spread over that day at offsets `j/m`. The window runs from `origin`
    /// to `origin + span`.
    pub fn from_daily(days: &[(i64, Direction)], origin: f64, span: f64) -> Result<Self, HawkesError> {
        let mut sorted = days.to_vec();
        sorted.sort_by_key(|(d, _)| *d);
        let mut times = Vec::with_capacity(sorted.len());
        let mut dirs = Vec::with_capacity(sorted.len());
        let mut i = 0;
        while i < sorted.len() {
            let day = sorted[i].0;
            let j_end = sorted[i..].iter().position(|(d, _)| *d != day).map_or(sorted.len(), |k| i + k);
            let m = (j_end - i) as f64;
            for (j, (_, dir)) in sorted[i..j_end].iter().enumerate() {
                times.push(day as f64 + TIE_SPACING * j as f64 / m);
                dirs.push(*dir);
            }
            i = j_end;
        }
        Self::new(times, dirs, origin, span)
    }

    pub fn with_threshold(mut self, sigma: f64) -> Self {
        self.threshold_sigma = Some(sigma);
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn end(&self) -> f64 {
        self.origin + self.span
    }

    pub fn threshold_sigma(&self) -> Option<f64> {
        self.threshold_sigma
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_buy(&self) -> usize {
        self.directions.iter().filter(|d| **d == Direction::Buy).count()
    }

    pub fn n_sell(&self) -> usize {
        self.len() - self.n_buy()
    }

    /// Same events and window moved by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            times: self.times.iter().map(|t| t + shift).collect(),
            directions: self.directions.clone(),
            origin: self.origin + shift,
            span: self.span,
            threshold_sigma: self.threshold_sigma,
        }
    }

    /// Events inside `[start, end)`, re-windowed to that interval.
    pub fn window(&self, start: f64, end: f64) -> Result<Self, HawkesError> {
        let (times, dirs): (Vec<f64>, Vec<Direction>) = self
            .times
            .iter()
            .zip(&self.directions)
            .filter(|(t, _)| **t >= start && **t < end)
            .map(|(t, d)| (*t, *d))
            .unzip();
        let mut s = Self::new(times, dirs, start, end - start)?;
        s.threshold_sigma = self.threshold_sigma;
        Ok(s)
    }

    /// Events relative to the origin, the form the likelihood works in.
    fn relative_times(&self) -> Vec<f64> {
        self.times.iter().map(|t| t - self.origin).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventExtraction {
    pub events: EventSeries,
    pub mean: f64,
    pub std: f64,
    pub warnings: Vec<String>,
}

/// Flags day `i` as a surge when `|x_i − mean| > k·std` (population moments
/// over the whole series). Event time is the day index; the window is
/// `[0, len]`.
pub fn extract_events(aggregate: &[f64], threshold_sigma: f64) -> Result<EventExtraction, HawkesError> {
    if !(threshold_sigma.is_finite() && threshold_sigma >= 0.0) {
        return Err(HawkesError::InvalidParameter(format!("threshold_sigma {threshold_sigma}")));
    }
    if aggregate.is_empty() {
        return Err(HawkesError::InvalidEvents("empty aggregate series".into()));
    }
    if aggregate.iter().any(|x| !x.is_finite()) {
        return Err(HawkesError::InvalidEvents("aggregate series has non-finite values".into()));
    }
    let mut warnings = Vec::new();
    if aggregate.len() < 30 {
        warnings.push(format!("series has {} days; at least 30 recommended", aggregate.len()));
    }
    let mean = stats::mean(aggregate);
    let std = stats::std_dev(aggregate, 0);
    let mut days = Vec::new();
    if std > 0.0 {
        for (i, x) in aggregate.iter().enumerate() {
            if (x - mean).abs() > threshold_sigma * std {
                days.push((i as i64, if *x > mean { Direction::Buy } else { Direction::Sell }));
            }
        }
    } else {
        warnings.push("aggregate series has zero variance; no events".into());
    }
    let events = EventSeries::from_daily(&days, 0.0, aggregate.len() as f64)?.with_threshold(threshold_sigma);
    Ok(EventExtraction { events, mean, std, warnings })
}

fn check_params(mu: f64, alpha: f64, beta: f64) -> Result<(), HawkesError> {
    if !(mu > 0.0 && alpha >= 0.0 && beta > 0.0 && mu.is_finite() && alpha.is_finite() && beta.is_finite()) {
        return Err(HawkesError::InvalidParameter(format!("need mu > 0, alpha >= 0, beta > 0; got ({mu}, {alpha}, {beta})")));
    }
    Ok(())
}

/// Exact log-likelihood on the series window via the O(N) recursion.
pub fn log_likelihood(events: &EventSeries, mu: f64, alpha: f64, beta: f64) -> Result<f64, HawkesError> {
    check_params(mu, alpha, beta)?;
    Ok(loglik_relative(&events.relative_times(), events.span(), mu, alpha, beta))
}

fn loglik_relative(times: &[f64], span: f64, mu: f64, alpha: f64, beta: f64) -> f64 {
    let mut a = 0.0;
    let mut prev = f64::NAN;
    let mut sum_log = 0.0;
    let mut tail = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            a = (-beta * (t - prev)).exp() * (1.0 + a);
        }
        let lam = mu + alpha * a;
        if !(lam > 0.0) {
            return f64::NEG_INFINITY;
        }
        sum_log += lam.ln();
        tail += (-beta * (span - t)).exp_m1();
        prev = t;
    }
    sum_log - mu * span + (alpha / beta) * tail
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesFit {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub branching_ratio: f64,
    pub log_likelihood: f64,
    pub constrained: bool,
    pub converged: bool,
    /// Largest log-parameter distance across the final simplex.
    pub simplex_spread: f64,
    pub n_events: usize,
}

impl HawkesFit {
    pub fn from_params(mu: f64, alpha: f64, beta: f64) -> Self {
        Self {
            mu,
            alpha,
            beta,
            branching_ratio: alpha / beta,
            log_likelihood: f64::NAN,
            constrained: false,
            converged: true,
            simplex_spread: 0.0,
            n_events: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub constrained: bool,
    pub n_max: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_evals: usize,
    /// Simplex size (log-parameter units) at which a search stops.
    pub x_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { constrained: true, n_max: DEFAULT_N_MAX, restarts: DEFAULT_RESTARTS, seed: 0, max_evals: 3000, x_tol: 1e-9 }
    }
}

const FIT_STREAM: u64 = 0x4A1;
const PENALTY_WEIGHT: f64 = 1e4;

/// Maximum-likelihood fit over log-parameters with random restarts followed
/// by a polish from the best point.
pub fn fit(events: &EventSeries, opts: &FitOptions) -> Result<HawkesFit, HawkesError> {
    fit_from(events, opts, None)
}

/// As [`fit`], adding `start = (μ, α, β)` as the first candidate.
pub fn fit_from(events: &EventSeries, opts: &FitOptions, start: Option<(f64, f64, f64)>) -> Result<HawkesFit, HawkesError> {
    let n = events.len();
    if n < MIN_FIT_EVENTS {
        return Err(HawkesError::InsufficientEvents { have: n, need: MIN_FIT_EVENTS });
    }
    if opts.constrained && !(opts.n_max > 0.0 && opts.n_max < 1.0) {
        return Err(HawkesError::InvalidParameter(format!("n_max must lie in (0, 1), got {}", opts.n_max)));
    }
    let times = events.relative_times();
    let span = events.span();
    let ln_nmax = opts.n_max.ln();
    // a kernel decaying slower than the window is indistinguishable from a
    // drifting baseline and lets α, β run off to zero together
    let beta_min = 1.0 / span;
    let objective = |x: &[f64]| -> f64 {
        let (mu, mut alpha, beta) = (x[0].exp(), x[1].exp(), x[2].exp());
        let mut penalty = 0.0;
        if opts.constrained {
            let excess = x[1] - x[2] - ln_nmax;
            if excess > 0.0 {
                alpha = opts.n_max * beta;
                penalty = PENALTY_WEIGHT * excess * excess;
            }
        }
        if !(mu.is_finite() && alpha.is_finite() && beta.is_finite()) || beta < beta_min || mu <= 0.0 {
            return f64::INFINITY;
        }
        -loglik_relative(&times, span, mu, alpha, beta) + penalty
    };

    let rate = n as f64 / span;
    let mut starts: Vec<[f64; 3]> = Vec::with_capacity(opts.restarts + 2);
    if let Some((mu, alpha, beta)) = start {
        if mu > 0.0 && alpha > 0.0 && beta >= beta_min {
            starts.push([mu.ln(), alpha.ln(), beta.ln()]);
        }
    }
    // deterministic moderate start, then random ones
    starts.push(point_from(rate, 0.5, 2.0 * rate, beta_min));
    let mut rng = stats::task_rng(opts.seed, FIT_STREAM, n as u64);
    for _ in 0..opts.restarts {
        let n0 = rng.random_range(0.02..0.95);
        let beta_mult = (rng.random_range(0.1f64.ln()..50f64.ln())).exp();
        starts.push(point_from(rate, n0, beta_mult * rate, beta_min));
    }

    let nm = NelderMeadOptions { max_evals: opts.max_evals, x_tol: opts.x_tol, ..Default::default() };
    let mut best = None::<crate::optim::Minimum>;
    for s in &starts {
        let m = nelder_mead(objective, s, &nm);
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.expect("at least one start");
    let polish = nelder_mead(objective, &best.x, &NelderMeadOptions { initial_step: 0.05, ..nm });
    let fin = if polish.value <= best.value { polish } else { best };

    let (mu, mut alpha, beta) = (fin.x[0].exp(), fin.x[1].exp(), fin.x[2].exp());
    if opts.constrained && alpha > opts.n_max * beta {
        alpha = opts.n_max * beta;
    }
    let ll = loglik_relative(&times, span, mu, alpha, beta);
    Ok(HawkesFit {
        mu,
        alpha,
        beta,
        branching_ratio: alpha / beta,
        log_likelihood: ll,
        constrained: opts.constrained,
        converged: fin.converged && ll.is_finite(),
        simplex_spread: fin.spread,
        n_events: n,
    })
}

fn point_from(rate: f64, n0: f64, beta: f64, beta_min: f64) -> [f64; 3] {
    let beta = beta.max(2.0 * beta_min);
    let mu = (rate * (1.0 - n0)).max(1e-12);
    [mu.ln(), (n0 * beta).ln(), beta.ln()]
}

pub fn branching_ratio(fit: &HawkesFit) -> f64 {
    fit.alpha / fit.beta
}

/// Long-run rate `μ / (1 − n)`.
pub fn steady_state_intensity(mu: f64, n: f64) -> Result<f64, HawkesError> {
    if n >= 1.0 {
        return Err(HawkesError::Supercritical(n));
    }
    Ok(mu / (1.0 - n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub buy_probability: f64,
    pub event_cap: usize,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { buy_probability: 0.5, event_cap: DEFAULT_EVENT_CAP }
    }
}

const SIM_STREAM: u64 = 0x51A;

/// Ogata thinning on `[0, days]`.
pub fn simulate(mu: f64, alpha: f64, beta: f64, days: f64, seed: u64, opts: &SimulationOptions) -> Result<EventSeries, HawkesError> {
    simulate_with(mu, alpha, beta, days, &mut stats::task_rng(seed, SIM_STREAM, 0), opts)
}

pub fn simulate_with<R: Rng + ?Sized>(
    mu: f64,
    alpha: f64,
    beta: f64,
    days: f64,
    rng: &mut R,
    opts: &SimulationOptions,
) -> Result<EventSeries, HawkesError> {
    check_params(mu, alpha, beta)?;
    if !(days > 0.0 && days.is_finite()) {
        return Err(HawkesError::InvalidParameter(format!("days must be positive, got {days}")));
    }
    let unit = Exp::new(1.0).expect("unit rate");
    let mut times = Vec::new();
    let mut dirs = Vec::new();
    let mut t = 0.0;
    let mut excite = 0.0;
    loop {
        let bound = mu + excite;
        let w: f64 = unit.sample(rng) / bound;
        t += w;
        if t > days {
            break;
        }
        excite *= (-beta * w).exp();
        if rng.random::<f64>() * bound <= mu + excite {
            if times.last().is_some_and(|&last| t <= last) {
                continue;
            }
            times.push(t);
            dirs.push(if rng.random::<f64>() < opts.buy_probability { Direction::Buy } else { Direction::Sell });
            excite += alpha;
            if times.len() > opts.event_cap {
                return Err(HawkesError::Explosive(opts.event_cap));
            }
        }
    }
    EventSeries::new(times, dirs, 0.0, days)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    HighHerding,
    Normal,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::HighHerding => "high_herding",
            Regime::Normal => "normal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeSeries {
    pub grid: Vec<f64>,
    pub intensity: Vec<f64>,
    pub labels: Vec<Regime>,
    pub percentile: f64,
    pub threshold: Option<f64>,
    pub warnings: Vec<String>,
}

impl RegimeSeries {
    pub fn n_high(&self) -> usize {
        self.labels.iter().filter(|l| **l == Regime::HighHerding).count()
    }
}

/// `λ(t)` on an increasing grid using only events strictly before each grid
/// point, in one pass over events and grid.
pub fn intensity_series(events: &EventSeries, fit: &HawkesFit, grid: &[f64]) -> Result<Vec<f64>, HawkesError> {
    check_params(fit.mu, fit.alpha, fit.beta)?;
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(HawkesError::InvalidParameter("grid must be non-decreasing".into()));
    }
    let times = events.times();
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    // excitation sum evaluated at `anchor`
    let mut excite = 0.0;
    let mut anchor = f64::NEG_INFINITY;
    for &g in grid {
        while k < times.len() && times[k] < g {
            excite = decay(excite, fit.beta, times[k] - anchor) + fit.alpha;
            anchor = times[k];
            k += 1;
        }
        out.push(fit.mu + decay(excite, fit.beta, g - anchor));
    }
    Ok(out)
}

fn decay(x: f64, beta: f64, dt: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (-beta * dt).exp()
    }
}

/// Whole-day grid `origin, origin + 1, …` covering the window.
pub fn daily_grid(events: &EventSeries) -> Vec<f64> {
    let days = events.span().floor() as usize;
    (0..days).map(|d| events.origin() + d as f64).collect()
}

/// Labels a day high-herding when its intensity exceeds the linearly
/// interpolated `percentile` of all intensities.
pub fn classify_regimes(grid: Vec<f64>, intensity: Vec<f64>, percentile: f64) -> Result<RegimeSeries, HawkesError> {
    if grid.len() != intensity.len() {
        return Err(HawkesError::InvalidParameter("grid and intensity lengths differ".into()));
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(HawkesError::InvalidParameter(format!("percentile {percentile} outside [0, 100]")));
    }
    let mut warnings = Vec::new();
    if intensity.len() < 10 {
        warnings.push(format!("only {} days; at least 10 recommended", intensity.len()));
    }
    if intensity.is_empty() {
        return Ok(RegimeSeries { grid, intensity, labels: vec![], percentile, threshold: None, warnings });
    }
    let threshold = stats::quantile(&intensity, percentile / 100.0);
    let labels: Vec<Regime> = intensity
        .iter()
        .map(|l| if *l > threshold { Regime::HighHerding } else { Regime::Normal })
        .collect();
    if intensity.iter().all(|x| *x == intensity[0]) {
        warnings.push("all intensities equal; every day labelled normal".into());
    }
    Ok(RegimeSeries { grid, intensity, labels, percentile, threshold: Some(threshold), warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BootstrapScheme {
    /// Resample the N inter-event gaps with replacement and rebuild times.
    /// Breaks up clusters, so replicate ratios are biased toward zero.
    Gaps,
    /// Resample runs of `block` consecutive gaps (circularly).
    BlockGaps { block: usize },
    /// Simulate from the point fit over the same window and refit.
    #[default]
    Parametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub seed: u64,
    pub fit: FitOptions,
    pub scheme: BootstrapScheme,
    /// Random restarts per replicate fit; the replicate is always also started
    /// from the point estimate.
    pub replicate_restarts: usize,
    pub replicate_x_tol: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { n_boot: 1000, seed: 0, fit: FitOptions::default(), scheme: BootstrapScheme::Parametric, replicate_restarts: 0, replicate_x_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub point: HawkesFit,
    pub replicates: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub excludes_one: bool,
    pub skewness: f64,
    pub n_failed: usize,
    pub warnings: Vec<String>,
}

const BOOT_STREAM: u64 = 0xB00;

/// Branching-ratio bootstrap with a 2.5–97.5 percentile interval.
pub fn bootstrap_branching(events: &EventSeries, cfg: &BootstrapConfig) -> Result<BootstrapSummary, HawkesError> {
    let n = events.len();
    if n < MIN_BOOTSTRAP_EVENTS {
        return Err(HawkesError::InsufficientEvents { have: n, need: MIN_BOOTSTRAP_EVENTS });
    }
    if cfg.n_boot == 0 {
        return Err(HawkesError::InvalidParameter("n_boot must be positive".into()));
    }
    let point = fit(events, &cfg.fit)?;
    let rel = events.relative_times();
    let mut gaps = Vec::with_capacity(n);
    let mut prev = 0.0;
    for &t in &rel {
        gaps.push(t - prev);
        prev = t;
    }
    let tail = events.span() - rel[n - 1];
    let rep_opts = FitOptions { restarts: cfg.replicate_restarts, x_tol: cfg.replicate_x_tol, ..cfg.fit };

    let mut replicates = Vec::with_capacity(cfg.n_boot);
    let mut n_failed = 0;
    for b in 0..cfg.n_boot {
        let mut rng = stats::task_rng(cfg.seed, BOOT_STREAM, b as u64);
        let sample = match cfg.scheme {
            BootstrapScheme::Gaps => {
                let g: Vec<f64> = (0..n).map(|_| gaps[rng.random_range(0..n)]).collect();
                rebuild(&g, tail, events)
            }
            BootstrapScheme::BlockGaps { block } => {
                let block = block.clamp(1, n);
                let mut g = Vec::with_capacity(n);
                while g.len() < n {
                    let s = rng.random_range(0..n);
                    for k in 0..block {
                        if g.len() == n {
                            break;
                        }
                        g.push(gaps[(s + k) % n]);
                    }
                }
                rebuild(&g, tail, events)
            }
            BootstrapScheme::Parametric => {
                simulate_with(point.mu, point.alpha, point.beta, events.span(), &mut rng, &SimulationOptions::default())
            }
        };
        let refit = sample.and_then(|s| {
            let opts = FitOptions { seed: stats::derive_seed(cfg.seed, BOOT_STREAM, b as u64), ..rep_opts };
            fit_from(&s, &opts, Some((point.mu, point.alpha.max(1e-12), point.beta)))
        });
        match refit {
            Ok(f) if f.branching_ratio.is_finite() => replicates.push(f.branching_ratio),
            _ => n_failed += 1,
        }
    }
    let mut warnings = Vec::new();
    if n_failed * 5 > cfg.n_boot {
        warnings.push(format!("{n_failed} of {} replicate fits failed", cfg.n_boot));
    }
    if replicates.is_empty() {
        return Err(HawkesError::InvalidEvents("every bootstrap replicate failed".into()));
    }
    let mut sorted = replicates.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = stats::mean(&replicates);
    let sd = if replicates.len() > 1 { stats::std_dev(&replicates, 1) } else { 0.0 };
    let ci_low = stats::quantile_sorted(&sorted, 0.025);
    let ci_high = stats::quantile_sorted(&sorted, 0.975);
    let skewness = if sd > 0.0 {
        replicates.iter().map(|x| ((x - mean) / sd).powi(3)).sum::<f64>() / replicates.len() as f64
    } else {
        0.0
    };
    Ok(BootstrapSummary {
        point,
        median: stats::quantile_sorted(&sorted, 0.5),
        replicates,
        mean,
        sd,
        ci_low,
        ci_high,
        excludes_one: ci_high < 1.0 || ci_low > 1.0,
        skewness,
        n_failed,
        warnings,
    })
}

fn rebuild(gaps: &[f64], tail: f64, like: &EventSeries) -> Result<EventSeries, HawkesError> {
    let mut times = Vec::with_capacity(gaps.len());
    let mut t = 0.0;
    for &g in gaps {
        t += g;
        times.push(t);
    }
    let span = t + tail;
    EventSeries::new(times, like.directions().to_vec(), 0.0, span)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub n_events: usize,
    pub n_buy: usize,
    pub n_sell: usize,
    pub fit: Option<HawkesFit>,
    pub branching_ratio: Option<f64>,
    /// Filled by callers that also estimate conditional kernels.
    pub impact_ratio: Option<f64>,
    pub status: String,
}

pub fn threshold_sweep(aggregate: &[f64], thresholds: &[f64], opts: &FitOptions) -> Result<Vec<SweepRow>, HawkesError> {
    thresholds
        .iter()
        .map(|&k| {
            let ex = extract_events(aggregate, k)?;
            let ev = &ex.events;
            let (fit_res, status) = match fit(ev, opts) {
                Ok(f) => (Some(f), if f.converged { "ok".to_string() } else { "not_converged".to_string() }),
                Err(HawkesError::InsufficientEvents { have, .. }) => (None, format!("unfit: {have} events")),
                Err(e) => return Err(e),
            };
            Ok(SweepRow {
                threshold: k,
                n_events: ev.len(),
                n_buy: ev.n_buy(),
                n_sell: ev.n_sell(),
                branching_ratio: fit_res.map(|f| f.branching_ratio),
                fit: fit_res,
                impact_ratio: None,
                status,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSegment {
    pub year: i32,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearFit {
    pub year: i32,
    pub n_events: usize,
    pub fit: Option<HawkesFit>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearlyTrend {
    pub years: Vec<YearFit>,
    /// OLS slope of branching ratio on year; `None` with fewer than two fits.
    pub slope: Option<f64>,
}

pub fn yearly_trend(events: &EventSeries, segments: &[YearSegment], opts: &FitOptions) -> Result<YearlyTrend, HawkesError> {
    let mut years = Vec::with_capacity(segments.len());
    for seg in segments {
        let sub = events.window(seg.start, seg.end)?;
        let (f, status) = match fit(&sub, opts) {
            Ok(f) => (Some(f), "ok".to_string()),
            Err(HawkesError::InsufficientEvents { have, need }) => (None, format!("insufficient: {have} < {need} events")),
            Err(e) => return Err(e),
        };
        years.push(YearFit { year: seg.year, n_events: sub.len(), fit: f, status });
    }
    let pts: Vec<(f64, f64)> = years
        .iter()
        .filter_map(|y| y.fit.map(|f| (y.year as f64, f.branching_ratio)))
        .collect();
    Ok(YearlyTrend { slope: ols_slope(&pts), years })
}

fn ols_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(times: &[f64], span: f64) -> EventSeries {
        EventSeries::new(times.to_vec(), vec![Direction::Sell; times.len()], 0.0, span).unwrap()
    }

    /// Direct double-sum likelihood with the closed-form compensator.
    fn brute_loglik(times: &[f64], span: f64, mu: f64, alpha: f64, beta: f64) -> f64 {
        let mut ll = 0.0;
        for (i, &ti) in times.iter().enumerate() {
            let lam = mu + times[..i].iter().map(|tj| alpha * (-beta * (ti - tj)).exp()).sum::<f64>();
            ll += lam.ln();
        }
        let comp = mu * span + times.iter().map(|t| (alpha / beta) * (1.0 - (-beta * (span - t)).exp())).sum::<f64>();
        ll - comp
    }

    #[test]
    fn extract_hand_example() {
        let ex = extract_events(&[0.0, 0.0, 10.0, 0.0, 0.0], 1.5).unwrap();
        assert_eq!(ex.mean, 2.0);
        assert_eq!(ex.std, 4.0);
        assert_eq!(ex.events.times(), &[2.0]);
        assert_eq!(ex.events.directions(), &[Direction::Buy]);
        assert!(!ex.warnings.is_empty());
    }

    #[test]
    fn constant_series_has_no_events() {
        let ex = extract_events(&[3.0; 40], 1.5).unwrap();
        assert!(ex.events.is_empty());
        assert_eq!(ex.warnings.len(), 1);
    }

    #[test]
    fn poisson_loglik_closed_form() {
        let ll = log_likelihood(&series(&[5.0], 10.0), 0.1, 0.0, 1.0).unwrap();
        assert!((ll - (0.1f64.ln() - 1.0)).abs() < 1e-12);
        assert!((ll + 3.302585).abs() < 1e-6);
    }

    #[test]
    fn empty_process_loglik() {
        let ll = log_likelihood(&series(&[], 10.0), 0.37, 0.4, 1.3).unwrap();
        assert!((ll + 3.7).abs() < 1e-12);
    }

    #[test]
    fn recursion_matches_double_sum() {
        let times = [0.3, 1.1, 1.15, 2.9, 4.0, 7.5];
        let ll = log_likelihood(&series(&times, 9.0), 0.4, 0.7, 1.9).unwrap();
        let bf = brute_loglik(&times, 9.0, 0.4, 0.7, 1.9);
        assert!((ll - bf).abs() < 1e-10);
    }

    #[test]
    fn bad_inputs() {
        assert!(EventSeries::new(vec![1.0, 1.0], vec![Direction::Buy; 2], 0.0, 5.0).is_err());
        assert!(EventSeries::new(vec![1.0, 6.0], vec![Direction::Buy; 2], 0.0, 5.0).is_err());
        assert!(log_likelihood(&series(&[1.0], 2.0), 0.0, 0.1, 1.0).is_err());
        assert!(matches!(fit(&series(&[1.0, 2.0], 3.0), &FitOptions::default()), Err(HawkesError::InsufficientEvents { .. })));
    }

    #[test]
    fn ties_are_spread_within_day() {
        let s = EventSeries::from_daily(&[(3, Direction::Buy), (3, Direction::Sell), (1, Direction::Sell)], 0.0, 5.0).unwrap();
        assert_eq!(s.times(), &[1.0, 3.0, 3.5]);
        assert_eq!(s.directions(), &[Direction::Sell, Direction::Buy, Direction::Sell]);
    }

    #[test]
    fn branching_and_steady_state() {
        assert_eq!(branching_ratio(&HawkesFit::from_params(1.0, 0.0, 2.0)), 0.0);
        assert_eq!(branching_ratio(&HawkesFit::from_params(1.0, 0.7, 0.7)), 1.0);
        assert!((branching_ratio(&HawkesFit::from_params(1.0, 0.0223, 0.0224)) - 0.99554).abs() < 1e-5);
        assert_eq!(steady_state_intensity(1.0, 0.5).unwrap(), 2.0);
        assert_eq!(steady_state_intensity(0.3, 0.0).unwrap(), 0.3);
        let v = steady_state_intensity(0.0159, 0.997866).unwrap();
        assert!((v / 7.45 - 1.0).abs() < 0.01, "{v}");
        assert!(steady_state_intensity(1.0, 1.0).is_err());
    }

    #[test]
    fn intensity_examples() {
        let none = series(&[], 5.0);
        let f = HawkesFit::from_params(0.1, 0.2, 0.5);
        assert_eq!(intensity_series(&none, &f, &[0.0, 1.0, 2.0]).unwrap(), vec![0.1; 3]);
        let one = series(&[0.0], 5.0);
        let l = intensity_series(&one, &f, &[0.0, 2.0]).unwrap();
        assert_eq!(l[0], 0.1);
        assert!((l[1] - 0.17358).abs() < 1e-5);
    }

    #[test]
    fn regime_counts() {
        let grid: Vec<f64> = (0..1000).map(f64::from).collect();
        let r = classify_regimes(grid.clone(), grid.iter().map(|x| x * 0.01).collect(), 90.0).unwrap();
        assert_eq!(r.n_high(), 100);
        assert!(r.labels[900..].iter().all(|l| *l == Regime::HighHerding));
        let g2: Vec<f64> = (0..1259).map(f64::from).collect();
        assert_eq!(classify_regimes(g2.clone(), g2, 90.0).unwrap().n_high(), 126);
        let flat = classify_regimes(vec![0.0; 20], vec![1.0; 20], 90.0).unwrap();
        assert_eq!(flat.n_high(), 0);
        assert!(!flat.warnings.is_empty());
    }

    #[test]
    fn two_point_trend_is_the_difference() {
        assert_eq!(ols_slope(&[(2019.0, 0.3), (2021.0, 0.5)]), Some((0.5 - 0.3) / 2.0));
        assert_eq!(ols_slope(&[(2019.0, 0.3)]), None);
    }

    #[test]
    fn simulation_is_reproducible() {
        let a = simulate(0.5, 0.4, 1.0, 200.0, 9, &SimulationOptions::default()).unwrap();
        let b = simulate(0.5, 0.4, 1.0, 200.0, 9, &SimulationOptions::default()).unwrap();
        assert_eq!(a, b);
        let cap = SimulationOptions { event_cap: 100, ..Default::default() };
        assert!(matches!(simulate(1.0, 1.5, 1.0, 1e4, 1, &cap), Err(HawkesError::Explosive(100))));
    }
}
