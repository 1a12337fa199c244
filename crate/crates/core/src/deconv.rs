//! Impulse-response deconvolution of returns on lagged order-flow signals.
//!
//! The return model is the finite convolution
//!
//! ```text
//! R_t = Σ_{τ=0..L} ψ_τ · I_{t−τ} + ε_t
//! ```
//!
//! and the kernel ψ is recovered as the minimiser of
//! `‖R − Xψ‖² + λ₁‖ψ‖₁ + λ₂‖ψ‖²`, where `X` stacks lagged signals. The pure
//! ℓ₂ cases (Tikhonov, ridge) are solved in closed form through a Cholesky
//! factorisation of `XᵀX + λI`; the ℓ₁ cases use cyclic coordinate descent on
//! the Gram matrix. All solvers only need `(XᵀX, XᵀR)`, so pooled designs are
//! accumulated as normal equations and never materialised in full.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{NormalizedSignal, SignalRow};
use crate::stats;

/// Default lag window L.
pub const DEFAULT_LAGS: usize = 60;
pub const DEFAULT_LAMBDA: f64 = 5.0;
/// Coordinate-descent stopping rule on the max absolute coefficient change.
pub const CD_TOLERANCE: f64 = 1e-8;
pub const CD_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum DeconvError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("design is singular with zero regularisation; use lambda > 0")]
    Singular,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Lagged design matrix paired with the aligned response.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    /// Rows are usable dates; column τ holds the signal τ days earlier.
    pub design: DMatrix<f64>,
    pub response: DVector<f64>,
    pub lags: usize,
    /// `(stock_id, date)` of every row.
    pub row_index: Vec<(String, i64)>,
}

impl DesignSystem {
    pub fn n_rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn normal_equations(&self) -> NormalEquations {
        NormalEquations {
            gram: self.design.tr_mul(&self.design),
            xty: self.design.tr_mul(&self.response),
            n_rows: self.n_rows(),
        }
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> DesignSystem {
        DesignSystem {
            design: self.design.select_rows(rows),
            response: self.response.select_rows(rows),
            lags: self.lags,
            row_index: rows.iter().map(|&i| self.row_index[i].clone()).collect(),
        }
    }

    /// Vertically stacks systems sharing a lag count.
    pub fn stack(systems: &[DesignSystem]) -> Result<DesignSystem, DeconvError> {
        let first = systems
            .first()
            .ok_or_else(|| DeconvError::InsufficientData("nothing to stack".into()))?;
        let lags = first.lags;
        if let Some(bad) = systems.iter().find(|s| s.lags != lags) {
            return Err(DeconvError::LengthMismatch(lags + 1, bad.lags + 1));
        }
        let n: usize = systems.iter().map(DesignSystem::n_rows).sum();
        let mut design = DMatrix::zeros(n, lags + 1);
        let mut response = DVector::zeros(n);
        let mut row_index = Vec::with_capacity(n);
        let mut at = 0;
        for s in systems {
            let k = s.n_rows();
            design.rows_mut(at, k).copy_from(&s.design);
            response.rows_mut(at, k).copy_from(&s.response);
            row_index.extend(s.row_index.iter().cloned());
            at += k;
        }
        Ok(DesignSystem { design, response, lags, row_index })
    }

    /// Fitted values `Xψ`.
    pub fn predict(&self, coefficients: &[f64]) -> DVector<f64> {
        &self.design * DVector::from_column_slice(coefficients)
    }
}

/// Sufficient statistics `(XᵀX, XᵀR)` of a design.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub n_rows: usize,
}

impl NormalEquations {
    pub fn zeros(lags: usize) -> Self {
        Self { gram: DMatrix::zeros(lags + 1, lags + 1), xty: DVector::zeros(lags + 1), n_rows: 0 }
    }

    pub fn add(&mut self, other: &NormalEquations) {
        self.gram += &other.gram;
        self.xty += &other.xty;
        self.n_rows += other.n_rows;
    }

    pub fn lags(&self) -> usize {
        self.xty.len() - 1
    }
}

/// Builds the design from contiguous series, one row per index `t ≥ lags`.
pub fn build_design(signal: &[f64], returns: &[f64], lags: usize) -> Result<DesignSystem, DeconvError> {
    if signal.len() != returns.len() {
        return Err(DeconvError::InvalidParameter(format!(
            "signal has {} points but returns has {}",
            signal.len(),
            returns.len()
        )));
    }
    let dates: Vec<i64> = (0..signal.len() as i64).collect();
    let sig: Vec<Option<f64>> = signal.iter().copied().map(Some).collect();
    let ret: Vec<Option<f64>> = returns.iter().copied().map(Some).collect();
    build_design_dated("", &dates, &sig, &ret, lags)
}

/// Builds the design for one stock from dated observations. A row at date `d`
/// is kept only when the signal is present on every day `d − lags ..= d` and
/// the response at `d` is present.
pub fn build_design_dated(
    stock_id: &str,
    dates: &[i64],
    signal: &[Option<f64>],
    returns: &[Option<f64>],
    lags: usize,
) -> Result<DesignSystem, DeconvError> {
    let n = dates.len();
    if signal.len() != n || returns.len() != n {
        return Err(DeconvError::InvalidParameter("dates, signal and returns must align".into()));
    }
    if n <= lags {
        return Err(DeconvError::InsufficientData(format!("{n} observations for {lags} lags")));
    }
    let mut keep = Vec::new();
    for t in lags..n {
        if dates[t] - dates[t - lags] != lags as i64 || returns[t].is_none() {
            continue;
        }
        if (t - lags..=t).all(|k| signal[k].is_some()) {
            keep.push(t);
        }
    }
    let mut design = DMatrix::zeros(keep.len(), lags + 1);
    let mut response = DVector::zeros(keep.len());
    let mut row_index = Vec::with_capacity(keep.len());
    for (row, &t) in keep.iter().enumerate() {
        for tau in 0..=lags {
            design[(row, tau)] = signal[t - tau].unwrap_or_default();
        }
        response[row] = returns[t].unwrap_or_default();
        row_index.push((stock_id.to_string(), dates[t]));
    }
    Ok(DesignSystem { design, response, lags, row_index })
}

/// Penalty applied when solving for the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Regularizer {
    Tikhonov { lambda: f64 },
    /// Same closed form as Tikhonov; kept separate so reports can label the
    /// stronger-penalty comparison run.
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    ElasticNet { l1: f64, l2: f64 },
}

impl Regularizer {
    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::Tikhonov { .. } => "tikhonov",
            Regularizer::Ridge { .. } => "ridge",
            Regularizer::Lasso { .. } => "lasso",
            Regularizer::ElasticNet { .. } => "elastic_net",
        }
    }

    /// `(λ₁, λ₂)` weights of the ℓ₁ and squared-ℓ₂ penalties.
    pub fn penalties(&self) -> (f64, f64) {
        match *self {
            Regularizer::Tikhonov { lambda } | Regularizer::Ridge { lambda } => (0.0, lambda),
            Regularizer::Lasso { lambda } => (lambda, 0.0),
            Regularizer::ElasticNet { l1, l2 } => (l1, l2),
        }
    }

    fn validate(&self) -> Result<(), DeconvError> {
        let (l1, l2) = self.penalties();
        if !(l1 >= 0.0 && l2 >= 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(DeconvError::InvalidParameter(format!("penalties must be finite and >= 0, got ({l1}, {l2})")));
        }
        Ok(())
    }
}

impl Default for Regularizer {
    fn default() -> Self {
        Regularizer::Tikhonov { lambda: DEFAULT_LAMBDA }
    }
}

/// Summary statistics of a coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelStats {
    pub total_impact: f64,
    pub contemporaneous: f64,
    pub half_life: usize,
}

/// Total, lag-0 coefficient and half-life: the smallest lag `h` at which
/// `|Σ_{τ≤h} ψ_τ| ≥ ½|Σψ|`. A zero total gives half-life `L`.
pub fn kernel_stats(coefficients: &[f64]) -> KernelStats {
    let lags = coefficients.len().saturating_sub(1);
    let total: f64 = coefficients.iter().sum();
    let contemporaneous = coefficients.first().copied().unwrap_or(0.0);
    let half_life = if total == 0.0 {
        lags
    } else {
        let target = 0.5 * total.abs();
        let mut cum = 0.0;
        coefficients
            .iter()
            .position(|c| {
                cum += c;
                cum.abs() >= target
            })
            .unwrap_or(lags)
    };
    KernelStats { total_impact: total, contemporaneous, half_life }
}

/// Estimated impulse-response kernel ψ₀..ψ_L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub coefficients: Vec<f64>,
    pub regularizer: Regularizer,
    pub total_impact: f64,
    pub contemporaneous: f64,
    pub half_life: usize,
    /// Standard error of the total across subsample iterations (pooled only).
    pub se_total: Option<f64>,
    pub n_rows: usize,
}

impl Kernel {
    pub fn new(coefficients: Vec<f64>, regularizer: Regularizer, n_rows: usize) -> Self {
        let s = kernel_stats(&coefficients);
        Self {
            coefficients,
            regularizer,
            total_impact: s.total_impact,
            contemporaneous: s.contemporaneous,
            half_life: s.half_life,
            se_total: None,
            n_rows,
        }
    }

    pub fn lags(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn cumulative(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c;
                Some(*acc)
            })
            .collect()
    }
}

pub fn solve_regularized(system: &DesignSystem, regularizer: Regularizer) -> Result<Kernel, DeconvError> {
    if system.n_rows() == 0 {
        return Err(DeconvError::InsufficientData("empty design".into()));
    }
    let coefs = solve_normal_equations(&system.normal_equations(), regularizer)?;
    Ok(Kernel::new(coefs, regularizer, system.n_rows()))
}

/// Solves the penalised least-squares problem from its sufficient statistics.
pub fn solve_normal_equations(ne: &NormalEquations, regularizer: Regularizer) -> Result<Vec<f64>, DeconvError> {
    regularizer.validate()?;
    if ne.n_rows == 0 {
        return Err(DeconvError::InsufficientData("empty design".into()));
    }
    let (l1, l2) = regularizer.penalties();
    if l1 == 0.0 {
        let p = ne.gram.nrows();
        let a = &ne.gram + DMatrix::identity(p, p) * l2;
        return match a.cholesky() {
            Some(ch) => {
                let x = ch.solve(&ne.xty);
                if l2 == 0.0 && !x.iter().all(|v| v.is_finite()) {
                    return Err(DeconvError::Singular);
                }
                Ok(x.iter().copied().collect())
            }
            None if l2 == 0.0 => Err(DeconvError::Singular),
            None => Err(DeconvError::InvalidParameter("penalised Gram matrix not positive definite".into())),
        };
    }
    Ok(coordinate_descent(&ne.gram, &ne.xty, l1, l2))
}

/// Cyclic coordinate descent for `‖R − Xψ‖² + l1‖ψ‖₁ + l2‖ψ‖²` in Gram form.
fn coordinate_descent(gram: &DMatrix<f64>, xty: &DVector<f64>, l1: f64, l2: f64) -> Vec<f64> {
    let p = xty.len();
    let mut psi = vec![0.0; p];
    // gradient helper: g_j = c_j − Σ_k G_jk ψ_k, kept current incrementally
    let mut g: Vec<f64> = xty.iter().copied().collect();
    let half_l1 = 0.5 * l1;
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let denom = gram[(j, j)] + l2;
            if denom <= 0.0 {
                continue;
            }
            let rho = g[j] + gram[(j, j)] * psi[j];
            let new = soft_threshold(rho, half_l1) / denom;
            let delta = new - psi[j];
            if delta != 0.0 {
                for (k, gk) in g.iter_mut().enumerate() {
                    *gk -= gram[(k, j)] * delta;
                }
                psi[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < CD_TOLERANCE {
            break;
        }
    }
    psi
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Which column of a [`NormalizedSignal`] feeds the design and response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignalColumn {
    #[default]
    Raw,
    /// Cross-sectional z-score (rows without one are treated as missing).
    CrossSectionalZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResponseColumn {
    #[default]
    Raw,
    VolAdjusted,
}

/// Settings shared by the pooled and conditional estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeconvSettings {
    pub lags: usize,
    pub regularizer: Regularizer,
    /// Z-score each stock's signal over time before stacking.
    pub pre_standardize: bool,
    pub signal: SignalColumn,
    pub response: ResponseColumn,
}

impl Default for DeconvSettings {
    fn default() -> Self {
        Self {
            lags: DEFAULT_LAGS,
            regularizer: Regularizer::default(),
            pre_standardize: true,
            signal: SignalColumn::Raw,
            response: ResponseColumn::Raw,
        }
    }
}

/// Per-stock design following `settings`.
pub fn stock_design(stock_id: &str, rows: &[SignalRow], settings: &DeconvSettings) -> Result<DesignSystem, DeconvError> {
    let dates: Vec<i64> = rows.iter().map(|r| r.date).collect();
    let mut signal: Vec<Option<f64>> = rows
        .iter()
        .map(|r| match settings.signal {
            SignalColumn::Raw => Some(r.signal),
            SignalColumn::CrossSectionalZ => r.z,
        })
        .collect();
    if settings.pre_standardize {
        let present: Vec<f64> = signal.iter().flatten().copied().collect();
        let m = stats::mean(&present);
        let sd = stats::std_dev(&present, 0);
        if !(sd > 0.0) {
            return Err(DeconvError::InsufficientData(format!("stock {stock_id}: constant signal")));
        }
        for v in signal.iter_mut().flatten() {
            *v = (*v - m) / sd;
        }
    }
    let returns: Vec<Option<f64>> = rows
        .iter()
        .map(|r| match settings.response {
            ResponseColumn::Raw => Some(r.ret),
            ResponseColumn::VolAdjusted => r.r_adj,
        })
        .collect();
    build_design_dated(stock_id, &dates, &signal, &returns, settings.lags)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledConfig {
    pub n_stocks: usize,
    pub n_iter: usize,
    pub seed: u64,
    pub settings: DeconvSettings,
}

impl Default for PooledConfig {
    fn default() -> Self {
        Self { n_stocks: 100, n_iter: 5, seed: 0, settings: DeconvSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledKernel {
    /// Mean kernel with `se_total` filled.
    pub kernel: Kernel,
    pub iteration_totals: Vec<f64>,
    pub stocks_per_iteration: usize,
    pub warnings: Vec<String>,
}

const POOL_STREAM: u64 = 0x900;

/// Subsampled pooled deconvolution: each iteration stacks `n_stocks` randomly
/// chosen stocks and solves once; the reported kernel is the mean over
/// iterations and `se_total` is the standard deviation of the iteration totals
/// divided by `√n_iter`.
pub fn pooled_kernel(signal: &NormalizedSignal, cfg: &PooledConfig) -> Result<PooledKernel, DeconvError> {
    let mut out = pooled_kernels(signal, cfg, &[cfg.settings.regularizer])?;
    Ok(out.remove(0))
}

/// [`pooled_kernel`] for several regularizers on the same subsamples; the
/// regularizer in `cfg.settings` is ignored.
pub fn pooled_kernels(signal: &NormalizedSignal, cfg: &PooledConfig, regularizers: &[Regularizer]) -> Result<Vec<PooledKernel>, DeconvError> {
    if cfg.n_iter == 0 || cfg.n_stocks == 0 {
        return Err(DeconvError::InvalidParameter("n_iter and n_stocks must be positive".into()));
    }
    let mut warnings = Vec::new();
    let mut per_stock = Vec::new();
    for (id, rows) in signal.stock_slices() {
        match stock_design(id, rows, &cfg.settings) {
            Ok(d) if d.n_rows() > 0 => per_stock.push(d.normal_equations()),
            Ok(_) => warnings.push(format!("stock {id}: no complete lag window")),
            Err(e) => warnings.push(format!("stock {id}: {e}")),
        }
    }
    if per_stock.is_empty() {
        return Err(DeconvError::InsufficientData("no stock has a usable design".into()));
    }
    let take = if per_stock.len() < cfg.n_stocks {
        warnings.push(format!("only {} usable stocks, fewer than {}; sampling all", per_stock.len(), cfg.n_stocks));
        per_stock.len()
    } else {
        cfg.n_stocks
    };
    let lags = cfg.settings.lags;
    let mut iterations: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(cfg.n_iter); regularizers.len()];
    let mut n_rows = 0;
    for it in 0..cfg.n_iter {
        let mut rng = stats::task_rng(cfg.seed, POOL_STREAM, it as u64);
        let mut chosen: Vec<usize> = sample(&mut rng, per_stock.len(), take).into_vec();
        chosen.sort_unstable();
        let mut ne = NormalEquations::zeros(lags);
        for &i in &chosen {
            ne.add(&per_stock[i]);
        }
        n_rows += ne.n_rows;
        for (reg, out) in regularizers.iter().zip(iterations.iter_mut()) {
            out.push(solve_normal_equations(&ne, *reg)?);
        }
    }
    Ok(regularizers
        .iter()
        .zip(iterations)
        .map(|(reg, iters)| {
            let mut mean = vec![0.0; lags + 1];
            for c in &iters {
                for (m, v) in mean.iter_mut().zip(c) {
                    *m += v / cfg.n_iter as f64;
                }
            }
            let totals: Vec<f64> = iters.iter().map(|c| c.iter().sum()).collect();
            let mut kernel = Kernel::new(mean, *reg, n_rows / cfg.n_iter);
            kernel.se_total = (cfg.n_iter > 1).then(|| stats::std_dev(&totals, 1) / (cfg.n_iter as f64).sqrt());
            PooledKernel { kernel, iteration_totals: totals, stocks_per_iteration: take, warnings: warnings.clone() }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Equal-weight mean of per-stock kernels.
    #[default]
    ByStockMean,
    /// One solve on all rows of the group.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupKernel {
    pub kernel: Kernel,
    pub n_rows: usize,
    pub n_stocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ConditionalKernels {
    pub groups: BTreeMap<String, GroupKernel>,
    /// `(group, reason)` for groups that could not be estimated.
    pub skipped: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

/// Deconvolution run separately per group. `label` assigns each design row (by
/// stock and response date) to a group; rows labelled `None` are dropped.
pub fn conditional_kernel<F>(
    signal: &NormalizedSignal,
    label: F,
    aggregation: Aggregation,
    settings: &DeconvSettings,
) -> Result<ConditionalKernels, DeconvError>
where
    F: Fn(&str, i64) -> Option<String>,
{
    let lags = settings.lags;
    let min_rows = lags + 1;
    let mut out = ConditionalKernels::default();
    // group -> per-stock normal equations
    let mut parts: BTreeMap<String, Vec<NormalEquations>> = BTreeMap::new();
    for (id, rows) in signal.stock_slices() {
        let design = match stock_design(id, rows, settings) {
            Ok(d) => d,
            Err(e) => {
                out.warnings.push(format!("stock {id}: {e}"));
                continue;
            }
        };
        let mut by_group: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, (stock, date)) in design.row_index.iter().enumerate() {
            if let Some(g) = label(stock, *date) {
                by_group.entry(g).or_default().push(i);
            }
        }
        for (g, idx) in by_group {
            parts.entry(g).or_default().push(design.select_rows(&idx).normal_equations());
        }
    }
    for (g, stocks) in parts {
        let total_rows: usize = stocks.iter().map(|s| s.n_rows).sum();
        match aggregation {
            Aggregation::Pooled => {
                if total_rows < min_rows {
                    out.skipped.push((g, format!("{total_rows} rows < {min_rows}")));
                    continue;
                }
                let mut ne = NormalEquations::zeros(lags);
                for s in &stocks {
                    ne.add(s);
                }
                let coefs = solve_normal_equations(&ne, settings.regularizer)?;
                out.groups.insert(
                    g,
                    GroupKernel { kernel: Kernel::new(coefs, settings.regularizer, total_rows), n_rows: total_rows, n_stocks: stocks.len() },
                );
            }
            Aggregation::ByStockMean => {
                let mut sum = vec![0.0; lags + 1];
                let mut used = 0usize;
                let mut rows_used = 0usize;
                for s in stocks.iter().filter(|s| s.n_rows >= min_rows) {
                    let coefs = solve_normal_equations(s, settings.regularizer)?;
                    for (a, c) in sum.iter_mut().zip(&coefs) {
                        *a += c;
                    }
                    used += 1;
                    rows_used += s.n_rows;
                }
                if used == 0 {
                    out.skipped.push((g, format!("no stock has >= {min_rows} rows in group")));
                    continue;
                }
                let dropped = stocks.len() - used;
                if dropped > 0 {
                    out.warnings.push(format!("group {g}: {dropped} stocks with < {min_rows} rows left out of the mean"));
                }
                let mean: Vec<f64> = sum.iter().map(|s| s / used as f64).collect();
                out.groups.insert(
                    g,
                    GroupKernel { kernel: Kernel::new(mean, settings.regularizer, rows_used), n_rows: rows_used, n_stocks: used },
                );
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelComparison {
    /// Pearson correlation over lags; `None` for a zero-variance kernel.
    pub correlation: Option<f64>,
    /// Fraction of lags whose coefficients share a sign (zeros match zeros).
    pub sign_agreement: f64,
    pub same_sign_total: bool,
    /// `total(a) / total(b)`; `None` when `total(b)` is zero.
    pub total_ratio: Option<f64>,
}

pub fn compare_kernels(a: &Kernel, b: &Kernel) -> Result<KernelComparison, DeconvError> {
    compare_coefficients(&a.coefficients, &b.coefficients)
}

pub fn compare_coefficients(a: &[f64], b: &[f64]) -> Result<KernelComparison, DeconvError> {
    if a.len() != b.len() {
        return Err(DeconvError::LengthMismatch(a.len(), b.len()));
    }
    let sign = |x: f64| if x > 0.0 { 1 } else if x < 0.0 { -1 } else { 0 };
    let agree = a.iter().zip(b).filter(|(x, y)| sign(**x) == sign(**y)).count();
    let ta: f64 = a.iter().sum();
    let tb: f64 = b.iter().sum();
    Ok(KernelComparison {
        correlation: stats::pearson(a, b),
        sign_agreement: if a.is_empty() { 1.0 } else { agree as f64 / a.len() as f64 },
        same_sign_total: sign(ta) == sign(tb),
        total_ratio: (tb != 0.0).then(|| ta / tb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_constructed_alignment() {
        let d = build_design(&[1.0, 0.0, 0.0], &[9.0, 9.0, 9.0], 1).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.design.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(d.design.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert_eq!(d.response.as_slice(), &[9.0, 9.0]);
    }

    #[test]
    fn zero_lags_is_the_signal() {
        let d = build_design(&[1.0, 2.0, 3.0], &[0.0; 3], 0).unwrap();
        assert_eq!(d.design.ncols(), 1);
        assert_eq!(d.design.column(0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn too_short_is_an_error() {
        assert!(matches!(build_design(&[1.0, 2.0], &[0.0, 0.0], 2), Err(DeconvError::InsufficientData(_))));
    }

    #[test]
    fn missing_lag_or_date_gap_drops_row() {
        let dates = [0, 1, 2, 4, 5];
        let sig = [Some(1.0), None, Some(2.0), Some(3.0), Some(4.0)];
        let ret = [Some(0.0); 5];
        let d = build_design_dated("A", &dates, &sig, &ret, 1).unwrap();
        // rows at t = 1 and 2 see the missing value; t = 3 straddles the gap
        assert_eq!(d.row_index, vec![("A".to_string(), 5)]);
    }

    #[test]
    fn half_life_examples() {
        let s = kernel_stats(&[1.0, 0.0, 0.0]);
        assert_eq!((s.half_life, s.total_impact, s.contemporaneous), (0, 1.0, 1.0));
        assert_eq!(kernel_stats(&[0.2; 5]).half_life, 2);
        assert_eq!(kernel_stats(&[1.0, -1.0, 0.0]).half_life, 2);
        assert_eq!(kernel_stats(&[0.6, 0.3, 0.1]).half_life, 0);
    }

    #[test]
    fn sign_flipping_kernel_compares_magnitudes() {
        // total −0.5; magnitudes are compared, so lag 0 already qualifies
        assert_eq!(kernel_stats(&[0.5, -1.5, 0.5]).half_life, 0);
        assert_eq!(kernel_stats(&[0.1, -1.5, 0.5]).half_life, 1);
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let d = build_design(&[1.0, -2.0, 0.5, 3.0, 1.0, 0.0], &[0.3, 0.1, -0.2, 0.9, 0.4, 0.0], 2).unwrap();
        for reg in [Regularizer::Tikhonov { lambda: 1e12 }, Regularizer::Lasso { lambda: 1e12 }, Regularizer::ElasticNet { l1: 1e12, l2: 1e12 }] {
            let k = solve_regularized(&d, reg).unwrap();
            assert!(k.coefficients.iter().all(|c| c.abs() < 1e-6), "{reg:?}");
        }
    }

    #[test]
    fn orthonormal_least_squares() {
        // columns are orthonormal: X = [e0, e1, e2] padded
        let x = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_column_slice(&[0.5, -1.0, 2.0, 7.0]);
        let sys = DesignSystem { design: x.clone(), response: y.clone(), lags: 2, row_index: vec![("".into(), 0); 4] };
        let k = solve_regularized(&sys, Regularizer::Tikhonov { lambda: 0.0 }).unwrap();
        let expected = x.tr_mul(&y);
        for (a, b) in k.coefficients.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        let l = solve_regularized(&sys, Regularizer::Lasso { lambda: 0.0 }).unwrap();
        for (a, b) in l.coefficients.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_design_without_penalty() {
        let d = build_design(&[0.0; 6], &[1.0; 6], 1).unwrap();
        assert!(matches!(solve_regularized(&d, Regularizer::Tikhonov { lambda: 0.0 }), Err(DeconvError::Singular)));
        assert!(solve_regularized(&d, Regularizer::Tikhonov { lambda: 1.0 }).is_ok());
    }

    #[test]
    fn negative_penalty_rejected() {
        let d = build_design(&[1.0, 2.0, 3.0], &[1.0; 3], 0).unwrap();
        assert!(solve_regularized(&d, Regularizer::Lasso { lambda: -1.0 }).is_err());
    }

    #[test]
    fn comparison_identity_and_negation() {
        let a = vec![0.3, -0.1, 0.2, 0.0];
        let c = compare_coefficients(&a, &a).unwrap();
        assert!((c.correlation.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(c.sign_agreement, 1.0);
        assert!(c.same_sign_total);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        let n = compare_coefficients(&a, &neg).unwrap();
        assert!((n.correlation.unwrap() + 1.0).abs() < 1e-15);
        assert!(!n.same_sign_total);
        assert!(compare_coefficients(&a, &[0.0; 4]).unwrap().correlation.is_none());
        assert!(compare_coefficients(&a, &[0.0; 3]).is_err());
    }
}
