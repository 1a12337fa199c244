//! Entropy production rate of the joint (flow, return) symbolic dynamics.
//!
//! Each series is binned by its own empirical quantiles, the pair is encoded as
//! one joint state, and a first-order Markov chain is estimated from bigram
//! counts. The estimator is
//!
//! ```text
//! EPR = Σ_{a,b} π(a) P(a→b) ln[P(a→b) / P(b→a)]
//! ```
//!
//! in nats per step. Counting wraps around (the last symbol transitions to the
//! first) so every state's in- and out-counts agree. With the pseudocount
//! spread evenly, taking `π(a)` proportional to the smoothed row totals makes
//! it exactly stationary for `P`, and the estimate reduces to
//! `½ Σ (J − Jᵀ) ln(J / Jᵀ)` over the smoothed joint table `J`. That form is
//! non-negative and unchanged by reversal, rotation or relabelling.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

pub const MIN_LENGTH: usize = 50;
pub const DEFAULT_SHUFFLES: usize = 200;
pub const DEFAULT_BOOT: usize = 500;
pub const DEFAULT_BLOCK: usize = 20;

#[derive(Debug, Error)]
pub enum EprError {
    #[error("flow and return lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("series too short: {0}")]
    TooShort(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SymbolScheme {
    BinaryMedian,
    #[default]
    TernaryQuantile,
    Quintile,
}

impl SymbolScheme {
    pub fn bins(&self) -> usize {
        match self {
            SymbolScheme::BinaryMedian => 2,
            SymbolScheme::TernaryQuantile => 3,
            SymbolScheme::Quintile => 5,
        }
    }

    pub fn n_states(&self) -> usize {
        self.bins() * self.bins()
    }
}

impl fmt::Display for SymbolScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SymbolScheme::BinaryMedian => "binary",
            SymbolScheme::TernaryQuantile => "ternary",
            SymbolScheme::Quintile => "quintile",
        })
    }
}

impl FromStr for SymbolScheme {
    type Err = EprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" | "binary_median" | "median" => Ok(SymbolScheme::BinaryMedian),
            "ternary" | "ternary_quantile" | "tertile" => Ok(SymbolScheme::TernaryQuantile),
            "quintile" => Ok(SymbolScheme::Quintile),
            other => Err(EprError::Invalid(format!("unknown symbolization scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolicSeries {
    pub symbols: Vec<usize>,
    pub flow_bins: Vec<usize>,
    pub ret_bins: Vec<usize>,
    pub scheme: SymbolScheme,
    pub warnings: Vec<String>,
}

impl SymbolicSeries {
    pub fn n_states(&self) -> usize {
        self.scheme.n_states()
    }
}

/// Rank-based quantile bins: the value of rank `r` (ties in input order) goes
/// to bin `⌊r·bins/n⌋`, so bins hold equal counts up to one.
pub fn quantile_bins(xs: &[f64], bins: usize) -> (Vec<usize>, bool) {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * bins / n.max(1);
    }
    // ties split across a bin edge mean the cut was made by position
    let split_ties = order.windows(2).any(|w| xs[w[0]] == xs[w[1]] && out[w[0]] != out[w[1]]);
    (out, split_ties)
}

pub fn symbolize(flow: &[f64], ret: &[f64], scheme: SymbolScheme) -> Result<SymbolicSeries, EprError> {
    if flow.len() != ret.len() {
        return Err(EprError::LengthMismatch(flow.len(), ret.len()));
    }
    if flow.len() < 2 {
        return Err(EprError::TooShort(format!("{} observations", flow.len())));
    }
    if flow.iter().chain(ret).any(|x| !x.is_finite()) {
        return Err(EprError::Invalid("non-finite value in input".into()));
    }
    let bins = scheme.bins();
    let mut warnings = Vec::new();
    if flow.len() < MIN_LENGTH {
        warnings.push(format!("{} observations; at least {MIN_LENGTH} recommended", flow.len()));
    }
    if scheme.n_states() * 50 > flow.len() {
        warnings.push(format!(
            "{} joint states exceed the resolution of {} observations (fewer than 50 per state)",
            scheme.n_states(),
            flow.len()
        ));
    }
    let (flow_bins, ft) = quantile_bins(flow, bins);
    let (ret_bins, rt) = quantile_bins(ret, bins);
    if ft {
        warnings.push("tied flow values split across quantile bins by rank".into());
    }
    if rt {
        warnings.push("tied return values split across quantile bins by rank".into());
    }
    let symbols = flow_bins.iter().zip(&ret_bins).map(|(f, r)| f * bins + r).collect();
    Ok(SymbolicSeries { symbols, flow_bins, ret_bins, scheme, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionEstimate {
    /// Row-stochastic, `p[a][b] = P(a → b)`.
    pub p: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    /// States never visited (their rows are uniform).
    pub unvisited: Vec<usize>,
}

/// Smoothed circular bigram estimate over `n_states` states with pseudocount
/// `1/len` in every cell.
pub fn transition_matrix(symbols: &[usize], n_states: usize) -> Result<TransitionEstimate, EprError> {
    let n = symbols.len();
    if n < 2 {
        return Err(EprError::TooShort(format!("{n} symbols")));
    }
    if let Some(&bad) = symbols.iter().find(|&&s| s >= n_states) {
        return Err(EprError::Invalid(format!("symbol {bad} outside 0..{n_states}")));
    }
    let eps = 1.0 / n as f64;
    let mut counts = vec![vec![eps; n_states]; n_states];
    for i in 0..n {
        counts[symbols[i]][symbols[(i + 1) % n]] += 1.0;
    }
    let totals: Vec<f64> = counts.iter().map(|r| r.iter().sum()).collect();
    let z: f64 = totals.iter().sum();
    let mut visited = vec![false; n_states];
    for &s in symbols {
        visited[s] = true;
    }
    Ok(TransitionEstimate {
        p: counts.iter().zip(&totals).map(|(row, t)| row.iter().map(|c| c / t).collect()).collect(),
        pi: totals.iter().map(|t| t / z).collect(),
        unvisited: (0..n_states).filter(|&s| !visited[s]).collect(),
    })
}

/// `Σ π(a) P(a,b) ln(P(a,b)/P(b,a))`; terms with `P(a,b) = 0` contribute 0.
#[allow(clippy::needless_range_loop)]
pub fn entropy_production(p: &[Vec<f64>], pi: &[f64]) -> Result<f64, EprError> {
    let s = pi.len();
    if p.len() != s || p.iter().any(|r| r.len() != s) {
        return Err(EprError::Invalid("P must be square and match π".into()));
    }
    let mut total = 0.0;
    for a in 0..s {
        for b in 0..s {
            let (ab, ba) = (p[a][b], p[b][a]);
            if ab > 0.0 && a != b {
                if ba <= 0.0 {
                    return Err(EprError::Invalid(format!("P({b}→{a}) = 0 while P({a}→{b}) > 0")));
                }
                total += pi[a] * ab * (ab / ba).ln();
            }
        }
    }
    Ok(total)
}

/// Point estimate from an already symbolized series.
pub fn epr_of_symbols(sym: &SymbolicSeries) -> Result<f64, EprError> {
    let t = transition_matrix(&sym.symbols, sym.n_states())?;
    entropy_production(&t.p, &t.pi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EprConfig {
    pub scheme: SymbolScheme,
    pub n_shuffles: usize,
    pub n_boot: usize,
    pub block: usize,
    pub seed: u64,
}

impl Default for EprConfig {
    fn default() -> Self {
        Self {
            scheme: SymbolScheme::TernaryQuantile,
            n_shuffles: DEFAULT_SHUFFLES,
            n_boot: DEFAULT_BOOT,
            block: DEFAULT_BLOCK,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub p_value: f64,
    pub z: Option<f64>,
    pub null_mean: f64,
    pub null_sd: f64,
}

const PERM_STREAM: u64 = 0xE9;
const EPR_BOOT_STREAM: u64 = 0xEB;

/// Null distribution from full uniform shuffles of the flow series, returns
/// left in place. `p = (1 + #{null ≥ observed}) / (1 + n_shuffles)`.
pub fn permutation_test(flow: &[f64], ret: &[f64], scheme: SymbolScheme, n_shuffles: usize, seed: u64) -> Result<PermutationResult, EprError> {
    let sym = symbolize(flow, ret, scheme)?;
    let observed = epr_of_symbols(&sym)?;
    let bins = scheme.bins();
    let mut null = Vec::with_capacity(n_shuffles);
    let mut shuffled = sym.flow_bins.clone();
    let mut symbols = vec![0; shuffled.len()];
    for k in 0..n_shuffles {
        let mut rng = stats::task_rng(seed, PERM_STREAM, k as u64);
        shuffled.copy_from_slice(&sym.flow_bins);
        shuffled.shuffle(&mut rng);
        for (i, s) in symbols.iter_mut().enumerate() {
            *s = shuffled[i] * bins + sym.ret_bins[i];
        }
        let t = transition_matrix(&symbols, sym.n_states())?;
        null.push(entropy_production(&t.p, &t.pi)?);
    }
    let exceed = null.iter().filter(|v| **v >= observed).count();
    let null_mean = if null.is_empty() { f64::NAN } else { stats::mean(&null) };
    let null_sd = if null.len() > 1 { stats::std_dev(&null, 1) } else { f64::NAN };
    Ok(PermutationResult {
        p_value: (1 + exceed) as f64 / (1 + n_shuffles) as f64,
        z: (null_sd > 0.0).then(|| (observed - null_mean) / null_sd),
        null_mean,
        null_sd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapCi {
    pub lower: f64,
    pub upper: f64,
    pub n_used: usize,
    pub n_dropped: usize,
}

/// Circular block bootstrap of aligned `(flow, ret)` pairs with each replicate
/// re-symbolized; 2.5/97.5 percentile interval.
pub fn block_bootstrap_ci(flow: &[f64], ret: &[f64], scheme: SymbolScheme, n_boot: usize, block: usize, seed: u64) -> Result<BootstrapCi, EprError> {
    if flow.len() != ret.len() {
        return Err(EprError::LengthMismatch(flow.len(), ret.len()));
    }
    let n = flow.len();
    if n < 2 || block == 0 || block > n {
        return Err(EprError::TooShort(format!("{n} observations for block {block}")));
    }
    if n_boot == 0 {
        return Err(EprError::Invalid("n_boot must be positive".into()));
    }
    let mut reps = Vec::with_capacity(n_boot);
    let mut dropped = 0;
    let mut bf = Vec::with_capacity(n);
    let mut br = Vec::with_capacity(n);
    for b in 0..n_boot {
        let mut rng = stats::task_rng(seed, EPR_BOOT_STREAM, b as u64);
        bf.clear();
        br.clear();
        while bf.len() < n {
            let start = rng.random_range(0..n);
            for k in 0..block {
                if bf.len() == n {
                    break;
                }
                let i = (start + k) % n;
                bf.push(flow[i]);
                br.push(ret[i]);
            }
        }
        match symbolize(&bf, &br, scheme).and_then(|s| epr_of_symbols(&s)) {
            Ok(v) if v.is_finite() => reps.push(v),
            _ => dropped += 1,
        }
    }
    if reps.is_empty() {
        return Err(EprError::Invalid("every bootstrap replicate was degenerate".into()));
    }
    reps.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        lower: stats::quantile_sorted(&reps, 0.025),
        upper: stats::quantile_sorted(&reps, 0.975),
        n_used: reps.len(),
        n_dropped: dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EprEstimate {
    pub epr: f64,
    pub p_value: f64,
    pub z: Option<f64>,
    pub ci: (f64, f64),
    pub scheme: SymbolScheme,
    pub n_shuffles: usize,
    pub n_boot: usize,
    pub block_size: usize,
    pub n_boot_dropped: usize,
    pub warnings: Vec<String>,
}

/// Point estimate, permutation inference and block-bootstrap interval.
pub fn analyze(flow: &[f64], ret: &[f64], cfg: &EprConfig) -> Result<EprEstimate, EprError> {
    let sym = symbolize(flow, ret, cfg.scheme)?;
    let epr = epr_of_symbols(&sym)?;
    let perm = permutation_test(flow, ret, cfg.scheme, cfg.n_shuffles, cfg.seed)?;
    let ci = block_bootstrap_ci(flow, ret, cfg.scheme, cfg.n_boot, cfg.block, cfg.seed)?;
    let mut warnings = sym.warnings;
    if ci.n_dropped > 0 {
        warnings.push(format!("{} bootstrap replicates dropped", ci.n_dropped));
    }
    Ok(EprEstimate {
        epr,
        p_value: perm.p_value,
        z: perm.z,
        ci: (ci.lower, ci.upper),
        scheme: cfg.scheme,
        n_shuffles: cfg.n_shuffles,
        n_boot: cfg.n_boot,
        block_size: cfg.block,
        n_boot_dropped: ci.n_dropped,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tertile_arithmetic() {
        let x: Vec<f64> = (1..=9).map(f64::from).collect();
        let s = symbolize(&x, &x, SymbolScheme::TernaryQuantile).unwrap();
        assert_eq!(s.flow_bins, vec![0, 0, 0, 1, 1, 1, 2, 2, 2]);
        assert_eq!(s.symbols, vec![0, 0, 0, 4, 4, 4, 8, 8, 8]);
    }

    #[test]
    fn binary_hand_binning() {
        let s = symbolize(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0], SymbolScheme::BinaryMedian).unwrap();
        assert_eq!(s.symbols, vec![1, 1, 2, 2]);
    }

    #[test]
    fn ties_warn() {
        let flow = [0.0; 60];
        let ret: Vec<f64> = (0..60).map(f64::from).collect();
        let s = symbolize(&flow, &ret, SymbolScheme::TernaryQuantile).unwrap();
        assert!(s.warnings.iter().any(|w| w.contains("tied flow")));
    }

    #[test]
    fn alternating_and_absorbing_chains() {
        // even length so the wrap-around step is also 1 → 0
        let t = transition_matrix(&[0, 1, 0, 1, 0, 1], 2).unwrap();
        assert!(t.p[0][1] > 0.9 && t.p[1][0] > 0.9, "{:?}", t.p);
        let c = transition_matrix(&[2; 30], 3).unwrap();
        assert!(c.p[2][2] > 0.99);
        assert_eq!(c.unvisited, vec![0, 1]);
        for row in &c.p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_p_has_zero_epr() {
        let p = vec![vec![0.5, 0.3, 0.2], vec![0.3, 0.4, 0.3], vec![0.2, 0.3, 0.5]];
        assert_eq!(entropy_production(&p, &[1.0 / 3.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn three_state_cycle() {
        let mut p = vec![vec![0.0; 3]; 3];
        for a in 0..3 {
            p[a][(a + 1) % 3] = 0.9;
            p[a][(a + 2) % 3] = 0.05;
            p[a][a] = 0.05;
        }
        let v = entropy_production(&p, &[1.0 / 3.0; 3]).unwrap();
        assert!((v - 0.85 * 18f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_shuffles_gives_p_one() {
        let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..60).map(|i| (i as f64 * 1.3).cos()).collect();
        let r = permutation_test(&x, &y, SymbolScheme::TernaryQuantile, 0, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.z.is_none());
    }
}
