//! Rolling early-warning indicators and their ROC evaluation.

use serde::{Deserialize, Serialize};

use super::EconError;
use crate::stats;

pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningSeries {
    pub window: usize,
    pub acf: Vec<Option<f64>>,
    pub variance: Vec<Option<f64>>,
    /// `½(z_acf + z_var)`, each z-scored over all defined days.
    pub composite: Vec<Option<f64>>,
}

/// Lag-1 autocorrelation around the window mean.
pub fn lag1_acf(xs: &[f64]) -> Option<f64> {
    let m = stats::mean(xs);
    let den: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    if !(den > 0.0) {
        return None;
    }
    Some(xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / den)
}

/// On day `t ≥ window` the indicators use the `window + 1` values ending at
/// `t`, i.e. `window` lag-1 pairs.
pub fn early_warning(flow: &[f64], window: usize) -> Result<WarningSeries, EconError> {
    if window < 2 {
        return Err(EconError::Invalid("window must be at least 2".into()));
    }
    let n = flow.len();
    let mut acf = vec![None; n];
    let mut variance = vec![None; n];
    for t in window..n {
        let seg = &flow[t - window..=t];
        variance[t] = Some(stats::variance(seg, 1));
        acf[t] = lag1_acf(seg);
    }
    let za = zscores(&acf);
    let zv = zscores(&variance);
    let composite = za.iter().zip(&zv).map(|(a, v)| Some(0.5 * ((*a)? + (*v)?))).collect();
    Ok(WarningSeries { window, acf, variance, composite })
}

fn zscores(xs: &[Option<f64>]) -> Vec<Option<f64>> {
    let vals: Vec<f64> = xs.iter().flatten().copied().collect();
    if vals.len() < 2 {
        return vec![None; xs.len()];
    }
    let m = stats::mean(&vals);
    let s = stats::std_dev(&vals, 1);
    xs.iter().map(|x| x.and_then(|v| (s > 0.0).then(|| (v - m) / s))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub auc: f64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub youden_j: f64,
    pub lead: usize,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Scores at `t` against labels at `t + lead`. AUC is the Mann–Whitney
/// probability (ties count ½); the threshold maximises Youden's J with
/// `score ≥ threshold` predicted positive.
pub fn roc_auc(score: &[Option<f64>], labels: &[bool], lead: usize) -> Result<RocResult, EconError> {
    if score.len() != labels.len() {
        return Err(EconError::Invalid("score and label lengths differ".into()));
    }
    let mut pairs: Vec<(f64, bool)> = (0..score.len().saturating_sub(lead))
        .filter_map(|t| score[t].filter(|s| s.is_finite()).map(|s| (s, labels[t + lead])))
        .collect();
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EconError::Undefined("labels contain a single class".into()));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // rank-sum with average ranks for ties
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j + 1 < pairs.len() && pairs[j + 1].0 == pairs[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg_rank * pairs[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let auc = (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);

    // sweep thresholds from high to low
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, 0usize, 0usize);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = pairs.len();
    while k > 0 {
        let thr = pairs[k - 1].0;
        while k > 0 && pairs[k - 1].0 == thr {
            if pairs[k - 1].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        let j = tp as f64 / np - fp as f64 / nn;
        if j > best.0 {
            best = (j, thr, tp, fp);
        }
    }
    let (youden_j, threshold, tp, fp) = best;
    Ok(RocResult {
        auc,
        threshold,
        precision: tp as f64 / (tp + fp).max(1) as f64,
        recall: tp as f64 / np,
        youden_j,
        lead,
        n_pos,
        n_neg,
    })
}
