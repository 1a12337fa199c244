//! Walk-forward validation of pooled impact kernels.

use serde::{Deserialize, Serialize};

use super::EconError;
use crate::deconv::{solve_normal_equations, stock_design, DeconvSettings, DesignSystem, NormalEquations};
use crate::panel::NormalizedSignal;

/// Inclusive date ranges for training and testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_start: i64,
    pub train_end: i64,
    pub test_start: i64,
    pub test_end: i64,
}

impl Split {
    /// Train on `[start, train_end]`, test on `(train_end, test_end]`.
    pub fn forward(start: i64, train_end: i64, test_end: i64) -> Self {
        Self { train_start: start, train_end, test_start: train_end + 1, test_end }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: Split,
    pub r_squared: Option<f64>,
    pub reason: Option<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub kernel_total: Option<f64>,
}

/// Fits one pooled kernel on the training rows and scores `1 − SSE/SST` on
/// the test rows, where design rows are dated by their response day.
pub fn ts_cross_validate(signal: &NormalizedSignal, splits: &[Split], settings: &DeconvSettings) -> Result<Vec<SplitResult>, EconError> {
    for s in splits {
        if s.train_start > s.train_end || s.test_start > s.test_end {
            return Err(EconError::Invalid(format!("split {s:?} has reversed bounds")));
        }
    }
    let designs: Vec<DesignSystem> = signal
        .stock_slices()
        .into_iter()
        .filter_map(|(id, rows)| stock_design(id, rows, settings).ok())
        .filter(|d| d.n_rows() > 0)
        .collect();
    let mut out = Vec::with_capacity(splits.len());
    for split in splits {
        let mut train = NormalEquations::zeros(settings.lags);
        let mut test_rows = Vec::new();
        for d in &designs {
            let tr: Vec<usize> = (0..d.n_rows()).filter(|&i| (split.train_start..=split.train_end).contains(&d.row_index[i].1)).collect();
            if !tr.is_empty() {
                train.add(&d.select_rows(&tr).normal_equations());
            }
            let te: Vec<usize> = (0..d.n_rows()).filter(|&i| (split.test_start..=split.test_end).contains(&d.row_index[i].1)).collect();
            if !te.is_empty() {
                test_rows.push(d.select_rows(&te));
            }
        }
        let n_test: usize = test_rows.iter().map(DesignSystem::n_rows).sum();
        let mut res = SplitResult { split: *split, r_squared: None, reason: None, n_train: train.n_rows, n_test, kernel_total: None };
        if n_test == 0 {
            res.reason = Some("empty test window".into());
            out.push(res);
            continue;
        }
        if train.n_rows <= settings.lags {
            res.reason = Some(format!("{} training rows for {} coefficients", train.n_rows, settings.lags + 1));
            out.push(res);
            continue;
        }
        let psi = match solve_normal_equations(&train, settings.regularizer) {
            Ok(p) => p,
            Err(e) => {
                res.reason = Some(e.to_string());
                out.push(res);
                continue;
            }
        };
        res.kernel_total = Some(psi.iter().sum());
        let mut actual = Vec::with_capacity(n_test);
        let mut predicted = Vec::with_capacity(n_test);
        for d in &test_rows {
            actual.extend(d.response.iter().copied());
            predicted.extend(d.predict(&psi).iter().copied());
        }
        let mean: f64 = actual.iter().sum::<f64>() / n_test as f64;
        let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
        let sse: f64 = actual.iter().zip(&predicted).map(|(a, p)| (a - p).powi(2)).sum();
        let r2: f64 = 1.0 - sse / sst;
        if sst > 0.0 && r2.is_finite() {
            res.r_squared = Some(r2);
        } else {
            res.reason = Some("test variance is zero or prediction is non-finite".into());
        }
        out.push(res);
    }
    Ok(out)
}
