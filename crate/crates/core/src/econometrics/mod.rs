//! Econometric diagnostics: long memory, stationarity, robust regression,
//! local projections, Granger causality, mediation, early-warning scores and
//! out-of-sample kernel validation.

mod causality;
mod ols;
mod stationarity;
mod tscv;
mod warning;

use thiserror::Error;

pub use causality::{
    granger_test, local_projections, mechanism_regressions, mediation, GrangerLag, GrangerResult, LocalProjections,
    MechanismData, MechanismModel, Mediation, Projection,
};
pub use ols::{auto_hac_lags, collinear_columns, ols, ols_matrix, CovType, RegressionResult};
pub use stationarity::{
    adf_critical_values, adf_p_value, adf_test, expected_rs, hurst_exponent, kpss_p_value, kpss_test, rescaled_range, AdfResult,
    HurstEstimate, HurstMethod, KpssResult,
};
pub use tscv::{ts_cross_validate, Split, SplitResult};
pub use warning::{early_warning, lag1_acf, roc_auc, RocResult, WarningSeries, DEFAULT_WINDOW};

#[derive(Debug, Error)]
pub enum EconError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("rank-deficient design; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Convenience wrapper: Newey-West regression with an intercept.
pub fn nw_ols(y: &[f64], columns: &[(&str, &[f64])], hac_lags: Option<usize>) -> Result<RegressionResult, EconError> {
    ols(y, columns, true, CovType::NeweyWest(hac_lags))
}
