//! Least squares with classical, heteroskedasticity-robust and Newey-West
//! covariance estimates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EconError;

/// Newey-West truncation lag `⌊4 (T/100)^{2/9}⌋`.
pub fn auto_hac_lags(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lags")]
pub enum CovType {
    /// Bartlett-kernel HAC; `None` picks [`auto_hac_lags`].
    NeweyWest(Option<usize>),
    Hc0,
    Hc3,
}

impl Default for CovType {
    fn default() -> Self {
        CovType::NeweyWest(None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub se_ols: Vec<f64>,
    /// Standard errors from the requested robust covariance.
    pub se: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub rss: f64,
    pub n_obs: usize,
    pub cov_type: CovType,
    pub hac_lags: Option<usize>,
}

impl RegressionResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn se_of(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.se[i])
    }
}

/// Named regressor columns; an intercept named `const` is prepended when
/// `intercept` is set.
pub fn design(columns: &[(&str, &[f64])], intercept: bool, n: usize) -> Result<(DMatrix<f64>, Vec<String>), EconError> {
    let k = columns.len() + usize::from(intercept);
    let mut x = DMatrix::zeros(n, k);
    let mut names = Vec::with_capacity(k);
    let mut j = 0;
    if intercept {
        x.column_mut(0).fill(1.0);
        names.push("const".to_string());
        j = 1;
    }
    for (name, col) in columns {
        if col.len() != n {
            return Err(EconError::Invalid(format!("column {name} has {} rows, expected {n}", col.len())));
        }
        x.column_mut(j).copy_from_slice(col);
        names.push(name.to_string());
        j += 1;
    }
    Ok((x, names))
}

/// Columns that are (numerically) linear combinations of earlier ones.
pub fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let d = q.dot(&r);
                r -= q * d;
            }
        }
        let rn = r.norm();
        // relative test, so tiny-scale regressors are not dropped
        if norm == 0.0 || rn <= 1e-10 * norm {
            bad.push(j);
        } else {
            basis.push(r / rn);
        }
    }
    bad
}

pub fn ols(y: &[f64], columns: &[(&str, &[f64])], intercept: bool, cov: CovType) -> Result<RegressionResult, EconError> {
    let (x, names) = design(columns, intercept, y.len())?;
    ols_matrix(y, &x, names, cov)
}

pub fn ols_matrix(y: &[f64], x: &DMatrix<f64>, names: Vec<String>, cov: CovType) -> Result<RegressionResult, EconError> {
    let n = y.len();
    let k = x.ncols();
    if x.nrows() != n {
        return Err(EconError::Invalid("design rows differ from response length".into()));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(EconError::Invalid("non-finite value in regression input".into()));
    }
    let lags = match cov {
        CovType::NeweyWest(l) => Some(l.unwrap_or_else(|| auto_hac_lags(n))),
        _ => None,
    };
    if n <= k + lags.unwrap_or(0) {
        return Err(EconError::InsufficientData(format!("{n} observations for {k} regressors and {} HAC lags", lags.unwrap_or(0))));
    }
    let bad = collinear_columns(x);
    if !bad.is_empty() {
        return Err(EconError::RankDeficient(bad.iter().map(|&j| names[j].clone()).collect()));
    }
    let yv = DVector::from_column_slice(y);
    let xtx = x.tr_mul(x);
    let xtx_inv = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| EconError::RankDeficient(names.clone()))?
        .inverse();
    let beta = &xtx_inv * x.tr_mul(&yv);
    let resid = &yv - x * &beta;
    let rss = resid.norm_squared();
    let ybar = yv.mean();
    let tss: f64 = yv.iter().map(|v| (v - ybar).powi(2)).sum();
    let has_const = (0..k).any(|j| x.column(j).iter().all(|v| *v == x[(0, j)]) && x[(0, j)] != 0.0);
    let r_squared = if has_const {
        if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN }
    } else {
        let raw: f64 = yv.norm_squared();
        if raw > 0.0 { 1.0 - rss / raw } else { f64::NAN }
    };
    let sigma2 = rss / (n - k) as f64;
    let se_ols: Vec<f64> = (0..k).map(|j| (sigma2 * xtx_inv[(j, j)]).sqrt()).collect();

    let meat = match cov {
        CovType::Hc0 => hac_meat(x, &resid, 0),
        CovType::NeweyWest(_) => hac_meat(x, &resid, lags.unwrap_or(0)),
        CovType::Hc3 => {
            let mut m = DMatrix::zeros(k, k);
            for t in 0..n {
                let xt = x.row(t).transpose();
                let h = (xt.transpose() * &xtx_inv * &xt)[(0, 0)];
                let w = resid[t] / (1.0 - h).max(1e-12);
                m += &xt * xt.transpose() * (w * w);
            }
            m
        }
    };
    let v = &xtx_inv * meat * &xtx_inv;
    let se: Vec<f64> = (0..k).map(|j| v[(j, j)].max(0.0).sqrt()).collect();
    let dist = StudentsT::new(0.0, 1.0, (n - k) as f64).map_err(|e| EconError::Invalid(e.to_string()))?;
    let t_stats: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let p_values = t_stats
        .iter()
        .map(|t| if t.is_finite() { 2.0 * dist.sf(t.abs()) } else { f64::NAN })
        .collect();
    Ok(RegressionResult {
        names,
        coefficients: beta.iter().copied().collect(),
        se_ols,
        se,
        t_stats,
        p_values,
        r_squared,
        rss,
        n_obs: n,
        cov_type: cov,
        hac_lags: lags,
    })
}

/// `Σ_t u_t² x_t x_tᵀ + Σ_{l≤L} (1 − l/(L+1)) Σ_t u_t u_{t−l} (x_t x_{t−l}ᵀ + x_{t−l} x_tᵀ)`.
fn hac_meat(x: &DMatrix<f64>, u: &DVector<f64>, lags: usize) -> DMatrix<f64> {
    let n = x.nrows();
    // scores g_t = u_t x_t
    let mut g = x.clone();
    for t in 0..n {
        g.row_mut(t).scale_mut(u[t]);
    }
    let mut m = g.tr_mul(&g);
    for l in 1..=lags.min(n.saturating_sub(1)) {
        let w = 1.0 - l as f64 / (lags + 1) as f64;
        let a = g.rows(l, n - l);
        let b = g.rows(0, n - l);
        let gamma = a.tr_mul(&b);
        m += (&gamma + gamma.transpose()) * w;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let r = ols(&y, &[("x", &x)], true, CovType::Hc0).unwrap();
        assert!((r.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((r.coefficients[1] - 2.0).abs() < 1e-10);
        assert!((r.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_lag_hac_is_hc0() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 7 % 13) as f64).sin()).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 5 % 11) as f64).cos() + x[i]).collect();
        let a = ols(&y, &[("x", &x)], true, CovType::NeweyWest(Some(0))).unwrap();
        let b = ols(&y, &[("x", &x)], true, CovType::Hc0).unwrap();
        for (s, t) in a.se.iter().zip(&b.se) {
            assert!((s - t).abs() < 1e-10);
        }
        assert_eq!(a.coefficients, b.coefficients);
    }

    #[test]
    fn collinear_column_is_named() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let z: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let y = x.clone();
        match ols(&y, &[("x", &x), ("z", &z)], true, CovType::Hc3) {
            Err(EconError::RankDeficient(cols)) => assert_eq!(cols, vec!["z".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn auto_lags() {
        assert_eq!(auto_hac_lags(100), 4);
        assert_eq!(auto_hac_lags(1259), 7);
    }
}
