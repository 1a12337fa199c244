//! Hurst exponent and unit-root / stationarity tests.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::ols::{ols_matrix, CovType};
use super::EconError;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HurstMethod {
    /// Plain slope of `log(R/S)` on `log(n)`.
    Classic,
    /// Slope measured against the expected white-noise R/S (Anis–Lloyd with
    /// the Peters small-sample factor), plus ½.
    #[default]
    AnisLloyd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstEstimate {
    pub h: f64,
    pub method: HurstMethod,
    pub windows: Vec<usize>,
    pub rs: Vec<f64>,
}

/// Mean rescaled range over non-overlapping chunks of length `w`.
pub fn rescaled_range(xs: &[f64], w: usize) -> Option<f64> {
    let mut acc = 0.0;
    let mut used = 0;
    for chunk in xs.chunks_exact(w) {
        let m = stats::mean(chunk);
        let s = stats::std_dev(chunk, 0);
        if !(s > 0.0) {
            continue;
        }
        let (mut cum, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
        for x in chunk {
            cum += x - m;
            lo = lo.min(cum);
            hi = hi.max(cum);
        }
        acc += (hi - lo) / s;
        used += 1;
    }
    (used > 0).then(|| acc / used as f64)
}

/// Expected R/S of white noise for window `n`.
pub fn expected_rs(n: usize) -> f64 {
    let nf = n as f64;
    let sum: f64 = (1..n).map(|i| ((nf - i as f64) / i as f64).sqrt()).sum();
    let front = if n <= 340 {
        (ln_gamma((nf - 1.0) / 2.0) - ln_gamma(nf / 2.0)).exp() / std::f64::consts::PI.sqrt()
    } else {
        1.0 / (nf * std::f64::consts::FRAC_PI_2).sqrt()
    };
    (nf - 0.5) / nf * front * sum
}

/// R/S Hurst exponent over `n_scales` log-spaced windows from `min_window`
/// to half the series length.
pub fn hurst_exponent(xs: &[f64], min_window: usize, n_scales: usize, method: HurstMethod) -> Result<HurstEstimate, EconError> {
    if xs.len() < 128 {
        return Err(EconError::InsufficientData(format!("{} observations; need 128", xs.len())));
    }
    if min_window < 4 || n_scales < 2 {
        return Err(EconError::Invalid("min_window >= 4 and n_scales >= 2 required".into()));
    }
    if stats::std_dev(xs, 0) == 0.0 {
        return Err(EconError::Undefined("constant series".into()));
    }
    let max_window = xs.len() / 2;
    let (lo, hi) = ((min_window as f64).ln(), (max_window as f64).ln());
    let mut windows: Vec<usize> = (0..n_scales)
        .map(|i| (lo + (hi - lo) * i as f64 / (n_scales - 1) as f64).exp().round() as usize)
        .collect();
    windows.dedup();
    let mut pts = Vec::new();
    let mut rs_vals = Vec::new();
    let mut used = Vec::new();
    for &w in &windows {
        if let Some(rs) = rescaled_range(xs, w) {
            if rs > 0.0 {
                let y = match method {
                    HurstMethod::Classic => rs.ln(),
                    HurstMethod::AnisLloyd => rs.ln() - expected_rs(w).ln(),
                };
                pts.push(((w as f64).ln(), y));
                rs_vals.push(rs);
                used.push(w);
            }
        }
    }
    let slope = slope(&pts).ok_or_else(|| EconError::Undefined("fewer than two usable windows".into()))?;
    let h = match method {
        HurstMethod::Classic => slope,
        HurstMethod::AnisLloyd => 0.5 + slope,
    };
    Ok(HurstEstimate { h, method, windows: used, rs: rs_vals })
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
    pub n_obs: usize,
    /// Finite-sample critical values at 1%, 5% and 10%.
    pub critical_values: [f64; 3],
    /// Unit root rejected at 5%.
    pub reject: bool,
}

// response-surface coefficients, constant-only model, one variable
const TAU_MAX: f64 = 2.74;
const TAU_MIN: f64 = -18.83;
const TAU_STAR: f64 = -1.61;
const SMALL_P: [f64; 3] = [2.1659, 1.4412, 0.038269];
const LARGE_P: [f64; 4] = [1.7339, 0.093202, -0.012745, -0.000_103_68];
const CRIT: [[f64; 3]; 3] = [[-3.43035, -6.5393, -16.786], [-2.86154, -2.8903, -4.234], [-2.56677, -1.5384, -2.809]];

/// Approximate p-value of the ADF τ statistic (constant, no trend).
pub fn adf_p_value(tau: f64) -> f64 {
    if tau > TAU_MAX {
        return 1.0;
    }
    if tau < TAU_MIN {
        return 0.0;
    }
    let coefs: &[f64] = if tau <= TAU_STAR { &SMALL_P } else { &LARGE_P };
    let z = coefs.iter().rev().fold(0.0, |acc, c| acc * tau + c);
    stats::norm_cdf(z)
}

pub fn adf_critical_values(n: usize) -> [f64; 3] {
    let t = n as f64;
    CRIT.map(|[b0, b1, b2]| b0 + b1 / t + b2 / (t * t))
}

/// Augmented Dickey-Fuller test with a constant. `max_lags = None` uses
/// `⌊12 (T/100)^{1/4}⌋`; the order is chosen by AIC on a common sample and
/// the regression is then refit on all usable rows.
pub fn adf_test(y: &[f64], max_lags: Option<usize>) -> Result<AdfResult, EconError> {
    let n = y.len();
    if n < 30 {
        return Err(EconError::InsufficientData(format!("{n} observations; need 30")));
    }
    let pmax = max_lags
        .unwrap_or_else(|| (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize)
        .min(n / 2 - 3);
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    if dy.iter().all(|d| *d == 0.0) {
        return Err(EconError::Undefined("series is constant".into()));
    }
    let fit = |p: usize, start: usize| {
        // rows t = start..dy.len(): Δy_t on 1, y_t, Δy_{t-1..t-p}
        let rows = dy.len() - start;
        let mut x = DMatrix::zeros(rows, p + 2);
        let mut resp = Vec::with_capacity(rows);
        for (r, t) in (start..dy.len()).enumerate() {
            x[(r, 0)] = 1.0;
            x[(r, 1)] = y[t];
            for i in 1..=p {
                x[(r, 1 + i)] = dy[t - i];
            }
            resp.push(dy[t]);
        }
        let mut names = vec!["const".to_string(), "lag_level".to_string()];
        names.extend((1..=p).map(|i| format!("ddiff_{i}")));
        ols_matrix(&resp, &x, names, CovType::Hc0)
    };
    let mut best = (f64::INFINITY, 0);
    for p in 0..=pmax {
        if let Ok(r) = fit(p, pmax) {
            let m = r.n_obs as f64;
            let aic = m * (r.rss / m).ln() + 2.0 * (p + 2) as f64;
            if aic < best.0 {
                best = (aic, p);
            }
        }
    }
    let p = best.1;
    let r = fit(p, p)?;
    let statistic = r.coefficients[1] / r.se_ols[1];
    let p_value = adf_p_value(statistic);
    let critical_values = adf_critical_values(r.n_obs);
    Ok(AdfResult { statistic, p_value, lags: p, n_obs: r.n_obs, critical_values, reject: statistic < critical_values[1] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpssResult {
    pub statistic: f64,
    /// Interpolated from the critical-value table and clipped to [0.01, 0.10].
    pub p_value: f64,
    pub bandwidth: usize,
    /// Level stationarity rejected at 5%.
    pub reject: bool,
}

const KPSS_CRIT: [(f64, f64); 4] = [(0.347, 0.10), (0.463, 0.05), (0.574, 0.025), (0.739, 0.01)];

pub fn kpss_p_value(stat: f64) -> f64 {
    if stat <= KPSS_CRIT[0].0 {
        return KPSS_CRIT[0].1;
    }
    for w in KPSS_CRIT.windows(2) {
        let ((c0, p0), (c1, p1)) = (w[0], w[1]);
        if stat <= c1 {
            return p0 + (stat - c0) / (c1 - c0) * (p1 - p0);
        }
    }
    KPSS_CRIT[3].1
}

/// Level-stationarity KPSS test with a Bartlett long-run variance.
/// `bandwidth = None` uses `⌊4 (T/100)^{1/4}⌋`.
pub fn kpss_test(y: &[f64], bandwidth: Option<usize>) -> Result<KpssResult, EconError> {
    let n = y.len();
    if n < 30 {
        return Err(EconError::InsufficientData(format!("{n} observations; need 30")));
    }
    let q = bandwidth.unwrap_or_else(|| (4.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize).min(n - 1);
    let m = stats::mean(y);
    let e: Vec<f64> = y.iter().map(|v| v - m).collect();
    let mut lrv: f64 = e.iter().map(|v| v * v).sum();
    for l in 1..=q {
        let w = 1.0 - l as f64 / (q + 1) as f64;
        let g: f64 = (l..n).map(|t| e[t] * e[t - l]).sum();
        lrv += 2.0 * w * g;
    }
    lrv /= n as f64;
    if !(lrv > 0.0) {
        return Err(EconError::Undefined("zero long-run variance".into()));
    }
    let mut s = 0.0;
    let mut ss = 0.0;
    for v in &e {
        s += v;
        ss += s * s;
    }
    let statistic = ss / ((n * n) as f64 * lrv);
    Ok(KpssResult { statistic, p_value: kpss_p_value(statistic), bandwidth: q, reject: statistic > KPSS_CRIT[1].0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adf_p_value_reference_points() {
        // the 5% asymptotic critical value maps close to 0.05
        assert!((adf_p_value(-2.86) - 0.05).abs() < 0.003);
        assert!((adf_p_value(-3.43) - 0.01).abs() < 0.003);
        assert_eq!(adf_p_value(3.0), 1.0);
        assert_eq!(adf_p_value(-20.0), 0.0);
    }

    #[test]
    fn kpss_p_interpolation() {
        assert_eq!(kpss_p_value(0.1), 0.10);
        assert_eq!(kpss_p_value(0.463), 0.05);
        assert!((kpss_p_value(0.5185) - 0.0375).abs() < 1e-12);
        assert_eq!(kpss_p_value(2.0), 0.01);
    }

    #[test]
    fn alternating_series_is_anti_persistent() {
        let xs: Vec<f64> = (0..1024).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let h = hurst_exponent(&xs, 8, 10, HurstMethod::AnisLloyd).unwrap();
        assert!(h.h < 0.3, "{}", h.h);
        let c = hurst_exponent(&xs, 8, 10, HurstMethod::Classic).unwrap();
        assert!(c.h < 0.3, "{}", c.h);
    }

    #[test]
    fn constant_and_short_series() {
        assert!(matches!(hurst_exponent(&[1.0; 200], 8, 10, HurstMethod::Classic), Err(EconError::Undefined(_))));
        assert!(hurst_exponent(&[1.0; 100], 8, 10, HurstMethod::Classic).is_err());
        assert!(adf_test(&[1.0; 10], None).is_err());
        assert!(kpss_test(&[1.0; 40], None).is_err());
    }

    #[test]
    fn expected_rs_regimes_join() {
        // the two branches of the small-sample factor agree near the switch
        let a = expected_rs(340);
        let b = expected_rs(341);
        assert!((a / b - 1.0).abs() < 0.01);
    }
}
