//! Local projections, Granger tests, mediation and the mechanism regressions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::ols::{ols, ols_matrix, CovType, RegressionResult};
use super::EconError;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub horizon: usize,
    pub beta: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub regression: RegressionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LocalProjections {
    pub horizons: Vec<Projection>,
    pub skipped: Vec<(usize, String)>,
}

/// `y_{t+h} = α_h + β_h x_t + γ_h·controls_t + e`, Newey-West errors with the
/// automatic lag, one regression per horizon.
pub fn local_projections(y: &[f64], x: &[f64], controls: &[(&str, &[f64])], horizons: &[usize]) -> Result<LocalProjections, EconError> {
    let n = y.len();
    if x.len() != n || controls.iter().any(|(_, c)| c.len() != n) {
        return Err(EconError::Invalid("y, x and controls must share a length".into()));
    }
    let mut out = LocalProjections::default();
    for &h in horizons {
        if h >= n {
            out.skipped.push((h, "horizon exhausts sample".into()));
            continue;
        }
        let m = n - h;
        let yy = &y[h..];
        let mut cols: Vec<(&str, &[f64])> = vec![("x", &x[..m])];
        cols.extend(controls.iter().map(|(name, c)| (*name, &c[..m])));
        match ols(yy, &cols, true, CovType::NeweyWest(None)) {
            Ok(r) => {
                let (beta, se) = (r.coefficients[1], r.se[1]);
                out.horizons.push(Projection { horizon: h, beta, se, ci_low: beta - 1.96 * se, ci_high: beta + 1.96 * se, regression: r });
            }
            Err(e @ (EconError::InsufficientData(_) | EconError::RankDeficient(_))) => out.skipped.push((h, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrangerLag {
    pub lag: usize,
    pub f_stat: f64,
    pub p_value: f64,
    pub df_num: usize,
    pub df_den: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    pub best_lag: usize,
    pub f_stat: f64,
    pub p_value: f64,
    pub per_lag: Vec<GrangerLag>,
    pub skipped: Vec<(usize, String)>,
}

/// Restricted-versus-unrestricted F test of `cause` lags in an autoregression
/// of `effect`, for each lag order `1..=max_lag`; the order with the smallest
/// p-value is reported.
pub fn granger_test(cause: &[f64], effect: &[f64], max_lag: usize) -> Result<GrangerResult, EconError> {
    let n = cause.len();
    if effect.len() != n {
        return Err(EconError::Invalid("cause and effect lengths differ".into()));
    }
    if max_lag == 0 || n <= 3 * max_lag {
        return Err(EconError::InsufficientData(format!("{n} observations for max lag {max_lag}")));
    }
    let mut per_lag = Vec::new();
    let mut skipped = Vec::new();
    for p in 1..=max_lag {
        let rows = n - p;
        let mut xu = DMatrix::zeros(rows, 1 + 2 * p);
        let mut resp = Vec::with_capacity(rows);
        for (r, t) in (p..n).enumerate() {
            xu[(r, 0)] = 1.0;
            for i in 1..=p {
                xu[(r, i)] = effect[t - i];
                xu[(r, p + i)] = cause[t - i];
            }
            resp.push(effect[t]);
        }
        let names: Vec<String> = (0..1 + 2 * p).map(|j| format!("x{j}")).collect();
        let xr = xu.columns(0, 1 + p).into_owned();
        let unres = ols_matrix(&resp, &xu, names.clone(), CovType::Hc0);
        let res = ols_matrix(&resp, &xr, names[..1 + p].to_vec(), CovType::Hc0);
        let (u, r) = match (unres, res) {
            (Ok(u), Ok(r)) => (u, r),
            (Err(e), _) | (_, Err(e)) => {
                skipped.push((p, e.to_string()));
                continue;
            }
        };
        let df_den = rows - (1 + 2 * p);
        if df_den == 0 || !(u.rss > 0.0) {
            skipped.push((p, "no residual degrees of freedom".into()));
            continue;
        }
        let f_stat = ((r.rss - u.rss) / p as f64) / (u.rss / df_den as f64);
        let dist = FisherSnedecor::new(p as f64, df_den as f64).map_err(|e| EconError::Invalid(e.to_string()))?;
        per_lag.push(GrangerLag { lag: p, f_stat, p_value: dist.sf(f_stat.max(0.0)), df_num: p, df_den });
    }
    let best = per_lag
        .iter()
        .min_by(|a, b| a.p_value.total_cmp(&b.p_value))
        .copied()
        .ok_or_else(|| EconError::Undefined("Granger test undefined at every lag".into()))?;
    Ok(GrangerResult { best_lag: best.lag, f_stat: best.f_stat, p_value: best.p_value, per_lag, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mediation {
    pub total: f64,
    pub a: f64,
    pub b: f64,
    pub direct: f64,
    pub indirect: f64,
    /// `100·a·b/τ`; missing when τ is exactly zero.
    pub percent_mediated: Option<f64>,
    /// τ is within two standard errors of zero or the share lies outside
    /// [0, 100] (suppression).
    pub unstable: bool,
    pub se_total: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub se_direct: f64,
    pub sobel_z: f64,
}

/// Three-regression mediation decomposition on a common sample with
/// classical standard errors.
pub fn mediation(x: &[f64], m: &[f64], y: &[f64]) -> Result<Mediation, EconError> {
    if x.len() != m.len() || x.len() != y.len() {
        return Err(EconError::Invalid("x, mediator and y lengths differ".into()));
    }
    let c = ols(y, &[("x", x)], true, CovType::Hc0)?;
    let am = ols(m, &[("x", x)], true, CovType::Hc0)?;
    let full = ols(y, &[("x", x), ("m", m)], true, CovType::Hc0)?;
    let (total, a, direct, b) = (c.coefficients[1], am.coefficients[1], full.coefficients[1], full.coefficients[2]);
    let indirect = a * b;
    let percent_mediated = (total != 0.0).then(|| 100.0 * indirect / total);
    let se_total = c.se_ols[1];
    let unstable = total.abs() < 2.0 * se_total || percent_mediated.is_none_or(|p| !(0.0..=100.0).contains(&p));
    let (se_a, se_b) = (am.se_ols[1], full.se_ols[2]);
    let sobel = (b * b * se_a * se_a + a * a * se_b * se_b).sqrt();
    Ok(Mediation {
        total,
        a,
        b,
        direct,
        indirect,
        percent_mediated,
        unstable,
        se_total,
        se_a,
        se_b,
        se_direct: full.se_ols[1],
        sobel_z: if sobel > 0.0 { indirect / sobel } else { f64::NAN },
    })
}

/// Daily inputs to the efficacy regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MechanismData {
    pub dates: Vec<i64>,
    /// Mean of signal × same-day return across stocks.
    pub efficacy: Vec<f64>,
    pub volume: Vec<f64>,
    /// Cross-sectional standard deviation of returns.
    pub volatility: Vec<f64>,
    pub turnover: Vec<f64>,
    /// Volume per unit volatility.
    pub depth: Vec<f64>,
    /// Herding indicator or intensity; optional.
    pub herding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismModel {
    pub name: String,
    pub result: Option<RegressionResult>,
    pub skipped: Option<String>,
}

fn zscore(v: &[f64]) -> Option<Vec<f64>> {
    let m = stats::mean(v);
    let s = stats::std_dev(v, 0);
    (s > 0.0 && s.is_finite()).then(|| v.iter().map(|x| (x - m) / s).collect())
}

/// Models 1–4 with HC3 errors on z-scored regressors: noise barrier
/// (volume, volatility), liquidity withdrawal (turnover, depth), combined,
/// and herding × liquidity interaction.
pub fn mechanism_regressions(d: &MechanismData) -> Vec<MechanismModel> {
    let series: [(&str, &[f64]); 4] = [("volume", &d.volume), ("volatility", &d.volatility), ("turnover", &d.turnover), ("depth", &d.depth)];
    let z: Vec<(&str, Option<Vec<f64>>)> = series.iter().map(|(n, v)| (*n, zscore(v))).collect();
    let get = |name: &str| z.iter().find(|(n, _)| *n == name).and_then(|(_, v)| v.clone());
    let run = |name: &str, cols: &[&str]| -> MechanismModel {
        let mut data = Vec::new();
        for c in cols {
            match get(c) {
                Some(v) => data.push((*c, v)),
                None => {
                    return MechanismModel { name: name.into(), result: None, skipped: Some(format!("proxy {c} missing or constant")) };
                }
            }
        }
        let refs: Vec<(&str, &[f64])> = data.iter().map(|(n, v)| (*n, v.as_slice())).collect();
        match ols(&d.efficacy, &refs, true, CovType::Hc3) {
            Ok(r) => MechanismModel { name: name.into(), result: Some(r), skipped: None },
            Err(e) => MechanismModel { name: name.into(), result: None, skipped: Some(e.to_string()) },
        }
    };
    let mut out = vec![
        run("noise_barrier", &["volume", "volatility"]),
        run("liquidity_withdrawal", &["turnover", "depth"]),
        run("combined", &["volume", "volatility", "turnover", "depth"]),
    ];
    let m4 = match (d.herding.as_ref().and_then(|h| zscore(h)), get("turnover")) {
        (Some(h), Some(l)) => {
            let inter: Vec<f64> = h.iter().zip(&l).map(|(a, b)| a * b).collect();
            let cols: [(&str, &[f64]); 3] = [("herding", &h), ("liquidity", &l), ("herding_x_liquidity", &inter)];
            match ols(&d.efficacy, &cols, true, CovType::Hc3) {
                Ok(r) => MechanismModel { name: "regime_interaction".into(), result: Some(r), skipped: None },
                Err(e) => MechanismModel { name: "regime_interaction".into(), result: None, skipped: Some(e.to_string()) },
            }
        }
        _ => MechanismModel { name: "regime_interaction".into(), result: None, skipped: Some("herding or liquidity proxy missing".into()) },
    };
    out.push(m4);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_single_horizon() {
        use rand::Rng;
        let mut rng = crate::stats::task_rng(3, 0, 0);
        let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut y = vec![0.0; 200];
        y[3..].copy_from_slice(&x[..197]);
        let lp = local_projections(&y, &x, &[], &[0, 3]).unwrap();
        let b3 = lp.horizons.iter().find(|p| p.horizon == 3).unwrap();
        assert!((b3.beta - 1.0).abs() < 1e-10);
        let b0 = lp.horizons.iter().find(|p| p.horizon == 0).unwrap();
        assert!(b0.beta.abs() < 0.2);
    }

    #[test]
    fn constant_cause_is_undefined() {
        let e: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
        assert!(matches!(granger_test(&[1.0; 60], &e, 3), Err(EconError::Undefined(_))));
    }

    #[test]
    fn full_mediation_chain() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin()).collect();
        let noise: Vec<f64> = (0..50).map(|i| 0.01 * (i as f64 * 2.3).cos()).collect();
        let m: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let med = mediation(&x, &m, &m).unwrap();
        assert!(med.direct.abs() < 1e-10);
        assert!((med.percent_mediated.unwrap() - 100.0).abs() < 1e-8);
        // x and m are nearly collinear here, so the identity only holds to conditioning
        assert!((med.total - (med.direct + med.indirect)).abs() < 1e-8);
    }
}
