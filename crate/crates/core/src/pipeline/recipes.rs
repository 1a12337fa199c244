//! One function per recipe; each returns the JSON block for the report.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use crate::deconv::{self, GroupKernel, PooledConfig, Regularizer, SignalColumn};
use crate::econometrics::{self, HurstMethod, MechanismData, Split};
use crate::epr::{self, EprConfig};
use crate::hawkes::{self, BootstrapConfig, YearSegment};
use crate::memory;
use crate::panel::{Investor, Scheme};
use crate::stats;

use super::context::{Context, HIGH, NORMAL};
use super::PipelineError;

/// Recipe names in execution order for `all`.
pub const RECIPES: [&str; 13] = [
    "global_kernels",
    "regime_breakdown",
    "quintiles",
    "hawkes_criticality",
    "epr",
    "memory",
    "mechanism",
    "lp",
    "mediation",
    "early_warning",
    "tscv",
    "threshold_sweep",
    "normalization_robustness",
];

pub fn run(name: &str, ctx: &mut Context) -> Result<Value, PipelineError> {
    match name {
        "global_kernels" => global_kernels(ctx),
        "regime_breakdown" => regime_breakdown(ctx),
        "quintiles" => quintiles(ctx),
        "hawkes_criticality" => hawkes_criticality(ctx),
        "epr" => epr_table(ctx),
        "memory" => memory_table(ctx),
        "mechanism" => mechanism(ctx),
        "lp" => lp(ctx),
        "mediation" => mediation(ctx),
        "early_warning" => early_warning(ctx),
        "tscv" => tscv(ctx),
        "threshold_sweep" => threshold_sweep(ctx),
        "normalization_robustness" => normalization_robustness(ctx),
        other => Err(PipelineError::UnknownRecipe(other.to_string())),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report blocks serialise")
}

fn seed_for(ctx: &Context, stream: u64, index: u64) -> u64 {
    stats::derive_seed(ctx.cfg.seed, stream, index)
}

fn pooled_config(ctx: &Context, settings: deconv::DeconvSettings) -> PooledConfig {
    let k = &ctx.cfg.deconv;
    PooledConfig { n_stocks: k.n_stocks, n_iter: k.n_iter, seed: seed_for(ctx, 0x61, 0), settings }
}

fn global_kernels(ctx: &mut Context) -> Result<Value, PipelineError> {
    let regs = ctx.cfg.deconv.regularizers();
    let scheme = ctx.cfg.scheme;
    let mut kernels = BTreeMap::new();
    let mut robustness = BTreeMap::new();
    for inv in ctx.cfg.investors.clone() {
        let pc = pooled_config(ctx, ctx.default_settings());
        let sig = ctx.signal(inv, scheme)?;
        let fits = deconv::pooled_kernels(sig, &pc, &regs)?;
        let main = &fits[0];
        kernels.insert(
            inv.name(),
            json!({
                "kernel": to_value(&main.kernel),
                "cumulative": main.kernel.cumulative(),
                "iteration_totals": main.iteration_totals,
                "stocks_per_iteration": main.stocks_per_iteration,
                "warnings": main.warnings,
            }),
        );
        let mut methods = BTreeMap::new();
        for f in &fits {
            methods.insert(
                f.kernel.regularizer.name(),
                json!({
                    "regularizer": to_value(&f.kernel.regularizer),
                    "coefficients": f.kernel.coefficients,
                    "total_impact": f.kernel.total_impact,
                    "se_total": f.kernel.se_total,
                }),
            );
        }
        let mut pairs = BTreeMap::new();
        let mut min_corr = f64::INFINITY;
        for i in 0..fits.len() {
            for j in i + 1..fits.len() {
                let cmp = deconv::compare_kernels(&fits[i].kernel, &fits[j].kernel)?;
                if let Some(r) = cmp.correlation {
                    min_corr = min_corr.min(r);
                }
                pairs.insert(format!("{}~{}", fits[i].kernel.regularizer.name(), fits[j].kernel.regularizer.name()), to_value(&cmp));
            }
        }
        let totals: Vec<f64> = fits.iter().map(|f| f.kernel.total_impact).collect();
        let (lo, hi) = totals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(*t), b.max(*t)));
        let rel_spread = if totals[0] != 0.0 { Some((hi - lo) / totals[0].abs()) } else { None };
        robustness.insert(
            inv.name(),
            json!({
                "methods": methods,
                "pairs": pairs,
                "min_correlation": min_corr.is_finite().then_some(min_corr),
                "total_spread_relative": rel_spread,
            }),
        );
    }
    Ok(json!({ "scheme": scheme.to_string(), "investors": kernels, "regularizer_robustness": robustness }))
}

fn regime_label(ctx: &Context, surge: &super::context::SurgeState, date: i64) -> Option<String> {
    let d = ctx.day_of(date)?;
    Some(if surge.is_high(d) { HIGH } else { NORMAL }.to_string())
}

fn regime_summary(ctx: &Context, surge: &super::context::SurgeState) -> Value {
    let r = &surge.regimes;
    json!({
        "percentile": r.percentile,
        "threshold": r.threshold,
        "n_days": ctx.n_days(),
        "n_high": r.n_high(),
        "high_share": r.n_high() as f64 / ctx.n_days().max(1) as f64,
        "warnings": r.warnings,
    })
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(a), Some(b)) if b != 0.0 => Some(a / b),
        _ => None,
    }
}

fn group_total(groups: &BTreeMap<String, GroupKernel>, key: &str) -> Option<f64> {
    groups.get(key).map(|g| g.kernel.total_impact)
}

/// Herding/normal institutional-style impact ratio for one regime labelling.
fn regime_kernels(
    ctx: &mut Context,
    surge: &super::context::SurgeState,
    investor: Investor,
    scheme: Scheme,
    signal: SignalColumn,
) -> Result<deconv::ConditionalKernels, PipelineError> {
    let labels: BTreeMap<i64, String> =
        ctx.data.dates.iter().filter_map(|d| regime_label(ctx, surge, *d).map(|l| (*d, l))).collect();
    let settings = ctx.settings(Regularizer::Tikhonov { lambda: ctx.cfg.deconv.lambda }, signal);
    let aggregation = ctx.cfg.deconv.aggregation;
    let sig = ctx.signal(investor, scheme)?;
    Ok(deconv::conditional_kernel(sig, |_, date| labels.get(&date).cloned(), aggregation, &settings)?)
}

fn regime_breakdown(ctx: &mut Context) -> Result<Value, PipelineError> {
    let surge = ctx.surge()?;
    let mut investors = BTreeMap::new();
    for inv in ctx.cfg.investors.clone() {
        let ck = regime_kernels(ctx, &surge, inv, ctx.cfg.scheme, SignalColumn::Raw)?;
        let cmp = match (ck.groups.get(HIGH), ck.groups.get(NORMAL)) {
            (Some(h), Some(n)) => Some(deconv::compare_kernels(&h.kernel, &n.kernel)?),
            _ => None,
        };
        let mut groups = BTreeMap::new();
        for (k, g) in &ck.groups {
            groups.insert(
                k.clone(),
                json!({
                    "kernel": to_value(&g.kernel),
                    "cumulative": g.kernel.cumulative(),
                    "n_rows": g.n_rows,
                    "n_stocks": g.n_stocks,
                }),
            );
        }
        investors.insert(
            inv.name(),
            json!({
                "groups": groups,
                "impact_ratio": ratio(group_total(&ck.groups, HIGH), group_total(&ck.groups, NORMAL)),
                "comparison": cmp.map(|c| to_value(&c)),
                "skipped": ck.skipped,
                "warnings": ck.warnings,
            }),
        );
    }
    let intensity: Vec<Value> = ctx
        .data
        .dates
        .iter()
        .enumerate()
        .map(|(i, d)| json!([d, surge.regimes.intensity.get(i), surge.is_high(i)]))
        .collect();
    Ok(json!({
        "fit": to_value(&surge.fit),
        "regimes": regime_summary(ctx, &surge),
        "investors": investors,
        "intensity": intensity,
    }))
}

fn quintiles(ctx: &mut Context) -> Result<Value, PipelineError> {
    let surge = ctx.surge()?;
    let nq = ctx.cfg.deconv.n_quintiles;
    let inv = ctx.cfg.deconv.quintile_investor;
    // size bucket by each stock's mean market cap
    let mut caps: Vec<(String, f64)> = ctx
        .data
        .panel
        .stock_slices()
        .into_iter()
        .map(|(id, rows)| (id.to_string(), rows.iter().map(|r| r.market_cap).sum::<f64>() / rows.len() as f64))
        .collect();
    caps.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let n = caps.len();
    let bucket: BTreeMap<String, usize> = caps.iter().enumerate().map(|(rank, (id, _))| (id.clone(), rank * nq / n + 1)).collect();
    let labels: BTreeMap<i64, bool> = ctx.data.dates.iter().enumerate().map(|(i, d)| (*d, surge.is_high(i))).collect();
    let settings = ctx.default_settings();
    let aggregation = ctx.cfg.deconv.aggregation;
    let sig = ctx.signal(inv, ctx.cfg.scheme)?;
    let ck = deconv::conditional_kernel(
        sig,
        |stock, date| {
            let q = bucket.get(stock)?;
            let high = labels.get(&date)?;
            Some(format!("Q{q}:{}", if *high { HIGH } else { NORMAL }))
        },
        aggregation,
        &settings,
    )?;
    let mut rows = Vec::new();
    for q in 1..=nq {
        let key = |r: &str| format!("Q{q}:{r}");
        let normal = ck.groups.get(&key(NORMAL));
        let high = ck.groups.get(&key(HIGH));
        rows.push(json!({
            "quintile": q,
            "n_stocks": bucket.values().filter(|b| **b == q).count(),
            "normal_total": normal.map(|g| g.kernel.total_impact),
            "herding_total": high.map(|g| g.kernel.total_impact),
            "ratio": ratio(high.map(|g| g.kernel.total_impact), normal.map(|g| g.kernel.total_impact)),
            "normal_rows": normal.map(|g| g.n_rows),
            "herding_rows": high.map(|g| g.n_rows),
        }));
    }
    let groups: BTreeMap<&String, Value> = ck.groups.iter().map(|(k, g)| (k, to_value(g))).collect();
    Ok(json!({
        "investor": inv.name(),
        "table": rows,
        "groups": groups,
        "skipped": ck.skipped,
        "warnings": ck.warnings,
    }))
}

fn diagnostics_of(series: &[f64], min_window: usize) -> Value {
    let hurst = econometrics::hurst_exponent(series, min_window, 20, HurstMethod::AnisLloyd);
    let adf = econometrics::adf_test(series, None);
    let kpss = econometrics::kpss_test(series, None);
    let wrap = |r: Result<Value, econometrics::EconError>| match r {
        Ok(v) => v,
        Err(e) => json!({ "error": e.to_string() }),
    };
    json!({
        "hurst": wrap(hurst.map(|h| to_value(&h))),
        "adf": wrap(adf.map(|a| to_value(&a))),
        "kpss": wrap(kpss.map(|k| to_value(&k))),
    })
}

fn hawkes_criticality(ctx: &mut Context) -> Result<Value, PipelineError> {
    let surge = ctx.surge()?;
    let h = ctx.cfg.hawkes.clone();
    let ev = &surge.extraction.events;
    let constrained = hawkes::fit(ev, &ctx.fit_options(true))?;
    let unconstrained = hawkes::fit(ev, &ctx.fit_options(false));
    let boot_cfg = BootstrapConfig {
        n_boot: h.n_boot,
        seed: seed_for(ctx, 0xB0, 0),
        fit: ctx.fit_options(h.constrained),
        scheme: h.bootstrap,
        ..BootstrapConfig::default()
    };
    let bootstrap = hawkes::bootstrap_branching(ev, &boot_cfg);
    let n_days = ctx.n_days();
    let segments: Vec<YearSegment> = (0..n_days.div_ceil(h.year_length))
        .map(|y| YearSegment {
            year: y as i32,
            start: (y * h.year_length) as f64,
            end: ((y + 1) * h.year_length).min(n_days) as f64,
        })
        .collect();
    let trend = hawkes::yearly_trend(ev, &segments, &ctx.fit_options(h.constrained))?;
    let steady = hawkes::steady_state_intensity(surge.fit.mu, surge.fit.branching_ratio).ok();
    let err = |e: hawkes::HawkesError| json!({ "error": e.to_string() });
    Ok(json!({
        "aggregate_investor": h.investor.name(),
        "events": {
            "n_events": ev.len(),
            "n_buy": ev.n_buy(),
            "n_sell": ev.n_sell(),
            "sell_share": (!ev.is_empty()).then(|| ev.n_sell() as f64 / ev.len() as f64),
            "empirical_rate": ev.len() as f64 / n_days.max(1) as f64,
            "threshold_sigma": h.threshold_sigma,
            "aggregate_mean": surge.extraction.mean,
            "aggregate_std": surge.extraction.std,
            "warnings": surge.extraction.warnings,
        },
        "fit": to_value(&surge.fit),
        "constrained": to_value(&constrained),
        "unconstrained": unconstrained.map(|f| to_value(&f)).unwrap_or_else(err),
        "steady_state_intensity": steady,
        "bootstrap": bootstrap.map(|b| to_value(&b)).unwrap_or_else(err),
        "regimes": regime_summary(ctx, &surge),
        "intensity_diagnostics": diagnostics_of(&surge.regimes.intensity, ctx.cfg.diagnostics.hurst_min_window),
        "yearly_trend": to_value(&trend),
    }))
}

fn epr_table(ctx: &mut Context) -> Result<Value, PipelineError> {
    let ret = ctx.market_return();
    let e = ctx.cfg.epr.clone();
    let mut out = BTreeMap::new();
    for inv in ctx.cfg.investors.clone() {
        let flow = ctx.aggregate(inv, ctx.cfg.scheme)?;
        let cfg = EprConfig {
            scheme: e.scheme,
            n_shuffles: e.shuffles,
            n_boot: e.boot,
            block: e.block,
            seed: seed_for(ctx, 0xE9, inv.index() as u64),
        };
        out.insert(inv.name(), to_value(&epr::analyze(&flow, &ret, &cfg)?));
    }
    Ok(json!({ "investors": out }))
}

fn memory_table(ctx: &mut Context) -> Result<Value, PipelineError> {
    let m = ctx.cfg.memory.clone();
    let k = ctx.cfg.hawkes.threshold_sigma;
    let n_days = ctx.n_days();
    let mut out = BTreeMap::new();
    for inv in ctx.cfg.investors.clone() {
        let agg = ctx.aggregate(inv, ctx.cfg.scheme)?;
        let ex = hawkes::extract_events(&agg, k)?;
        let (beta, fit_status, fit) = match hawkes::fit(&ex.events, &ctx.fit_options(false)) {
            Ok(f) if f.branching_ratio < 1.0 => (Some(f.beta), "ok".to_string(), Some(f)),
            Ok(f) => (None, format!("explosive: unconstrained branching ratio {:.3}", f.branching_ratio), Some(f)),
            Err(e) => (None, format!("failed: {e}"), None),
        };
        let block = match memory::memory_profile(&ex.events, beta, n_days, m.horizon, m.lift) {
            Ok(p) => json!({ "n_events": ex.events.len(), "fit": fit, "fit_status": fit_status, "profile": to_value(&p) }),
            Err(e) => json!({ "n_events": ex.events.len(), "fit": fit, "fit_status": fit_status, "error": e.to_string() }),
        };
        out.insert(inv.name(), block);
    }
    Ok(json!({ "investors": out }))
}

fn mechanism(ctx: &mut Context) -> Result<Value, PipelineError> {
    let inv = ctx.cfg.hawkes.impact_investor;
    let efficacy = ctx.efficacy(inv)?;
    let volatility = ctx.return_dispersion();
    let traded = ctx.daily_mean(|r| Some(r.total_volume));
    let volume: Vec<f64> = traded.iter().map(|v| v.ln()).collect();
    let turnover = ctx.daily_mean(|r| (r.market_cap > 0.0).then(|| r.total_volume / r.market_cap));
    let depth: Vec<f64> = traded.iter().zip(&volatility).map(|(v, s)| if *s > 0.0 { v / s } else { f64::NAN }).collect();
    let herding = ctx.surge().ok().map(|s| s.regimes.intensity);
    let keep: Vec<usize> = (0..ctx.n_days()).filter(|&i| depth[i].is_finite() && volume[i].is_finite() && turnover[i].is_finite()).collect();
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let data = MechanismData {
        dates: keep.iter().map(|&i| ctx.data.dates[i]).collect(),
        efficacy: pick(&efficacy),
        volume: pick(&volume),
        volatility: pick(&volatility),
        turnover: pick(&turnover),
        depth: pick(&depth),
        herding: herding.as_deref().map(pick),
    };
    let models = econometrics::mechanism_regressions(&data);
    Ok(json!({ "investor": inv.name(), "n_days": data.dates.len(), "models": to_value(&models) }))
}

fn herding_intensity(ctx: &mut Context) -> Result<Vec<f64>, PipelineError> {
    Ok(ctx.surge()?.regimes.intensity)
}

fn lp(ctx: &mut Context) -> Result<Value, PipelineError> {
    let x = herding_intensity(ctx)?;
    let y = ctx.market_return();
    let spread = ctx.spread_proxy();
    let horizons: Vec<usize> = (0..ctx.cfg.diagnostics.lp_horizons).collect();
    let res = econometrics::local_projections(&y, &x, &[("spread_proxy", &spread)], &horizons)?;
    let irf: Vec<Value> = res.horizons.iter().map(|p| json!([p.horizon, p.beta, p.se, p.ci_low, p.ci_high])).collect();
    Ok(json!({
        "y": "market_return",
        "x": "herding_intensity",
        "controls": ["spread_proxy"],
        "irf_columns": ["horizon", "beta", "se", "ci_low", "ci_high"],
        "irf": irf,
        "skipped": res.skipped,
    }))
}

fn mediation(ctx: &mut Context) -> Result<Value, PipelineError> {
    let x = herding_intensity(ctx)?;
    let m = ctx.spread_proxy();
    let inv = ctx.cfg.hawkes.impact_investor;
    let y = ctx.efficacy(inv)?;
    let res = econometrics::mediation(&x, &m, &y)?;
    Ok(json!({ "x": "herding_intensity", "mediator": "spread_proxy", "y": format!("{}_efficacy", inv.name()), "result": to_value(&res) }))
}

/// `true` on days where the daily efficacy series turns from positive to
/// non-positive.
pub fn regime_flips(impact: &[f64]) -> Vec<bool> {
    let mut out = vec![false; impact.len()];
    for t in 1..impact.len() {
        out[t] = impact[t - 1] > 0.0 && impact[t] <= 0.0;
    }
    out
}

fn early_warning(ctx: &mut Context) -> Result<Value, PipelineError> {
    let g = ctx.cfg.diagnostics.clone();
    let flow = ctx.aggregate(ctx.cfg.hawkes.investor, Scheme::Tv)?;
    let ws = econometrics::early_warning(&flow, g.warning_window)?;
    let impact = ctx.efficacy(ctx.cfg.hawkes.impact_investor)?;
    let flips = regime_flips(&impact);
    let start = ws.composite.iter().position(Option::is_some).unwrap_or(flips.len());
    let effect: Vec<f64> = flips[start..].iter().map(|f| if *f { 1.0 } else { 0.0 }).collect();
    let mut granger = BTreeMap::new();
    for (name, series) in [("composite", &ws.composite), ("acf", &ws.acf), ("variance", &ws.variance)] {
        let cause: Vec<f64> = series[start..].iter().map(|v| v.unwrap_or(0.0)).collect();
        let r = econometrics::granger_test(&cause, &effect, g.granger_max_lag);
        granger.insert(name, r.map(|r| to_value(&r)).unwrap_or_else(|e| json!({ "error": e.to_string() })));
    }
    let mut roc = Vec::new();
    for lead in &g.roc_leads {
        roc.push(match econometrics::roc_auc(&ws.composite, &flips, *lead) {
            Ok(r) => to_value(&r),
            Err(e) => json!({ "lead": lead, "error": e.to_string() }),
        });
    }
    Ok(json!({
        "flow": format!("{}_tv_aggregate", ctx.cfg.hawkes.investor.name()),
        "window": g.warning_window,
        "n_flips": flips.iter().filter(|f| **f).count(),
        "granger": granger,
        "roc": roc,
    }))
}

/// Expanding splits cut at 60/80/90% of the sample dates.
pub fn default_splits(dates: &[i64]) -> Vec<Split> {
    if dates.len() < 10 {
        return Vec::new();
    }
    let at = |f: f64| dates[((dates.len() as f64 * f) as usize).min(dates.len() - 1)];
    let last = dates[dates.len() - 1];
    vec![
        Split::forward(dates[0], at(0.6), at(0.8)),
        Split::forward(dates[0], at(0.8), at(0.9)),
        Split::forward(dates[0], at(0.9), last),
    ]
}

fn tscv(ctx: &mut Context) -> Result<Value, PipelineError> {
    let splits = if ctx.cfg.diagnostics.tscv_splits.is_empty() {
        default_splits(&ctx.data.dates)
    } else {
        ctx.cfg.diagnostics.tscv_splits.clone()
    };
    if splits.is_empty() {
        return Err(PipelineError::Upstream("too few dates for default splits".into()));
    }
    let settings = ctx.default_settings();
    let mut out = BTreeMap::new();
    for inv in ctx.cfg.investors.clone() {
        let sig = ctx.signal(inv, ctx.cfg.scheme)?;
        let res = econometrics::ts_cross_validate(sig, &splits, &settings)?;
        let valid: Vec<f64> = res.iter().filter_map(|r| r.r_squared).collect();
        out.insert(
            inv.name(),
            json!({
                "splits": to_value(&res),
                "mean_r_squared": (valid.len() == res.len() && !valid.is_empty()).then(|| stats::mean(&valid)),
            }),
        );
    }
    Ok(json!({ "investors": out }))
}

fn threshold_sweep(ctx: &mut Context) -> Result<Value, PipelineError> {
    let h = ctx.cfg.hawkes.clone();
    let agg = ctx.aggregate(h.investor, ctx.cfg.scheme)?;
    let mut rows = hawkes::threshold_sweep(&agg, &h.sweep, &ctx.fit_options(h.constrained))?;
    for row in &mut rows {
        if row.fit.is_none() {
            continue;
        }
        let surge = ctx.surge_at(row.threshold)?;
        let ck = regime_kernels(ctx, &surge, h.impact_investor, ctx.cfg.scheme, SignalColumn::Raw)?;
        row.impact_ratio = ratio(group_total(&ck.groups, HIGH), group_total(&ck.groups, NORMAL));
    }
    Ok(json!({ "impact_investor": h.impact_investor.name(), "rows": to_value(&rows) }))
}

fn normalization_robustness(ctx: &mut Context) -> Result<Value, PipelineError> {
    let settings = ctx.settings(Regularizer::Tikhonov { lambda: ctx.cfg.deconv.lambda }, SignalColumn::CrossSectionalZ);
    let pc = pooled_config(ctx, settings);
    let mut global = BTreeMap::new();
    for inv in ctx.cfg.investors.clone() {
        let mc = deconv::pooled_kernel(ctx.signal(inv, Scheme::Mc)?, &pc)?;
        let tv = deconv::pooled_kernel(ctx.signal(inv, Scheme::Tv)?, &pc)?;
        let cmp = deconv::compare_kernels(&mc.kernel, &tv.kernel)?;
        global.insert(
            inv.name(),
            json!({
                "mc": to_value(&mc.kernel),
                "tv": to_value(&tv.kernel),
                "comparison": to_value(&cmp),
            }),
        );
    }
    let inv = ctx.cfg.hawkes.impact_investor;
    let regime = match ctx.surge() {
        Ok(surge) => {
            let mut by_scheme = BTreeMap::new();
            for scheme in [Scheme::Mc, Scheme::Tv] {
                let ck = regime_kernels(ctx, &surge, inv, scheme, SignalColumn::CrossSectionalZ)?;
                let (n, hgh) = (group_total(&ck.groups, NORMAL), group_total(&ck.groups, HIGH));
                by_scheme.insert(
                    scheme.to_string(),
                    json!({ "normal_total": n, "herding_total": hgh, "ratio": ratio(hgh, n), "skipped": ck.skipped }),
                );
            }
            json!({ "investor": inv.name(), "schemes": by_scheme })
        }
        Err(e) => json!({ "error": e.to_string() }),
    };
    Ok(json!({ "global": global, "regime": regime }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flips_mark_positive_to_negative() {
        assert_eq!(regime_flips(&[1.0, -1.0, -2.0, 3.0, 0.0]), vec![false, true, false, false, true]);
    }

    #[test]
    fn default_splits_expand() {
        let dates: Vec<i64> = (0..100).collect();
        let s = default_splits(&dates);
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].train_end, 60);
        assert_eq!(s[0].test_start, 61);
        assert_eq!(s[2].test_end, 99);
        assert!(s.windows(2).all(|w| w[0].train_end < w[1].train_end));
    }
}
