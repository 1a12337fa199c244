//! Stock-day flow panel: ingestion, filtering and flow normalisation.
//!
//! A [`FlowPanel`] holds one row per (stock, trading day) with the close-to-close
//! log return, market capitalisation, traded value and the net flow (buys minus
//! sells) of each investor class. Rows are kept sorted by `(stock_id, date)`.
//!
//! The two normalisations are
//!
//! ```text
//! s_mc = net_flow / market_cap
//! s_tv = net_flow / total_volume
//! ```
//!
//! and the volatility adjustment divides each return by the population standard
//! deviation of the preceding `window` returns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("schema error: missing required column `{0}`")]
    MissingColumn(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("panel is empty after filtering")]
    EmptyAfterFilter,
    #[error("invalid panel: {0}")]
    Invalid(String),
}

/// Investor class whose net flow is recorded in the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Investor {
    Foreign,
    Institutional,
    Individual,
}

impl Investor {
    pub const ALL: [Investor; 3] = [Investor::Foreign, Investor::Institutional, Investor::Individual];

    pub fn index(self) -> usize {
        match self {
            Investor::Foreign => 0,
            Investor::Institutional => 1,
            Investor::Individual => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Investor::Foreign => "foreign",
            Investor::Institutional => "institutional",
            Investor::Individual => "individual",
        }
    }

    /// Default CSV column holding this investor's net flow.
    pub fn flow_column(self) -> &'static str {
        match self {
            Investor::Foreign => "flow_foreign",
            Investor::Institutional => "flow_institutional",
            Investor::Individual => "flow_individual",
        }
    }
}

impl fmt::Display for Investor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Investor {
    type Err = PanelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "foreign" | "flow_foreign" => Ok(Investor::Foreign),
            "institutional" | "flow_institutional" => Ok(Investor::Institutional),
            "individual" | "flow_individual" => Ok(Investor::Individual),
            other => Err(PanelError::InvalidParameter(format!("unknown investor `{other}`"))),
        }
    }
}

/// Flow normalisation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Net flow over market capitalisation.
    Mc,
    /// Net flow over total traded value.
    Tv,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Mc => "mc",
            Scheme::Tv => "tv",
        })
    }
}

impl FromStr for Scheme {
    type Err = PanelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mc" => Ok(Scheme::Mc),
            "tv" => Ok(Scheme::Tv),
            other => Err(PanelError::InvalidParameter(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    /// Trading-day ordinal supplied by the file.
    pub date: i64,
    pub stock_id: String,
    pub close_return: f64,
    pub market_cap: f64,
    pub total_volume: f64,
    /// Net flow indexed by [`Investor::index`].
    pub net_flow: [f64; 3],
    /// Optional close price, used only by the penny-stock filter.
    pub close_price: Option<f64>,
}

impl PanelRow {
    pub fn flow(&self, investor: Investor) -> f64 {
        self.net_flow[investor.index()]
    }
}

/// Validated panel sorted by `(stock_id, date)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowPanel {
    rows: Vec<PanelRow>,
}

impl FlowPanel {
    /// Sorts the rows and checks the panel invariants.
    pub fn new(mut rows: Vec<PanelRow>) -> Result<Self, PanelError> {
        rows.sort_by(|a, b| a.stock_id.cmp(&b.stock_id).then(a.date.cmp(&b.date)));
        for w in rows.windows(2) {
            if w[0].stock_id == w[1].stock_id && w[0].date == w[1].date {
                return Err(PanelError::Invalid(format!(
                    "duplicate row for stock {} on date {}",
                    w[0].stock_id, w[0].date
                )));
            }
        }
        for r in &rows {
            if !(r.market_cap > 0.0) || !(r.total_volume >= 0.0) {
                return Err(PanelError::Invalid(format!(
                    "stock {} date {}: market_cap must be > 0 and total_volume >= 0",
                    r.stock_id, r.date
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[PanelRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_rows(self) -> Vec<PanelRow> {
        self.rows
    }

    /// Contiguous per-stock slices in stock order.
    pub fn stock_slices(&self) -> Vec<(&str, &[PanelRow])> {
        group_slices(&self.rows, |r| r.stock_id.as_str())
    }

    pub fn stock_ids(&self) -> Vec<String> {
        self.stock_slices().into_iter().map(|(s, _)| s.to_string()).collect()
    }

    /// Sorted distinct trading days.
    pub fn dates(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.date).collect::<BTreeSet<_>>().into_iter().collect()
    }
}

pub(crate) fn group_slices<'a, T, F>(rows: &'a [T], key: F) -> Vec<(&'a str, &'a [T])>
where
    F: Fn(&'a T) -> &'a str,
{
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || key(&rows[i]) != key(&rows[start]) {
            if start < i {
                out.push((key(&rows[start]), &rows[start..i]));
            }
            start = i;
        }
    }
    out
}

/// Column names used by [`load_panel`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub date: String,
    pub stock_id: String,
    pub close_return: String,
    pub market_cap: String,
    pub total_volume: String,
    pub flow_foreign: String,
    pub flow_institutional: String,
    pub flow_individual: String,
    /// Optional price column; the penny-stock filter is skipped when absent.
    pub close_price: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            stock_id: "stock_id".into(),
            close_return: "close_return".into(),
            market_cap: "market_cap".into(),
            total_volume: "total_volume".into(),
            flow_foreign: "flow_foreign".into(),
            flow_institutional: "flow_institutional".into(),
            flow_individual: "flow_individual".into(),
            close_price: "close_price".into(),
        }
    }
}

/// Ingestion bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub accepted: usize,
    pub rejected: usize,
    /// Reject counts keyed by reason.
    pub reasons: BTreeMap<String, usize>,
}

impl LoadReport {
    fn reject(&mut self, reason: &str) {
        self.rejected += 1;
        *self.reasons.entry(reason.to_string()).or_default() += 1;
    }
}

/// Reads a panel CSV. Malformed rows are rejected and counted, never repaired.
pub fn load_panel<R: Read>(source: R, schema: &Schema) -> Result<(FlowPanel, LoadReport), PanelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize, PanelError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    };
    let i_date = col(&schema.date)?;
    let i_stock = col(&schema.stock_id)?;
    let i_ret = col(&schema.close_return)?;
    let i_cap = col(&schema.market_cap)?;
    let i_vol = col(&schema.total_volume)?;
    let i_flows = [col(&schema.flow_foreign)?, col(&schema.flow_institutional)?, col(&schema.flow_individual)?];
    let i_price = headers.iter().position(|h| h == schema.close_price);

    let mut report = LoadReport::default();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(_) => {
                report.reject("malformed_record");
                continue;
            }
        };
        let num = |i: usize| -> Option<f64> {
            let s = record.get(i)?;
            if s.is_empty() {
                return None;
            }
            s.parse::<f64>().ok().filter(|v| v.is_finite())
        };
        let date = match record.get(i_date).and_then(|s| s.parse::<i64>().ok()) {
            Some(d) => d,
            None => {
                report.reject("unparseable_date");
                continue;
            }
        };
        let stock_id = match record.get(i_stock) {
            Some(s) if !s.is_empty() => s.to_string(),
            _ => {
                report.reject("missing_stock_id");
                continue;
            }
        };
        let (Some(ret), Some(cap), Some(vol)) = (num(i_ret), num(i_cap), num(i_vol)) else {
            report.reject("unparseable_numeric");
            continue;
        };
        let flows: Vec<Option<f64>> = i_flows.iter().map(|&i| num(i)).collect();
        if flows.iter().any(Option::is_none) {
            report.reject("unparseable_numeric");
            continue;
        }
        if cap <= 0.0 {
            report.reject("market_cap_nonpositive");
            continue;
        }
        if vol < 0.0 {
            report.reject("total_volume_negative");
            continue;
        }
        let close_price = match i_price {
            Some(i) => match record.get(i) {
                Some(s) if !s.is_empty() => match s.parse::<f64>() {
                    Ok(p) if p.is_finite() => Some(p),
                    _ => {
                        report.reject("unparseable_numeric");
                        continue;
                    }
                },
                _ => None,
            },
            None => None,
        };
        rows.push(PanelRow {
            date,
            stock_id,
            close_return: ret,
            market_cap: cap,
            total_volume: vol,
            net_flow: [flows[0].unwrap(), flows[1].unwrap(), flows[2].unwrap()],
            close_price,
        });
    }

    rows.sort_by(|a, b| a.stock_id.cmp(&b.stock_id).then(a.date.cmp(&b.date)));
    let before = rows.len();
    rows.dedup_by(|b, a| a.stock_id == b.stock_id && a.date == b.date);
    for _ in rows.len()..before {
        report.reject("duplicate_stock_date");
    }
    report.accepted = rows.len();
    Ok((FlowPanel { rows }, report))
}

/// Writes the panel in the ingest schema. `f64` values use the shortest
/// representation that parses back to the identical bits.
pub fn write_panel<W: Write>(panel: &FlowPanel, sink: W) -> Result<(), PanelError> {
    let with_price = panel.rows.iter().any(|r| r.close_price.is_some());
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![
        "date",
        "stock_id",
        "close_return",
        "market_cap",
        "total_volume",
        "flow_foreign",
        "flow_institutional",
        "flow_individual",
    ];
    if with_price {
        header.push("close_price");
    }
    w.write_record(&header)?;
    for r in &panel.rows {
        let mut rec = vec![
            r.date.to_string(),
            r.stock_id.clone(),
            r.close_return.to_string(),
            r.market_cap.to_string(),
            r.total_volume.to_string(),
            r.net_flow[0].to_string(),
            r.net_flow[1].to_string(),
            r.net_flow[2].to_string(),
        ];
        if with_price {
            rec.push(r.close_price.map(|p| p.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterReport {
    pub dropped_below_floor: usize,
    /// Rows without a price column value, retained unchecked.
    pub unpriced: usize,
    pub clipped_low: usize,
    pub clipped_high: usize,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
}

/// Drops sub-floor rows, then clips returns to the pooled
/// `[q(tail), q(1 - tail)]` order-statistic quantiles.
pub fn apply_filters(
    panel: &FlowPanel,
    price_floor: f64,
    winsor_tail: f64,
) -> Result<(FlowPanel, FilterReport), PanelError> {
    if !(0.0..0.5).contains(&winsor_tail) {
        return Err(PanelError::InvalidParameter(format!("winsor_tail {winsor_tail} outside [0, 0.5)")));
    }
    let mut report = FilterReport::default();
    let mut rows: Vec<PanelRow> = Vec::with_capacity(panel.len());
    for r in &panel.rows {
        match r.close_price {
            Some(p) if p < price_floor => report.dropped_below_floor += 1,
            Some(_) => rows.push(r.clone()),
            None => {
                report.unpriced += 1;
                rows.push(r.clone());
            }
        }
    }
    if rows.is_empty() {
        return Err(PanelError::EmptyAfterFilter);
    }
    if winsor_tail > 0.0 {
        let mut sorted: Vec<f64> = rows.iter().map(|r| r.close_return).collect();
        sorted.sort_by(f64::total_cmp);
        let lo = stats::nearest_rank_quantile_sorted(&sorted, winsor_tail);
        let hi = stats::nearest_rank_quantile_sorted(&sorted, 1.0 - winsor_tail);
        for r in &mut rows {
            if r.close_return < lo {
                r.close_return = lo;
                report.clipped_low += 1;
            } else if r.close_return > hi {
                r.close_return = hi;
                report.clipped_high += 1;
            }
        }
        report.lower_bound = Some(lo);
        report.upper_bound = Some(hi);
    }
    Ok((FlowPanel { rows }, report))
}

/// Per-row normalised signal for one investor class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalRow {
    pub date: i64,
    pub stock_id: String,
    pub ret: f64,
    /// Value under the selected scheme.
    pub signal: f64,
    pub s_mc: f64,
    /// `None` when total volume is zero.
    pub s_tv: Option<f64>,
    pub market_cap: f64,
    pub total_volume: f64,
    pub sigma_roll: Option<f64>,
    pub r_adj: Option<f64>,
    /// Cross-sectional z-score of `signal`, when standardised.
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedSignal {
    pub investor: Investor,
    pub scheme: Scheme,
    pub rows: Vec<SignalRow>,
    /// Rows excluded for a zero denominator.
    pub excluded: usize,
    pub warnings: Vec<String>,
}

impl NormalizedSignal {
    pub fn stock_slices(&self) -> Vec<(&str, &[SignalRow])> {
        group_slices(&self.rows, |r| r.stock_id.as_str())
    }

    pub fn n_stocks(&self) -> usize {
        self.stock_slices().len()
    }

    /// Cross-sectional mean of `f(row)` per day, in date order.
    pub fn daily_mean<F: Fn(&SignalRow) -> Option<f64>>(&self, f: F) -> Vec<(i64, f64)> {
        let mut acc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            if let Some(v) = f(r) {
                let e = acc.entry(r.date).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
        acc.into_iter().map(|(d, (s, n))| (d, s / n as f64)).collect()
    }
}

/// Divides each investor flow by the scheme's denominator. Under `Tv`, rows with
/// zero traded value are excluded and counted.
pub fn normalize(panel: &FlowPanel, investor: Investor, scheme: Scheme) -> NormalizedSignal {
    let mut rows = Vec::with_capacity(panel.len());
    let mut excluded = 0;
    for r in panel.rows() {
        let flow = r.flow(investor);
        let s_mc = flow / r.market_cap;
        let s_tv = (r.total_volume > 0.0).then(|| flow / r.total_volume);
        let signal = match scheme {
            Scheme::Mc => s_mc,
            Scheme::Tv => match s_tv {
                Some(v) => v,
                None => {
                    excluded += 1;
                    continue;
                }
            },
        };
        rows.push(SignalRow {
            date: r.date,
            stock_id: r.stock_id.clone(),
            ret: r.close_return,
            signal,
            s_mc,
            s_tv,
            market_cap: r.market_cap,
            total_volume: r.total_volume,
            sigma_roll: None,
            r_adj: None,
            z: None,
        });
    }
    let mut warnings = Vec::new();
    if excluded > 0 {
        warnings.push(format!("{excluded} rows excluded for zero total volume"));
    }
    NormalizedSignal { investor, scheme, rows, excluded, warnings }
}

/// Rolling population standard deviation of the `window` returns preceding each
/// position; `None` until `min_obs` prior returns exist.
pub fn rolling_volatility(returns: &[f64], window: usize, min_obs: usize) -> Result<Vec<Option<f64>>, PanelError> {
    if min_obs < 2 || window < min_obs {
        return Err(PanelError::InvalidParameter(format!(
            "need window >= min_obs >= 2, got window {window}, min_obs {min_obs}"
        )));
    }
    Ok((0..returns.len())
        .map(|t| {
            let start = t.saturating_sub(window);
            let prior = &returns[start..t];
            (prior.len() >= min_obs).then(|| {
                // exact zero for a flat window; the mean of equal values can be off by an ulp
                if prior.iter().all(|x| *x == prior[0]) {
                    0.0
                } else {
                    stats::variance(prior, 0).sqrt()
                }
            })
        })
        .collect())
}

/// Fills `sigma_roll` and `r_adj` per stock. A zero rolling volatility leaves
/// `r_adj` missing rather than infinite.
pub fn rolling_vol_adjust(
    signal: &NormalizedSignal,
    window: usize,
    min_obs: usize,
) -> Result<NormalizedSignal, PanelError> {
    let mut out = signal.clone();
    let mut start = 0;
    for (_, rows) in signal.stock_slices() {
        let rets: Vec<f64> = rows.iter().map(|r| r.ret).collect();
        let vols = rolling_volatility(&rets, window, min_obs)?;
        for (k, vol) in vols.into_iter().enumerate() {
            let row = &mut out.rows[start + k];
            row.sigma_roll = vol;
            row.r_adj = vol.filter(|v| *v > 0.0).map(|v| row.ret / v);
        }
        start += rows.len();
    }
    Ok(out)
}

/// Z-scores `signal` across stocks within each day (population standard
/// deviation). Days with fewer than two stocks or zero dispersion are skipped.
pub fn cross_sectional_standardize(signal: &NormalizedSignal) -> NormalizedSignal {
    let mut out = signal.clone();
    let mut by_day: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, r) in signal.rows.iter().enumerate() {
        by_day.entry(r.date).or_default().push(i);
    }
    let mut single = 0;
    let mut flat = 0;
    for idx in by_day.values() {
        if idx.len() < 2 {
            single += 1;
            continue;
        }
        let vals: Vec<f64> = idx.iter().map(|&i| signal.rows[i].signal).collect();
        let m = stats::mean(&vals);
        let sd = stats::std_dev(&vals, 0);
        if !(sd > 0.0) {
            flat += 1;
            continue;
        }
        for &i in idx {
            out.rows[i].z = Some((signal.rows[i].signal - m) / sd);
        }
    }
    if single > 0 {
        out.warnings.push(format!("{single} single-stock days skipped in cross-sectional standardisation"));
    }
    if flat > 0 {
        out.warnings.push(format!("{flat} zero-dispersion days skipped in cross-sectional standardisation"));
    }
    out
}

/// Writes normalised rows as CSV (ingest columns plus the derived ones).
pub fn write_signal_csv<W: Write>(signal: &NormalizedSignal, sink: W) -> Result<(), PanelError> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "date",
        "stock_id",
        "close_return",
        "market_cap",
        "total_volume",
        "investor",
        "scheme",
        "signal",
        "s_mc",
        "s_tv",
        "sigma_roll",
        "r_adj",
        "z",
    ])?;
    for r in &signal.rows {
        w.write_record([
            r.date.to_string(),
            r.stock_id.clone(),
            r.ret.to_string(),
            r.market_cap.to_string(),
            r.total_volume.to_string(),
            signal.investor.to_string(),
            signal.scheme.to_string(),
            r.signal.to_string(),
            r.s_mc.to_string(),
            opt(r.s_tv),
            opt(r.sigma_roll),
            opt(r.r_adj),
            opt(r.z),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "date,stock_id,close_return,market_cap,total_volume,flow_foreign,flow_institutional,flow_individual\n";

    fn load(body: &str) -> (FlowPanel, LoadReport) {
        load_panel(format!("{HEADER}{body}").as_bytes(), &Schema::default()).unwrap()
    }

    fn row(stock: &str, date: i64, ret: f64) -> PanelRow {
        PanelRow {
            date,
            stock_id: stock.into(),
            close_return: ret,
            market_cap: 1000.0,
            total_volume: 50.0,
            net_flow: [1.0, -2.0, 1.0],
            close_price: None,
        }
    }

    #[test]
    fn three_rows_no_rejects() {
        let (p, rep) = load("1,A,0.01,100,10,1,2,3\n2,A,0.02,100,10,1,2,3\n1,B,0.0,50,5,0,0,0\n");
        assert_eq!(p.len(), 3);
        assert_eq!(rep.rejected, 0);
        assert_eq!(rep.accepted, 3);
    }

    #[test]
    fn zero_market_cap_rejected() {
        let (p, rep) = load("1,A,0.01,0,10,1,2,3\n2,A,0.02,100,10,1,2,3\n");
        assert_eq!(p.len(), 1);
        assert_eq!(rep.rejected, 1);
        assert_eq!(rep.reasons["market_cap_nonpositive"], 1);
    }

    #[test]
    fn blank_flow_rejects_row_but_explicit_zero_is_kept() {
        let (p, rep) = load("1,A,0.01,100,10,,2,3\n2,A,0.02,100,10,0,2,3\n3,A,x,100,10,0,2,3\n");
        assert_eq!(p.len(), 1);
        assert_eq!(rep.rejected, 2);
        assert_eq!(p.rows()[0].net_flow[0], 0.0);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = load_panel("date,stock_id\n1,A\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, PanelError::MissingColumn(c) if c == "close_return"));
    }

    #[test]
    fn duplicate_stock_date_rejected() {
        let (p, rep) = load("1,A,0.01,100,10,1,2,3\n1,A,0.02,100,10,1,2,3\n");
        assert_eq!(p.len(), 1);
        assert_eq!(rep.reasons["duplicate_stock_date"], 1);
    }

    #[test]
    fn shuffled_input_matches_sorted_input() {
        let sorted = "1,A,0.01,100,10,1,2,3\n2,A,0.02,100,10,1,2,3\n1,B,0.03,50,5,0,1,0\n2,B,0.04,50,5,0,1,0\n";
        let shuffled = "2,B,0.04,50,5,0,1,0\n1,A,0.01,100,10,1,2,3\n2,A,0.02,100,10,1,2,3\n1,B,0.03,50,5,0,1,0\n";
        assert_eq!(load(sorted).0, load(shuffled).0);
    }

    #[test]
    fn winsorisation_replaces_extremes_with_quantiles() {
        let rows: Vec<_> = [-1.0, 0.0, 0.0, 0.0, 1.0].iter().enumerate().map(|(i, &r)| row("A", i as i64, r)).collect();
        let panel = FlowPanel::new(rows).unwrap();
        let (out, rep) = apply_filters(&panel, 0.0, 0.2).unwrap();
        let rets: Vec<f64> = out.rows().iter().map(|r| r.close_return).collect();
        assert_eq!(rets, vec![0.0; 5]);
        assert_eq!((rep.clipped_low, rep.clipped_high), (1, 1));
    }

    #[test]
    fn zero_tail_is_identity() {
        let rows: Vec<_> = [-1.0, 0.3, 2.0].iter().enumerate().map(|(i, &r)| row("A", i as i64, r)).collect();
        let panel = FlowPanel::new(rows).unwrap();
        assert_eq!(apply_filters(&panel, 0.0, 0.0).unwrap().0, panel);
    }

    #[test]
    fn price_floor_drops_rows_and_empty_is_reported() {
        let mut a = row("A", 0, 0.0);
        a.close_price = Some(500.0);
        let mut b = row("A", 1, 0.0);
        b.close_price = Some(1500.0);
        let panel = FlowPanel::new(vec![a.clone(), b]).unwrap();
        let (out, rep) = apply_filters(&panel, 1000.0, 0.005).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(rep.dropped_below_floor, 1);
        let only_cheap = FlowPanel::new(vec![a]).unwrap();
        assert!(matches!(apply_filters(&only_cheap, 1000.0, 0.0), Err(PanelError::EmptyAfterFilter)));
    }

    #[test]
    fn bad_tail_rejected() {
        let panel = FlowPanel::new(vec![row("A", 0, 0.0)]).unwrap();
        assert!(apply_filters(&panel, 0.0, 0.5).is_err());
    }

    #[test]
    fn normalisation_divides_by_denominator() {
        let mut r = row("A", 0, 0.0);
        r.market_cap = 10_000.0;
        r.net_flow = [10.0, 0.0, 0.0];
        let panel = FlowPanel::new(vec![r]).unwrap();
        let s = normalize(&panel, Investor::Foreign, Scheme::Mc);
        assert_eq!(s.rows[0].signal, 0.001);
        let z = normalize(&panel, Investor::Institutional, Scheme::Tv);
        assert_eq!(z.rows[0].signal, 0.0);
        assert_eq!(z.rows[0].s_mc, 0.0);
    }

    #[test]
    fn zero_volume_excluded_under_tv_only() {
        let mut r = row("A", 0, 0.0);
        r.total_volume = 0.0;
        let panel = FlowPanel::new(vec![r, row("A", 1, 0.0)]).unwrap();
        let tv = normalize(&panel, Investor::Foreign, Scheme::Tv);
        assert_eq!((tv.rows.len(), tv.excluded), (1, 1));
        let mc = normalize(&panel, Investor::Foreign, Scheme::Mc);
        assert_eq!((mc.rows.len(), mc.excluded), (2, 0));
    }

    #[test]
    fn constant_returns_leave_adjusted_missing() {
        let vols = rolling_volatility(&[0.01; 30], 20, 10).unwrap();
        assert!(vols[..10].iter().all(Option::is_none));
        assert_eq!(vols[10], Some(0.0));
        let rows: Vec<_> = (0..30).map(|i| row("A", i, 0.01)).collect();
        let sig = normalize(&FlowPanel::new(rows).unwrap(), Investor::Foreign, Scheme::Mc);
        let adj = rolling_vol_adjust(&sig, 20, 10).unwrap();
        assert!(adj.rows.iter().all(|r| r.r_adj.is_none()));
    }

    #[test]
    fn nine_prior_observations_is_below_threshold() {
        let rets: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let vols = rolling_volatility(&rets, 20, 10).unwrap();
        assert!(vols[9].is_none());
        assert!(vols[10].is_some());
    }

    #[test]
    fn rolling_window_uses_population_form() {
        let rets = [1.0, 3.0, 1.0, 3.0, 100.0];
        let vols = rolling_volatility(&rets, 4, 2).unwrap();
        assert_eq!(vols[4], Some(1.0));
        assert!(rolling_volatility(&rets, 4, 1).is_err());
    }

    #[test]
    fn three_point_day_zscores() {
        let rows: Vec<_> = ["A", "B", "C"]
            .iter()
            .zip([1.0, 2.0, 3.0])
            .map(|(s, f)| {
                let mut r = row(s, 0, 0.0);
                r.market_cap = 1.0;
                r.net_flow = [f, 0.0, 0.0];
                r
            })
            .collect();
        let sig = normalize(&FlowPanel::new(rows).unwrap(), Investor::Foreign, Scheme::Mc);
        let z: Vec<f64> = cross_sectional_standardize(&sig).rows.iter().map(|r| r.z.unwrap()).collect();
        assert!((z[0] + 1.224744871391589).abs() < 1e-12);
        assert!(z[1].abs() < 1e-15);
        assert!((z[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn constant_and_single_stock_days_skipped() {
        let rows = vec![row("A", 0, 0.0), row("B", 0, 0.0), row("A", 1, 0.0)];
        let sig = normalize(&FlowPanel::new(rows).unwrap(), Investor::Foreign, Scheme::Mc);
        let z = cross_sectional_standardize(&sig);
        assert!(z.rows.iter().all(|r| r.z.is_none()));
        assert_eq!(z.warnings.len(), 2);
    }
}
