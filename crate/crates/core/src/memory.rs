//! Clustering and memory statistics of surge event times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hawkes::EventSeries;
use crate::stats;

pub const DEFAULT_HORIZON: usize = 20;
pub const DEFAULT_LIFT: f64 = 1.5;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("no events")]
    NoEvents,
    #[error("need at least {need} events, have {have}")]
    TooFewEvents { have: usize, need: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clusters {
    /// Half-open event-index ranges `[start, end)`.
    pub ranges: Vec<(usize, usize)>,
    pub sizes: Vec<usize>,
    pub mean_size: f64,
    pub max_size: usize,
    pub fraction_isolated: f64,
}

/// Greedy left-to-right grouping: a gap larger than `timescale` opens a new
/// cluster.
pub fn cluster_events(events: &EventSeries, timescale: f64) -> Result<Clusters, MemoryError> {
    if !(timescale >= 0.0) {
        return Err(MemoryError::InvalidParameter(format!("timescale {timescale}")));
    }
    let t = events.times();
    if t.is_empty() {
        return Err(MemoryError::NoEvents);
    }
    let mut ranges = Vec::new();
    let mut start = 0;
    for i in 1..t.len() {
        if t[i] - t[i - 1] > timescale {
            ranges.push((start, i));
            start = i;
        }
    }
    ranges.push((start, t.len()));
    let sizes: Vec<usize> = ranges.iter().map(|(a, b)| b - a).collect();
    let isolated = sizes.iter().filter(|s| **s == 1).count();
    Ok(Clusters {
        mean_size: t.len() as f64 / sizes.len() as f64,
        max_size: sizes.iter().copied().max().unwrap_or(0),
        fraction_isolated: isolated as f64 / sizes.len() as f64,
        sizes,
        ranges,
    })
}

/// Inter-event gaps.
pub fn gaps(events: &EventSeries) -> Vec<f64> {
    events.times().windows(2).map(|w| w[1] - w[0]).collect()
}

/// `sd/mean` of the `N − 1` gaps, sample standard deviation.
pub fn gap_cv(events: &EventSeries) -> Result<f64, MemoryError> {
    if events.len() < 3 {
        return Err(MemoryError::TooFewEvents { have: events.len(), need: 3 });
    }
    let g = gaps(events);
    let m = stats::mean(&g);
    if !(m > 0.0) {
        return Err(MemoryError::InvalidParameter("zero mean gap".into()));
    }
    Ok(stats::std_dev(&g, 1) / m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalProfile {
    /// Entry `k − 1` is `P(surge day t + k | surge day t)`.
    pub conditional_prob: Vec<f64>,
    pub baseline: f64,
    pub memory_depth: usize,
    /// Depth equals the horizon, so the true depth may be longer.
    pub censored: bool,
    pub surge_days: usize,
}

/// Daily surge indicator: day `d` (counted from the series origin) is 1 when
/// any event falls in `[d, d + 1)`.
pub fn daily_indicator(events: &EventSeries, span_days: usize) -> Vec<bool> {
    let mut ind = vec![false; span_days];
    for t in events.times() {
        let d = (t - events.origin()).floor();
        if d >= 0.0 && (d as usize) < span_days {
            ind[d as usize] = true;
        }
    }
    ind
}

pub fn conditional_profile(events: &EventSeries, span_days: usize, horizon: usize, lift: f64) -> Result<ConditionalProfile, MemoryError> {
    profile_from_indicator(&daily_indicator(events, span_days), horizon, lift)
}

pub fn profile_from_indicator(ind: &[bool], horizon: usize, lift: f64) -> Result<ConditionalProfile, MemoryError> {
    let surge_days = ind.iter().filter(|x| **x).count();
    if surge_days == 0 {
        return Err(MemoryError::NoEvents);
    }
    let baseline = surge_days as f64 / ind.len() as f64;
    let conditional_prob: Vec<f64> = (1..=horizon)
        .map(|k| {
            let (mut hits, mut base) = (0usize, 0usize);
            for t in 0..ind.len().saturating_sub(k) {
                if ind[t] {
                    base += 1;
                    hits += usize::from(ind[t + k]);
                }
            }
            if base == 0 {
                0.0
            } else {
                hits as f64 / base as f64
            }
        })
        .collect();
    let memory_depth = conditional_prob.iter().filter(|p| **p > lift * baseline).count();
    Ok(ConditionalProfile { conditional_prob, baseline, memory_depth, censored: horizon > 0 && memory_depth == horizon, surge_days })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimescaleSource {
    HawkesFit,
    MedianGapFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryProfile {
    pub timescale: f64,
    pub timescale_source: TimescaleSource,
    pub clusters: Clusters,
    pub gap_cv: Option<f64>,
    pub profile: ConditionalProfile,
    pub notes: Vec<String>,
}

/// Full profile. `beta` is the fitted decay rate; when it is missing (fit
/// failed) the median gap stands in for `1/β`.
pub fn memory_profile(events: &EventSeries, beta: Option<f64>, span_days: usize, horizon: usize, lift: f64) -> Result<MemoryProfile, MemoryError> {
    let mut notes = Vec::new();
    let (timescale, timescale_source) = match beta.filter(|b| *b > 0.0 && b.is_finite()) {
        Some(b) => (1.0 / b, TimescaleSource::HawkesFit),
        None => {
            let g = gaps(events);
            notes.push("Hawkes fit unavailable; median gap used as timescale".to_string());
            (if g.is_empty() { 0.0 } else { stats::median(&g) }, TimescaleSource::MedianGapFallback)
        }
    };
    let clusters = cluster_events(events, timescale)?;
    let cv = match gap_cv(events) {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("gap CV unavailable: {e}"));
            None
        }
    };
    let profile = conditional_profile(events, span_days, horizon, lift)?;
    if profile.censored {
        notes.push(format!("memory depth reaches the horizon {horizon}; depth is censored"));
    }
    Ok(MemoryProfile { timescale, timescale_source, clusters, gap_cv: cv, profile, notes })
}
