//! Small CSV formats used by the command-line tools.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::hawkes::{Direction, EventSeries};

use super::PipelineError;

/// Reads `time,direction` rows. The window starts at 0 and spans `span`, or
/// the ceiling of the last time when `span` is `None`.
pub fn read_events<R: Read>(source: R, span: Option<f64>) -> Result<EventSeries, PipelineError> {
    let mut rdr = csv::Reader::from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| PipelineError::Config(format!("events file lacks a `{name}` column")))
    };
    let (ti, di) = (col("time")?, col("direction")?);
    let mut rows: Vec<(f64, Direction)> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let t: f64 = rec
            .get(ti)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| PipelineError::Config(format!("events row {}: bad time", line + 2)))?;
        let d: Direction = rec.get(di).unwrap_or("").parse().map_err(PipelineError::Hawkes)?;
        rows.push((t, d));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let last = rows.last().map_or(0.0, |r| r.0);
    let span = span.unwrap_or_else(|| last.ceil().max(1.0));
    let (times, dirs) = rows.into_iter().unzip();
    Ok(EventSeries::new(times, dirs, 0.0, span)?)
}

pub fn write_events<W: Write>(events: &EventSeries, sink: W) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["time", "direction"])?;
    for (t, d) in events.times().iter().zip(events.directions()) {
        w.write_record([t.to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Numeric columns of a headed CSV. Empty cells and `NA` read as NaN.
pub fn read_table<R: Read>(source: R) -> Result<BTreeMap<String, Vec<f64>>, PipelineError> {
    let mut rdr = csv::Reader::from_reader(source);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (j, col) in cols.iter_mut().enumerate() {
            let cell = rec.get(j).unwrap_or("").trim();
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                cell.parse().map_err(|_| PipelineError::Config(format!("row {}: `{}` = {cell:?} is not numeric", line + 2, headers[j])))?
            };
            col.push(v);
        }
    }
    Ok(headers.into_iter().zip(cols).collect())
}

/// Looks up a column, naming the available ones on failure.
pub fn column<'a>(table: &'a BTreeMap<String, Vec<f64>>, name: &str) -> Result<&'a [f64], PipelineError> {
    table.get(name).map(Vec::as_slice).ok_or_else(|| {
        PipelineError::Config(format!("no column `{name}`; have {}", table.keys().cloned().collect::<Vec<_>>().join(", ")))
    })
}
