use std::path::Path;

use serde::{Deserialize, Serialize};

use super::errors::{RegularitySeries, NormalizationMode};
use super::events::{EventCounts, EventGroup};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    frame_index: usize,
    e: f64,
    s_a: f64,
    s_r: f64,
    label: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    representative_frame: usize,
    start: usize,
    end: usize,
    min_regularity: f64,
}

/// One-row evaluation summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub eer: f64,
    pub true_detections: usize,
    pub false_alarms: usize,
    pub missed: usize,
    pub persistence_threshold: f64,
    pub window: usize,
}

impl Metrics {
    pub fn new(auc: f64, eer: f64, counts: EventCounts, persistence_threshold: f64, window: usize) -> Self {
        Metrics {
            auc,
            eer,
            true_detections: counts.true_detections,
            false_alarms: counts.false_alarms,
            missed: counts.missed,
            persistence_threshold,
            window,
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Input(format!("{}: {e}", path.display()))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// `frame_index,e,s_a,s_r,label`; the label column is left empty when unknown.
pub fn write_scores(path: &Path, series: &RegularitySeries, labels: Option<&[u8]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != series.len() {
            return Err(Error::Input(format!(
                "{} labels for {} scored frames",
                l.len(),
                series.len()
            )));
        }
    }
    write_rows(
        path,
        (0..series.len()).map(|k| ScoreRow {
            frame_index: series.frame_indices[k],
            e: series.e[k],
            s_a: series.s_a[k],
            s_r: series.s_r[k],
            label: labels.map(|l| l[k]),
        }),
    )
}

/// Reads a score CSV back; labels are returned only if every row has one.
pub fn read_scores(path: &Path) -> Result<(RegularitySeries, Option<Vec<u8>>)> {
    let rows: Vec<ScoreRow> = read_rows(path)?;
    if rows.is_empty() {
        return Err(Error::Input(format!("{}: no score rows", path.display())));
    }
    for w in rows.windows(2) {
        if w[1].frame_index <= w[0].frame_index {
            return Err(Error::Input(format!(
                "{}: frame_index {} follows {}",
                path.display(),
                w[1].frame_index,
                w[0].frame_index
            )));
        }
    }
    let labels: Option<Vec<u8>> = rows.iter().map(|r| r.label).collect();
    let series = RegularitySeries {
        frame_indices: rows.iter().map(|r| r.frame_index).collect(),
        e: rows.iter().map(|r| r.e).collect(),
        s_a: rows.iter().map(|r| r.s_a).collect(),
        s_r: rows.iter().map(|r| r.s_r).collect(),
        warnings: Vec::new(),
    };
    Ok((series, labels))
}

/// `representative_frame,start,end,min_regularity`
pub fn write_events(path: &Path, events: &[EventGroup]) -> Result<()> {
    write_rows(
        path,
        events.iter().map(|e| EventRow {
            representative_frame: e.representative,
            start: e.start,
            end: e.end,
            min_regularity: e.min_regularity,
        }),
    )
}

pub fn write_metrics(path: &Path, metrics: &Metrics) -> Result<()> {
    write_rows(path, std::iter::once(metrics))
}

pub fn read_metrics(path: &Path) -> Result<Metrics> {
    let mut rows: Vec<Metrics> = read_rows(path)?;
    if rows.len() != 1 {
        return Err(Error::Input(format!("{}: expected one metrics row", path.display())));
    }
    Ok(rows.remove(0))
}

/// Options controlling normalization and event grouping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub normalization: NormalizationMode,
    pub persistence_threshold: f64,
    /// Minima within this many frames of a group's representative join it.
    pub window: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            normalization: NormalizationMode::AsWritten,
            persistence_threshold: 0.1,
            window: 50,
        }
    }
}
