//! Reconstruction error, regularity scores, ROC analysis and event detection.

mod errors;
mod events;
mod io;
mod roc;

pub use errors::{frame_errors, regularity, regularity_indexed, NormalizationMode, Reconstructor, RegularitySeries};
pub use events::{count_events, detect_events, label_intervals, local_minima_persistence, EventCounts, EventGroup};
pub use io::{read_metrics, read_scores, write_events, write_metrics, write_scores, Metrics, ScoringConfig};
pub use roc::{roc_auc_eer, RocPoint, RocResult};

use crate::error::{Error, Result};

/// Frame-level ROC on `s_a` plus event detection on `s_r` and its counts
/// against the labelled anomaly intervals.
pub fn evaluate(series: &RegularitySeries, labels: &[u8], cfg: &ScoringConfig) -> Result<(Metrics, Vec<EventGroup>)> {
    if labels.len() != series.len() {
        return Err(Error::Input(format!(
            "{} labels for {} scored frames",
            labels.len(),
            series.len()
        )));
    }
    let roc = roc_auc_eer(&series.s_a, labels)?;
    let events = detect_events(series, cfg.window, cfg.persistence_threshold)?;
    let reps: Vec<usize> = events.iter().map(|e| e.representative).collect();
    let counts = count_events(&reps, &label_intervals(labels, &series.frame_indices));
    Ok((
        Metrics::new(roc.auc, roc.eer, counts, cfg.persistence_threshold, cfg.window),
        events,
    ))
}
