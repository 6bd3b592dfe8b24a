use std::cmp::Ordering;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    /// Frames scoring at or above this value are flagged; `+inf` flags nothing.
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocResult {
    /// From (0, 0) to (1, 1), one point per distinct score.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub eer: f64,
    /// Interpolated `(fpr, tpr)` where `fpr = 1 - tpr`.
    pub eer_point: (f64, f64),
}

/// Threshold sweep over every distinct score (higher means more anomalous).
pub fn roc_auc_eer(scores: &[f64], labels: &[u8]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(k) = labels.iter().position(|&l| l > 1) {
        return Err(Error::Input(format!("label {} at position {} is not 0 or 1", labels[k], k + 1)));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Input("non-finite score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Input(format!(
            "ROC needs both classes; got {pos} anomalous and {neg} normal frames"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        while k < order.len() && scores[order[k]] == threshold {
            if labels[order[k]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold,
            tpr: tp as f64 / pos as f64,
            fpr: fp as f64 / neg as f64,
        });
    }

    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();

    // g = fpr + tpr - 1 rises from -1 to 1 along the sweep.
    let g = |p: &RocPoint| p.fpr + p.tpr - 1.0;
    let mut eer_point = (1.0, 0.0);
    for w in points.windows(2) {
        let (g0, g1) = (g(&w[0]), g(&w[1]));
        if g0 == 0.0 {
            eer_point = (w[0].fpr, w[0].tpr);
            break;
        }
        if g0 < 0.0 && g1 >= 0.0 {
            let lambda = -g0 / (g1 - g0);
            eer_point = (
                w[0].fpr + lambda * (w[1].fpr - w[0].fpr),
                w[0].tpr + lambda * (w[1].tpr - w[0].tpr),
            );
            break;
        }
    }
    Ok(RocResult {
        points,
        auc,
        eer: eer_point.0,
        eer_point,
    })
}
