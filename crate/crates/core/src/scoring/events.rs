use std::cmp::Ordering;

use super::errors::RegularitySeries;
use crate::error::{Error, Result};

/// A dip in regularity: nearby significant local minima merged around the deepest one.
#[derive(Clone, Debug, PartialEq)]
pub struct EventGroup {
    /// Frame index of the lowest-regularity member.
    pub representative: usize,
    /// Frame indices of all member minima, ascending.
    pub members: Vec<usize>,
    pub start: usize,
    pub end: usize,
    pub min_regularity: f64,
}

/// Orders positions by value, then by position, so every series has a strict order.
fn lower(values: &[f64], a: usize, b: usize) -> bool {
    match values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a < b,
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Interior local minima and their topological persistence, by position.
///
/// Sweeping values upward, each minimum starts a component; when two
/// components meet, the one with the higher minimum dies and its persistence
/// is the meeting height minus its own value. The global minimum never dies
/// and gets `f64::INFINITY`. Endpoints take part in the sweep but are not
/// reported.
pub fn local_minima_persistence(values: &[f64]) -> Vec<(usize, f64)> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        if a == b {
            Ordering::Equal
        } else if lower(values, a, b) {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    });

    let mut parent: Vec<usize> = (0..n).collect();
    // Root of each component -> position of its minimum.
    let mut birth: Vec<usize> = (0..n).collect();
    let mut active = vec![false; n];
    let mut persistence = vec![f64::INFINITY; n];
    let mut is_min = vec![false; n];

    for &i in &order {
        active[i] = true;
        let neighbours: Vec<usize> = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)]
            .into_iter()
            .flatten()
            .filter(|&j| active[j])
            .collect();
        if neighbours.is_empty() {
            is_min[i] = true;
            continue;
        }
        for j in neighbours {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri == rj {
                continue;
            }
            let (bi, bj) = (birth[ri], birth[rj]);
            let (elder, younger, root) = if lower(values, bi, bj) { (bi, bj, ri) } else { (bj, bi, rj) };
            if is_min[younger] && younger != i {
                persistence[younger] = values[i] - values[younger];
            }
            let other = if root == ri { rj } else { ri };
            parent[other] = root;
            birth[root] = elder;
        }
    }

    (1..n.saturating_sub(1))
        .filter(|&i| is_min[i])
        .map(|i| (i, persistence[i]))
        .collect()
}

/// Groups minima of `s_r` whose persistence is at least `persistence_threshold`.
///
/// Minima are taken deepest first; each joins the group whose representative
/// is nearest within `window` frames (the earlier one on a tie) or founds a
/// new group. Groups come back sorted by representative frame.
pub fn detect_events(series: &RegularitySeries, window: usize, persistence_threshold: f64) -> Result<Vec<EventGroup>> {
    if window == 0 {
        return Err(Error::Config("event window must be at least 1 frame".into()));
    }
    if series.frame_indices.len() != series.s_r.len() {
        return Err(Error::Input("frame indices and scores differ in length".into()));
    }
    if series.s_r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite regularity score".into()));
    }
    let s = &series.s_r;
    let mut minima: Vec<usize> = local_minima_persistence(s)
        .into_iter()
        .filter(|&(_, p)| p >= persistence_threshold)
        .map(|(i, _)| i)
        .collect();
    minima.sort_by(|&a, &b| if lower(s, a, b) { Ordering::Less } else { Ordering::Greater });

    let idx = &series.frame_indices;
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for m in minima {
        let nearest = groups
            .iter()
            .enumerate()
            .map(|(g, (rep, _))| (idx[m].abs_diff(idx[*rep]), idx[*rep], g))
            .filter(|&(d, _, _)| d <= window)
            .min();
        match nearest {
            Some((_, _, g)) => groups[g].1.push(m),
            None => groups.push((m, vec![m])),
        }
    }

    let mut events: Vec<EventGroup> = groups
        .into_iter()
        .map(|(rep, members)| {
            let mut frames: Vec<usize> = members.iter().map(|&m| idx[m]).collect();
            frames.sort_unstable();
            EventGroup {
                representative: idx[rep],
                start: frames[0],
                end: *frames.last().unwrap(),
                members: frames,
                min_regularity: s[rep],
            }
        })
        .collect();
    events.sort_by_key(|e| e.representative);
    Ok(events)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub true_detections: usize,
    pub false_alarms: usize,
    pub missed: usize,
}

/// Matches detected representative frames to inclusive ground-truth intervals.
///
/// Each interval absorbs at most one detection and the number of matched
/// intervals is maximized. A detection inside no interval is a false alarm;
/// surplus detections inside already matched intervals count as neither.
pub fn count_events(detections: &[usize], truth: &[(usize, usize)]) -> EventCounts {
    let mut intervals: Vec<(usize, usize)> = truth.to_vec();
    intervals.sort_by_key(|&(s, e)| (e, s));
    let mut points: Vec<usize> = detections.to_vec();
    points.sort_unstable();
    let mut used = vec![false; points.len()];
    let mut matched = 0;
    for (s, e) in &intervals {
        let from = points.partition_point(|p| p < s);
        if let Some(k) = (from..points.len()).take_while(|&k| points[k] <= *e).find(|&k| !used[k]) {
            used[k] = true;
            matched += 1;
        }
    }
    let false_alarms = points
        .iter()
        .filter(|&&p| !truth.iter().any(|&(s, e)| s <= p && p <= e))
        .count();
    EventCounts {
        true_detections: matched,
        false_alarms,
        missed: truth.len() - matched,
    }
}

/// Maximal runs of label 1 as inclusive `(first, last)` frame indices.
pub fn label_intervals(labels: &[u8], frame_indices: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (k, &l) in labels.iter().enumerate() {
        match (l != 0, open) {
            (true, None) => open = Some(frame_indices[k]),
            (false, Some(s)) => {
                out.push((s, frame_indices[k - 1]));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push((s, frame_indices[labels.len() - 1]));
    }
    out
}
