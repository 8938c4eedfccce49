//! Closed-set (CMC) and open-set (TPIR@FPIR) identification metrics.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::data::{Score, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::eval::SubjectLabels;

/// Gallery indices of one probe column, best first. Higher scores first,
/// MISSING last, ties by gallery index.
pub fn ranked_gallery(column: &[Score]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| match column[b].partial_cmp(&column[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    order
}

/// 1-based rank of the best-placed mate, or `None` when the probe cannot be
/// retrieved at all (no mate, or an all-MISSING column).
pub fn mate_rank(column: &[Score], is_mate: impl Fn(usize) -> bool) -> Option<usize> {
    if column.iter().all(Option::is_none) {
        return None;
    }
    ranked_gallery(column).into_iter().position(is_mate).map(|p| p + 1)
}

/// Rank-k accuracies for k = 1..=max_rank (capped at the gallery size).
///
/// Every probe subject must be enrolled in the gallery.
pub fn cmc_curve(m: &SimilarityMatrix, labels: &SubjectLabels, max_rank: usize) -> Result<Vec<f64>> {
    labels.check(m)?;
    if m.n_probe() == 0 {
        return Err(Error::Config("CMC needs at least one probe".into()));
    }
    let enrolled: HashSet<&str> = labels.gallery.iter().map(String::as_str).collect();
    let max_rank = max_rank.min(m.n_gallery());
    let mut hits = vec![0usize; max_rank];
    for p in 0..m.n_probe() {
        let subject = labels.probe[p].as_str();
        if !enrolled.contains(subject) {
            return Err(Error::Config(format!(
                "probe `{}` (subject `{subject}`) has no mate in the gallery",
                m.probe_ids()[p]
            )));
        }
        let col = m.column(p);
        if let Some(r) = mate_rank(&col, |g| labels.gallery[g] == subject) {
            for h in hits.iter_mut().skip(r - 1) {
                *h += 1;
            }
        }
    }
    Ok(hits.iter().map(|&h| h as f64 / m.n_probe() as f64).collect())
}

/// Accuracy at one rank from a curve returned by [`cmc_curve`].
pub fn rank_accuracy(curve: &[f64], rank: usize) -> f64 {
    if curve.is_empty() || rank == 0 {
        return 0.0;
    }
    curve[(rank - 1).min(curve.len() - 1)]
}

/// Open-set identification rates at each FPIR target.
///
/// Genuine probes have their subject in the gallery; the rest are impostors.
/// At threshold `t`, an impostor is a false alarm when its top score is `>= t`;
/// a genuine probe is a hit when its rank-1 candidate is a mate scoring `>= t`.
/// Each target reports the best TPIR among thresholds with FPIR `<=` target.
pub fn tpir_at_fpir(m: &SimilarityMatrix, labels: &SubjectLabels, fpir_targets: &[f64]) -> Result<Vec<f64>> {
    labels.check(m)?;
    let enrolled: HashSet<&str> = labels.gallery.iter().map(String::as_str).collect();
    let mut genuine_hits: Vec<f64> = Vec::new();
    let mut genuine = 0usize;
    let mut impostor_tops: Vec<Score> = Vec::new();
    for p in 0..m.n_probe() {
        let col = m.column(p);
        let subject = labels.probe[p].as_str();
        if enrolled.contains(subject) {
            genuine += 1;
            if mate_rank(&col, |g| labels.gallery[g] == subject) == Some(1) {
                let top = ranked_gallery(&col)[0];
                if let Some(s) = col[top] {
                    genuine_hits.push(s);
                }
            }
        } else {
            impostor_tops.push(col.iter().copied().max_by(|a, b| a.partial_cmp(b).unwrap()).flatten());
        }
    }
    if impostor_tops.is_empty() {
        return Err(Error::Config("no impostor probes: open-set metrics unavailable".into()));
    }
    if genuine == 0 {
        return Err(Error::Config("no genuine probes: open-set metrics unavailable".into()));
    }

    let mut events: Vec<(f64, bool)> =
        genuine_hits.iter().map(|&s| (s, true)).chain(impostor_tops.iter().flatten().map(|&s| (s, false))).collect();
    events.sort_by(|a, b| b.0.total_cmp(&a.0));
    // (fpir, tpir) at +inf and then at every distinct threshold
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            if events[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / impostor_tops.len() as f64, tp as f64 / genuine as f64));
    }
    Ok(fpir_targets
        .iter()
        .map(|&target| points.iter().filter(|(f, _)| *f <= target).map(|&(_, t)| t).fold(0.0, f64::max))
        .collect())
}
