use crate::data::{Score, SimilarityMatrix};
use crate::error::{Error, Result};

/// One operating point: everything scoring `>= threshold` is accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub far: f64,
    pub tar: f64,
    pub threshold: f64,
}

/// ROC over all distinct finite thresholds, ordered by threshold descending.
/// MISSING scores are never accepted.
pub fn roc_curve(scores: &[(Score, bool)]) -> Result<Vec<RocPoint>> {
    let positives = scores.iter().filter(|(_, same)| *same).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Config(format!("ROC needs positives and negatives, got {positives} and {negatives}")));
    }
    let mut finite: Vec<(f64, bool)> = scores.iter().filter_map(|&(s, same)| s.map(|v| (v, same))).collect();
    finite.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < finite.len() {
        let threshold = finite[i].0;
        while i < finite.len() && finite[i].0 == threshold {
            if finite[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push(RocPoint { far: fp as f64 / negatives as f64, tar: tp as f64 / positives as f64, threshold });
    }
    Ok(curve)
}

/// Best TAR among operating points with `far <= far_target`; 0 when only the
/// empty acceptance set qualifies.
pub fn tar_at_far(curve: &[RocPoint], far_target: f64) -> f64 {
    curve.iter().filter(|p| p.far <= far_target).map(|p| p.tar).fold(0.0, f64::max)
}

/// Per-template subject labels for the rows and columns of a similarity matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectLabels {
    pub gallery: Vec<String>,
    pub probe: Vec<String>,
}

impl SubjectLabels {
    pub fn check(&self, m: &SimilarityMatrix) -> Result<()> {
        if self.gallery.len() != m.n_gallery() || self.probe.len() != m.n_probe() {
            return Err(Error::DimensionMismatch {
                expected: m.n_gallery() * m.n_probe(),
                found: self.gallery.len() * self.probe.len(),
            });
        }
        Ok(())
    }
}

/// Every gallery x probe cell as a verification pair.
pub fn matrix_pairs(m: &SimilarityMatrix, labels: &SubjectLabels) -> Result<Vec<(Score, bool)>> {
    labels.check(m)?;
    let mut out = Vec::with_capacity(m.n_gallery() * m.n_probe());
    for g in 0..m.n_gallery() {
        for p in 0..m.n_probe() {
            out.push((m.get(g, p), labels.gallery[g] == labels.probe[p]));
        }
    }
    Ok(out)
}

/// Scores for an explicit list of `(gallery_id, probe_id)` pairs.
pub fn listed_pairs(
    m: &SimilarityMatrix,
    labels: &SubjectLabels,
    pairs: &[(String, String)],
) -> Result<Vec<(Score, bool)>> {
    labels.check(m)?;
    let gpos =
        |id: &str| m.gallery_ids().iter().position(|g| g == id).ok_or_else(|| Error::UnknownTemplate(id.to_string()));
    let ppos =
        |id: &str| m.probe_ids().iter().position(|p| p == id).ok_or_else(|| Error::UnknownTemplate(id.to_string()));
    pairs
        .iter()
        .map(|(g, p)| {
            let (gi, pi) = (gpos(g)?, ppos(p)?);
            Ok((m.get(gi, pi), labels.gallery[gi] == labels.probe[pi]))
        })
        .collect()
}
