use crate::assoc::hungarian::assign_gated;
use crate::assoc::{overlap_ratio, AssocConfig, BoundingBox, Detection, Tracklet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    /// Assigned to a high-confidence active tracklet.
    Local,
    /// Assigned to a low-confidence active tracklet.
    Global,
    /// Joined to a terminated tracklet; the engine starts a new fragment under its identity.
    Relink,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkMatch {
    pub detection: usize,
    pub tracklet: usize,
    pub kind: LinkKind,
    pub affinity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkResult {
    /// Sorted by detection index.
    pub matches: Vec<LinkMatch>,
    pub unmatched: Vec<usize>,
}

impl LinkResult {
    pub fn match_for(&self, detection: usize) -> Option<&LinkMatch> {
        self.matches.iter().find(|m| m.detection == detection)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    (aa > 0.0 && bb > 0.0).then(|| ab / (aa.sqrt() * bb.sqrt()))
}

/// Overlap blended with appearance cosine when both sides carry a vector.
pub fn affinity(det: &Detection, tracked: &BoundingBox, appearance: Option<&[f64]>, cfg: &AssocConfig) -> f64 {
    let overlap = overlap_ratio(&det.bbox, tracked).unwrap_or(0.0);
    let cos = match (det.appearance.as_deref(), appearance) {
        (Some(a), Some(b)) => cosine(a, b),
        _ => None,
    };
    match cos {
        Some(c) => cfg.overlap_weight * overlap + cfg.appearance_weight * c,
        None => overlap,
    }
}

fn assign(
    tracklets: &[Tracklet],
    cand: &[usize],
    boxes: &[Detection],
    dets: &[usize],
    cfg: &AssocConfig,
    allowed: impl Fn(usize, f64) -> bool,
) -> Vec<(usize, usize, f64)> {
    if cand.is_empty() || dets.is_empty() {
        return Vec::new();
    }
    let aff: Vec<Vec<f64>> = dets
        .iter()
        .map(|&d| {
            cand.iter()
                .map(|&t| {
                    let tr = &tracklets[t];
                    affinity(&boxes[d], tr.current_box(), tr.appearance.as_deref(), cfg)
                })
                .collect()
        })
        .collect();
    assign_gated(&aff, |i, j| allowed(cand[j], aff[i][j]))
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (dets[i], cand[j], aff[i][j])))
        .collect()
}

/// Two-stage linking. Stage 1 assigns boxes to high-confidence tracklets
/// (local), then the remaining boxes to low-confidence and recently terminated
/// tracklets (global). Stage 2 updates the confidence of every active tracklet.
///
/// Terminated tracklets are only eligible when they have no successor, ended
/// within `relink_window` frames, and the link cost is at most `link_max_cost`.
pub fn link_tracklets(tracklets: &mut [Tracklet], boxes: &[Detection], cfg: &AssocConfig) -> LinkResult {
    let frame = boxes.first().map(|d| d.frame);
    let local: Vec<usize> = (0..tracklets.len())
        .filter(|&i| tracklets[i].is_active() && tracklets[i].confidence >= cfg.high_confidence)
        .collect();
    let global: Vec<usize> = (0..tracklets.len())
        .filter(|&i| {
            let t = &tracklets[i];
            if t.is_active() {
                return t.confidence < cfg.high_confidence;
            }
            match (t.terminated_at, frame) {
                (Some(end), Some(f)) => !t.has_successor && f >= end && f - end <= cfg.relink_window,
                _ => false,
            }
        })
        .collect();

    let all: Vec<usize> = (0..boxes.len()).collect();
    let mut matches: Vec<LinkMatch> = assign(tracklets, &local, boxes, &all, cfg, |_, a| a >= cfg.min_affinity)
        .into_iter()
        .map(|(d, t, a)| LinkMatch { detection: d, tracklet: t, kind: LinkKind::Local, affinity: a })
        .collect();
    let rest: Vec<usize> = all.iter().copied().filter(|d| !matches.iter().any(|m| m.detection == *d)).collect();
    let gate = |t: usize, a: f64| a >= cfg.min_affinity && (tracklets[t].is_active() || 1.0 - a <= cfg.link_max_cost);
    for (d, t, a) in assign(tracklets, &global, boxes, &rest, cfg, gate) {
        let kind = if tracklets[t].is_active() { LinkKind::Global } else { LinkKind::Relink };
        matches.push(LinkMatch { detection: d, tracklet: t, kind, affinity: a });
    }
    matches.sort_by_key(|m| m.detection);
    let unmatched = all.into_iter().filter(|d| !matches.iter().any(|m| m.detection == *d)).collect();

    for (i, t) in tracklets.iter_mut().enumerate() {
        if t.is_active() {
            let hit = matches.iter().any(|m| m.tracklet == i);
            t.record_opportunity(hit, cfg.confidence_decay);
        }
    }
    LinkResult { matches, unmatched }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::TrackletState;

    fn det(frame: u64, x: f64, app: Option<Vec<f64>>) -> Detection {
        Detection {
            bbox: BoundingBox::new(x, 0.0, 10.0, 10.0).unwrap(),
            frame,
            confidence: 1.0,
            appearance: app,
            row: 0,
        }
    }

    #[test]
    fn no_boxes_decays_confidence() {
        let mut ts = vec![Tracklet::spawn("T1".into(), "T1".into(), &det(0, 0.0, None))];
        let r = link_tracklets(&mut ts, &[], &AssocConfig::default());
        assert!(r.matches.is_empty());
        assert!(ts[0].confidence < 1.0);
    }

    #[test]
    fn high_overlap_goes_local() {
        let mut ts = vec![Tracklet::spawn("T1".into(), "T1".into(), &det(0, 0.0, None))];
        // overlap 0.9 with the tracked box
        let r = link_tracklets(&mut ts, &[det(5, 1.0, None)], &AssocConfig::default());
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.matches[0].kind, LinkKind::Local);
        assert!((r.matches[0].affinity - 0.9).abs() < 1e-12);
        assert_eq!(ts[0].confidence, 1.0);
    }

    #[test]
    fn weak_overlap_is_gated() {
        let mut ts = vec![Tracklet::spawn("T1".into(), "T1".into(), &det(0, 0.0, None))];
        let r = link_tracklets(&mut ts, &[det(5, 9.5, None)], &AssocConfig::default());
        assert!(r.matches.is_empty());
        assert_eq!(r.unmatched, vec![0]);
    }

    #[test]
    fn fragment_after_gap_relinks_by_appearance() {
        let app = Some(vec![1.0, 0.0, 0.0]);
        let mut old = Tracklet::spawn("T1".into(), "T1".into(), &det(0, 0.0, app.clone()));
        old.state = TrackletState::Terminated;
        old.terminated_at = Some(20);
        let mut other = Tracklet::spawn("T2".into(), "T2".into(), &det(0, 200.0, Some(vec![0.0, 1.0, 0.0])));
        other.state = TrackletState::Terminated;
        other.terminated_at = Some(20);
        let mut ts = vec![old, other];
        let r = link_tracklets(&mut ts, &[det(30, 2.0, app)], &AssocConfig::default());
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.matches[0].tracklet, 0);
        assert_eq!(r.matches[0].kind, LinkKind::Relink);
    }
}
