use serde::{Deserialize, Serialize};

use crate::assoc::BoundingBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssocConfig {
    /// Novelty threshold γ on the overlap ratio.
    pub overlap_threshold: f64,
    pub detect_every: u64,
    /// Detection opportunities a tracklet may miss before it is terminated.
    pub termination_frames: u32,
    pub det_confidence_min: f64,
    /// Tracklets at or above this confidence go through local association.
    pub high_confidence: f64,
    pub confidence_decay: f64,
    pub overlap_weight: f64,
    pub appearance_weight: f64,
    /// Pairs below this affinity are never assigned.
    pub min_affinity: f64,
    /// Maximum link cost for joining a detection to a terminated tracklet.
    pub link_max_cost: f64,
    /// Frames after termination during which a tracklet can still be relinked.
    pub relink_window: u64,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self {
            overlap_threshold: 0.2,
            detect_every: 5,
            termination_frames: 4,
            det_confidence_min: -1.0,
            high_confidence: 0.5,
            confidence_decay: 0.9,
            overlap_weight: 0.5,
            appearance_weight: 0.5,
            min_affinity: 0.1,
            link_max_cost: 0.5,
            relink_window: 50,
        }
    }
}

impl AssocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.overlap_threshold > 0.0 && self.overlap_threshold < 1.0) {
            return Err(Error::Config(format!("overlap threshold {} not in (0, 1)", self.overlap_threshold)));
        }
        if self.detect_every == 0 || self.termination_frames == 0 {
            return Err(Error::Config("detect_every and termination_frames must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_decay) {
            return Err(Error::Config("confidence decay must be in [0, 1]".into()));
        }
        let finite = [
            self.det_confidence_min,
            self.high_confidence,
            self.overlap_weight,
            self.appearance_weight,
            self.min_affinity,
            self.link_max_cost,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("association parameters must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub frame: u64,
    pub confidence: f64,
    pub appearance: Option<Vec<f64>>,
    /// Row in the source detection file, used to attach ground truth.
    pub row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackletState {
    Active,
    Terminated,
}

impl TrackletState {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackletState::Active => "active",
            TrackletState::Terminated => "terminated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub id: String,
    /// Shared by all fragments linked into one subject.
    pub identity: String,
    pub boxes: Vec<(u64, BoundingBox)>,
    pub confidence: f64,
    /// Counted in detection opportunities, not raw frames.
    pub frames_since_detection: u32,
    pub state: TrackletState,
    pub matched_detections: u32,
    pub detection_opportunities: u32,
    /// Running mean of matched appearance vectors.
    pub appearance: Option<Vec<f64>>,
    pub terminated_at: Option<u64>,
    /// Set once a later fragment has been linked onto this one.
    pub has_successor: bool,
    /// Box used for association on the current frame, when it differs from the last stored box.
    pub predicted: Option<BoundingBox>,
    /// The last (at most two) detection boxes, used for velocity estimates.
    pub anchors: Vec<(u64, BoundingBox)>,
    appearance_count: u32,
}

impl Tracklet {
    pub fn spawn(id: String, identity: String, det: &Detection) -> Self {
        Self {
            id,
            identity,
            boxes: vec![(det.frame, det.bbox)],
            confidence: 1.0,
            frames_since_detection: 0,
            state: TrackletState::Active,
            matched_detections: 1,
            detection_opportunities: 1,
            appearance: det.appearance.clone(),
            terminated_at: None,
            has_successor: false,
            predicted: None,
            anchors: vec![(det.frame, det.bbox)],
            appearance_count: u32::from(det.appearance.is_some()),
        }
    }

    pub fn is_active(&self) -> bool {
        self.state == TrackletState::Active
    }

    pub fn last_box(&self) -> &BoundingBox {
        &self.boxes.last().expect("tracklets always hold a box").1
    }

    pub fn last_frame(&self) -> u64 {
        self.boxes.last().expect("tracklets always hold a box").0
    }

    pub fn current_box(&self) -> &BoundingBox {
        self.predicted.as_ref().unwrap_or_else(|| self.last_box())
    }

    /// Appends a box, or replaces the one already stored for `frame`.
    pub fn set_box(&mut self, frame: u64, b: BoundingBox) {
        match self.boxes.last_mut() {
            Some(last) if last.0 == frame => last.1 = b,
            _ => {
                debug_assert!(self.boxes.last().is_none_or(|l| l.0 < frame));
                self.boxes.push((frame, b));
            }
        }
    }

    /// Replaces the box at the detection's frame with the detection itself.
    pub(crate) fn refresh(&mut self, det: &Detection) {
        self.set_box(det.frame, det.bbox);
        self.anchors.push((det.frame, det.bbox));
        if self.anchors.len() > 2 {
            self.anchors.remove(0);
        }
        if let Some(v) = &det.appearance {
            self.absorb_appearance(v);
        }
    }

    pub(crate) fn absorb_appearance(&mut self, v: &[f64]) {
        match &mut self.appearance {
            Some(acc) if acc.len() == v.len() => {
                let n = f64::from(self.appearance_count);
                acc.iter_mut().zip(v).for_each(|(a, x)| *a = (*a * n + x) / (n + 1.0));
                self.appearance_count += 1;
            }
            _ => {
                self.appearance = Some(v.to_vec());
                self.appearance_count = 1;
            }
        }
    }

    /// Stage-2 update after one detection opportunity.
    pub(crate) fn record_opportunity(&mut self, matched: bool, decay: f64) {
        self.detection_opportunities += 1;
        if matched {
            self.matched_detections += 1;
            self.frames_since_detection = 0;
        } else {
            self.frames_since_detection += 1;
        }
        let ratio = f64::from(self.matched_detections) / f64::from(self.detection_opportunities);
        self.confidence = ratio * decay.powi(self.frames_since_detection as i32);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: u64) -> Detection {
        Detection {
            bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            frame,
            confidence: 1.0,
            appearance: None,
            row: 0,
        }
    }

    #[test]
    fn confidence_formula() {
        let mut t = Tracklet::spawn("T1".into(), "T1".into(), &det(0));
        assert_eq!(t.confidence, 1.0);
        t.record_opportunity(false, 0.9);
        assert!((t.confidence - 0.5 * 0.9).abs() < 1e-12);
        t.record_opportunity(true, 0.9);
        assert!((t.confidence - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(t.frames_since_detection, 0);
    }

    #[test]
    fn set_box_replaces_same_frame() {
        let mut t = Tracklet::spawn("T1".into(), "T1".into(), &det(0));
        t.set_box(1, BoundingBox::new(1.0, 0.0, 10.0, 10.0).unwrap());
        t.set_box(1, BoundingBox::new(2.0, 0.0, 10.0, 10.0).unwrap());
        assert_eq!(t.boxes.len(), 2);
        assert_eq!(t.last_box().x, 2.0);
    }

    #[test]
    fn config_validation() {
        assert!(AssocConfig::default().validate().is_ok());
        assert!(AssocConfig { overlap_threshold: 1.0, ..Default::default() }.validate().is_err());
        assert!(AssocConfig { detect_every: 0, ..Default::default() }.validate().is_err());
    }
}
