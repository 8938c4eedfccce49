use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::assoc::linking::{link_tracklets, LinkKind};
use crate::assoc::{overlap_ratio, AssocConfig, BoundingBox, Detection, Tracklet, TrackletState};
use crate::error::{Error, Result};

/// Box extrapolation between detector refreshes.
pub trait MotionPredictor {
    fn predict(&mut self, tracklet: &Tracklet, frame: u64) -> BoundingBox;
}

/// Constant velocity from the last two detection boxes; zero velocity with one.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

impl MotionPredictor for ConstantVelocity {
    fn predict(&mut self, tracklet: &Tracklet, frame: u64) -> BoundingBox {
        let n = tracklet.anchors.len();
        let Some(&(f1, b1)) = tracklet.anchors.last() else {
            return *tracklet.last_box();
        };
        if n < 2 {
            return b1;
        }
        let (f0, b0) = tracklet.anchors[n - 2];
        let dt = (f1 - f0) as f64;
        let steps = frame as f64 - f1 as f64;
        BoundingBox {
            x: b1.x + (b1.x - b0.x) / dt * steps,
            y: b1.y + (b1.y - b0.y) / dt * steps,
            width: b1.width,
            height: b1.height,
        }
    }
}

/// Replays externally supplied boxes keyed by tracklet id and frame, falling
/// back to constant velocity where nothing was supplied.
#[derive(Debug, Clone, Default)]
pub struct ReplayPredictor {
    pub boxes: HashMap<(String, u64), BoundingBox>,
    pub fallback: ConstantVelocity,
}

impl MotionPredictor for ReplayPredictor {
    fn predict(&mut self, tracklet: &Tracklet, frame: u64) -> BoundingBox {
        match self.boxes.get(&(tracklet.id.clone(), frame)) {
            Some(b) => *b,
            None => self.fallback.predict(tracklet, frame),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Spawn,
    Refresh,
    Terminate,
    Link,
    Discard,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Spawn => "spawn",
            EventKind::Refresh => "refresh",
            EventKind::Terminate => "terminate",
            EventKind::Link => "link",
            EventKind::Discard => "discard",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub frame: u64,
    pub kind: EventKind,
    pub tracklet_id: Option<String>,
    pub detail: Option<String>,
    /// Source row of the consumed detection, if any.
    pub detection: Option<usize>,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},event,{},{}", self.frame, self.kind.as_str(), self.tracklet_id.as_deref().unwrap_or("-"))?;
        if let Some(d) = &self.detail {
            write!(f, ",{d}")?;
        }
        Ok(())
    }
}

/// A detection consumed into a tracklet, with the identity it was given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub row: usize,
    pub frame: u64,
    pub identity: String,
}

/// Association state for one video.
#[derive(Debug, Clone)]
pub struct Engine {
    cfg: AssocConfig,
    tracklets: Vec<Tracklet>,
    next_id: usize,
    last_frame: Option<u64>,
    assignments: Vec<Assignment>,
}

impl Engine {
    pub fn new(cfg: AssocConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, tracklets: Vec::new(), next_id: 1, last_frame: None, assignments: Vec::new() })
    }

    pub fn config(&self) -> &AssocConfig {
        &self.cfg
    }

    pub fn tracklets(&self) -> &[Tracklet] {
        &self.tracklets
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    fn spawn(&mut self, det: &Detection, identity: Option<String>) -> usize {
        let id = format!("T{}", self.next_id);
        self.next_id += 1;
        let identity = identity.unwrap_or_else(|| id.clone());
        self.tracklets.push(Tracklet::spawn(id, identity, det));
        self.tracklets.len() - 1
    }

    /// Highest-overlap active tracklet whose box overlaps `det` by more than γ.
    fn blocking_tracklet(&self, det: &Detection) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, t) in self.tracklets.iter().enumerate().filter(|(_, t)| t.is_active()) {
            let r = overlap_ratio(&det.bbox, t.last_box()).unwrap_or(0.0);
            if r > self.cfg.overlap_threshold && best.is_none_or(|(_, b)| r > b) {
                best = Some((i, r));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Processes one frame. Detections must all belong to `frame`; they are
    /// only used on detection frames and ignored otherwise.
    pub fn advance_frame(
        &mut self,
        frame: u64,
        detections: &[Detection],
        motion: &mut dyn MotionPredictor,
    ) -> Result<Vec<Event>> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { frame, last });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(Error::Config(format!("detection for frame {} passed at frame {frame}", d.frame)));
        }
        self.last_frame = Some(frame);

        for t in self.tracklets.iter_mut().filter(|t| t.is_active()) {
            if t.last_frame() < frame {
                let b = motion.predict(t, frame);
                t.set_box(frame, b);
            }
        }
        if !frame.is_multiple_of(self.cfg.detect_every) {
            return Ok(Vec::new());
        }

        let kept: Vec<Detection> =
            detections.iter().filter(|d| d.confidence >= self.cfg.det_confidence_min).cloned().collect();
        for t in self.tracklets.iter_mut() {
            t.predicted = (!t.is_active() && !t.has_successor).then(|| motion.predict(t, frame));
        }
        let links = link_tracklets(&mut self.tracklets, &kept, &self.cfg);

        let mut events = Vec::new();
        for (di, det) in kept.iter().enumerate() {
            let event = match links.match_for(di) {
                Some(m) if m.kind == LinkKind::Relink => {
                    let identity = self.tracklets[m.tracklet].identity.clone();
                    self.tracklets[m.tracklet].has_successor = true;
                    let t = self.spawn(det, Some(identity.clone()));
                    Event {
                        frame,
                        kind: EventKind::Link,
                        tracklet_id: Some(self.tracklets[t].id.clone()),
                        detail: Some(identity),
                        detection: Some(det.row),
                    }
                }
                Some(m) => {
                    let t = &mut self.tracklets[m.tracklet];
                    t.refresh(det);
                    Event {
                        frame,
                        kind: EventKind::Refresh,
                        tracklet_id: Some(t.id.clone()),
                        detail: None,
                        detection: Some(det.row),
                    }
                }
                None => match self.blocking_tracklet(det) {
                    None => {
                        let t = self.spawn(det, None);
                        Event {
                            frame,
                            kind: EventKind::Spawn,
                            tracklet_id: Some(self.tracklets[t].id.clone()),
                            detail: None,
                            detection: Some(det.row),
                        }
                    }
                    Some(b) => Event {
                        frame,
                        kind: EventKind::Discard,
                        tracklet_id: None,
                        detail: Some(format!("overlaps {}", self.tracklets[b].id)),
                        detection: Some(det.row),
                    },
                },
            };
            if event.kind != EventKind::Discard {
                let identity = self
                    .tracklets
                    .iter()
                    .find(|t| Some(&t.id) == event.tracklet_id.as_ref())
                    .map(|t| t.identity.clone())
                    .expect("event names a live tracklet");
                self.assignments.push(Assignment { row: det.row, frame, identity });
            }
            events.push(event);
        }

        let limit = self.cfg.termination_frames;
        for t in self.tracklets.iter_mut() {
            t.predicted = None;
            if t.is_active() && t.frames_since_detection > limit {
                t.state = TrackletState::Terminated;
                t.terminated_at = Some(frame);
                if t.last_frame() == frame && t.boxes.len() > 1 {
                    t.boxes.pop();
                }
                events.push(Event {
                    frame,
                    kind: EventKind::Terminate,
                    tracklet_id: Some(t.id.clone()),
                    detail: None,
                    detection: None,
                });
            }
        }
        Ok(events)
    }
}

/// Output of a full association run.
#[derive(Debug, Clone)]
pub struct AssocOutput {
    pub events: Vec<Event>,
    pub tracklets: Vec<Tracklet>,
    pub assignments: Vec<Assignment>,
}

impl AssocOutput {
    /// Distinct identities after linking.
    pub fn identity_count(&self) -> usize {
        let mut ids: Vec<&str> = self.tracklets.iter().map(|t| t.identity.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Runs an engine over frames `0..=max(last detection frame, frames - 1)`.
pub fn associate(
    detections: &[Detection],
    frames: u64,
    cfg: &AssocConfig,
    motion: &mut dyn MotionPredictor,
) -> Result<AssocOutput> {
    let mut by_frame: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        d.bbox.validate()?;
        by_frame.entry(d.frame).or_default().push(d.clone());
    }
    let last = by_frame.keys().next_back().copied().into_iter().chain(frames.checked_sub(1)).max();
    let mut engine = Engine::new(cfg.clone())?;
    let mut events = Vec::new();
    if let Some(last) = last {
        for f in 0..=last {
            let dets = by_frame.get(&f).map(Vec::as_slice).unwrap_or(&[]);
            events.extend(engine.advance_frame(f, dets, motion)?);
        }
    }
    Ok(AssocOutput { events, tracklets: engine.tracklets, assignments: engine.assignments })
}

/// Identity switches: per ground-truth subject, the number of times the
/// assigned identity changes along its consumed detections in frame order.
pub fn identity_switches(assignments: &[Assignment], truth: &HashMap<usize, String>) -> usize {
    let mut per_subject: BTreeMap<&str, Vec<(u64, usize, &str)>> = BTreeMap::new();
    for a in assignments {
        if let Some(s) = truth.get(&a.row) {
            per_subject.entry(s).or_default().push((a.frame, a.row, &a.identity));
        }
    }
    per_subject
        .values_mut()
        .map(|seq| {
            seq.sort_unstable();
            seq.windows(2).filter(|w| w[0].2 != w[1].2).count()
        })
        .sum()
}
