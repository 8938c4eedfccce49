//! Declarative tracking scenarios.
//!
//! ```text
//! seed 3
//! frames 60
//! confidence_noise 0.1
//! subject a; waypoint 0 10 10 40 40; waypoint 50 110 10 40 40; occlude 21 49
//! subject b
//! appearance 0 1 0
//! waypoint 0 300 10 40 40
//! waypoint 50 300 10 40 40
//! dropout 0.2
//! ```
//!
//! Directives may share a line separated by `;`. `occlude`, `dropout` and
//! `appearance` apply to the most recent `subject`. Each subject is seen on
//! every frame from its first to its last waypoint, box linearly interpolated.
//! `frames` extends the run past the last waypoint.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::assoc::{BoundingBox, Detection};
use crate::data::{seeded_rng, Embedding, EmbeddingSet, SourceKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedSubject {
    pub id: String,
    pub waypoints: Vec<(u64, BoundingBox)>,
    pub occlusions: Vec<(u64, u64)>,
    pub dropout: f64,
    pub appearance: Option<Vec<f64>>,
}

impl ScriptedSubject {
    fn new(id: String) -> Self {
        Self { id, waypoints: Vec::new(), occlusions: Vec::new(), dropout: 0.0, appearance: None }
    }

    /// Interpolated box at `frame`, if the subject is on screen.
    pub fn box_at(&self, frame: u64) -> Option<BoundingBox> {
        let (first, last) = (self.waypoints.first()?, self.waypoints.last()?);
        if frame < first.0 || frame > last.0 {
            return None;
        }
        let k = self.waypoints.partition_point(|(f, _)| *f <= frame);
        let (f0, b0) = self.waypoints[k - 1];
        if f0 == frame || k == self.waypoints.len() {
            return Some(b0);
        }
        let (f1, b1) = self.waypoints[k];
        Some(b0.lerp(&b1, (frame - f0) as f64 / (f1 - f0) as f64))
    }

    pub fn occluded(&self, frame: u64) -> bool {
        self.occlusions.iter().any(|&(a, b)| a <= frame && frame <= b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub seed: u64,
    pub confidence_noise: f64,
    /// Minimum run length in frames.
    pub frames: u64,
    pub subjects: Vec<ScriptedSubject>,
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse(format!("scenario line {line}: cannot parse `{tok}`")))
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self> {
        let mut script = ScenarioScript { seed: 0, confidence_noise: 0.0, frames: 0, subjects: Vec::new() };
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let content = raw.split('#').next().unwrap_or("");
            for directive in content.split(';') {
                let toks: Vec<&str> = directive.split_whitespace().collect();
                let Some((&head, args)) = toks.split_first() else { continue };
                let current = script.subjects.last_mut();
                let need_subject = || Error::Parse(format!("scenario line {line}: `{head}` before any subject"));
                let arity = |n: usize| -> Result<()> {
                    if args.len() == n {
                        Ok(())
                    } else {
                        Err(Error::Parse(format!("scenario line {line}: `{head}` takes {n} arguments")))
                    }
                };
                match head {
                    "seed" => {
                        arity(1)?;
                        script.seed = parse_num(args[0], line)?;
                    }
                    "frames" => {
                        arity(1)?;
                        script.frames = parse_num(args[0], line)?;
                    }
                    "confidence_noise" => {
                        arity(1)?;
                        script.confidence_noise = parse_num(args[0], line)?;
                    }
                    "subject" => {
                        arity(1)?;
                        if script.subjects.iter().any(|s| s.id == args[0]) {
                            return Err(Error::Parse(format!("scenario line {line}: duplicate subject `{}`", args[0])));
                        }
                        script.subjects.push(ScriptedSubject::new(args[0].to_string()));
                    }
                    "waypoint" => {
                        arity(5)?;
                        let s = current.ok_or_else(need_subject)?;
                        let frame: u64 = parse_num(args[0], line)?;
                        let v: Vec<f64> = args[1..].iter().map(|t| parse_num(t, line)).collect::<Result<_>>()?;
                        if s.waypoints.last().is_some_and(|(f, _)| *f >= frame) {
                            return Err(Error::Parse(format!("scenario line {line}: waypoint frames must increase")));
                        }
                        s.waypoints.push((frame, BoundingBox::new(v[0], v[1], v[2], v[3])?));
                    }
                    "occlude" => {
                        arity(2)?;
                        let s = current.ok_or_else(need_subject)?;
                        let (a, b): (u64, u64) = (parse_num(args[0], line)?, parse_num(args[1], line)?);
                        if a > b {
                            return Err(Error::Parse(format!("scenario line {line}: empty occlusion {a}..{b}")));
                        }
                        s.occlusions.push((a, b));
                    }
                    "dropout" => {
                        arity(1)?;
                        let s = current.ok_or_else(need_subject)?;
                        let r: f64 = parse_num(args[0], line)?;
                        if !(0.0..=1.0).contains(&r) {
                            return Err(Error::Parse(format!("scenario line {line}: dropout {r} not in [0, 1]")));
                        }
                        s.dropout = r;
                    }
                    "appearance" => {
                        let s = current.ok_or_else(need_subject)?;
                        if args.is_empty() {
                            return Err(Error::Parse(format!("scenario line {line}: empty appearance")));
                        }
                        s.appearance = Some(args.iter().map(|t| parse_num(t, line)).collect::<Result<_>>()?);
                    }
                    other => return Err(Error::Parse(format!("scenario line {line}: unknown directive `{other}`"))),
                }
            }
        }
        script.validate()?;
        Ok(script)
    }

    fn validate(&self) -> Result<()> {
        if !(self.confidence_noise >= 0.0) {
            return Err(Error::Parse("confidence_noise must be >= 0".into()));
        }
        if let Some(s) = self.subjects.iter().find(|s| s.waypoints.is_empty()) {
            return Err(Error::Parse(format!("subject `{}` has no waypoints", s.id)));
        }
        let dims: Vec<usize> = self.subjects.iter().filter_map(|s| s.appearance.as_ref().map(Vec::len)).collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Parse("appearance vectors differ in length".into()));
        }
        for (i, a) in self.subjects.iter().enumerate() {
            for b in &self.subjects[i + 1..] {
                if identical_overlap(a, b) {
                    return Err(Error::AmbiguousScript(format!(
                        "subjects `{}` and `{}` follow identical boxes on every shared frame",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn last_frame(&self) -> u64 {
        self.subjects.iter().filter_map(|s| s.waypoints.last().map(|w| w.0)).max().unwrap_or(0)
    }
}

fn identical_overlap(a: &ScriptedSubject, b: &ScriptedSubject) -> bool {
    let lo = a.waypoints[0].0.max(b.waypoints[0].0);
    let hi = a.waypoints.last().unwrap().0.min(b.waypoints.last().unwrap().0);
    lo <= hi && (lo..=hi).all(|f| a.box_at(f) == b.box_at(f))
}

/// Detections with their ground truth.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub detections: Vec<Detection>,
    /// Subject id per detection row.
    pub truth: Vec<String>,
    /// One past the last scripted frame, or the `frames` directive if larger.
    pub frames: u64,
    /// One vector per subject with an appearance, referenced by `appearance_refs`.
    pub appearances: Option<EmbeddingSet>,
    pub appearance_refs: Vec<Option<usize>>,
}

/// Renders a script: rows ordered by frame, then subject order.
pub fn gen_tracking_scenario(script: &ScenarioScript) -> Result<Scenario> {
    let mut rng = seeded_rng(script.seed);
    let mut app_items = Vec::new();
    let mut app_index = Vec::with_capacity(script.subjects.len());
    for s in &script.subjects {
        app_index.push(s.appearance.as_ref().map(|v| {
            app_items.push(Embedding::new(v.clone(), s.id.clone(), format!("{}_appearance", s.id), SourceKind::Image));
            app_items.len() - 1
        }));
    }
    let appearances = match app_items.first() {
        Some(e) => Some(EmbeddingSet::new(e.dim(), app_items.clone())?),
        None => None,
    };

    let mut detections = Vec::new();
    let mut truth = Vec::new();
    let mut refs = Vec::new();
    for frame in 0..=script.last_frame() {
        for (si, s) in script.subjects.iter().enumerate() {
            let Some(bbox) = s.box_at(frame) else { continue };
            // draw even when occluded so dropout stays aligned across edits to occlusions
            let drop = s.dropout > 0.0 && rng.random::<f64>() < s.dropout;
            let noise: f64 = StandardNormal.sample(&mut rng);
            if s.occluded(frame) || drop {
                continue;
            }
            detections.push(Detection {
                bbox,
                frame,
                confidence: 1.0 + script.confidence_noise * noise,
                appearance: s.appearance.clone(),
                row: detections.len(),
            });
            truth.push(s.id.clone());
            refs.push(app_index[si]);
        }
    }
    Ok(Scenario {
        detections,
        truth,
        frames: if script.subjects.is_empty() { script.frames } else { script.frames.max(script.last_frame() + 1) },
        appearances,
        appearance_refs: refs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_trajectory_every_frame() {
        let s = ScenarioScript::parse("subject a; waypoint 0 0 0 10 10; waypoint 10 20 0 10 10").unwrap();
        let sc = gen_tracking_scenario(&s).unwrap();
        assert_eq!(sc.detections.len(), 11);
        assert_eq!(sc.detections[5].bbox.x, 10.0);
        assert!(sc.truth.iter().all(|t| t == "a"));
        assert_eq!(sc.frames, 11);
    }

    #[test]
    fn frames_directive_only_extends() {
        let base = "subject a; waypoint 0 0 0 10 10; waypoint 10 20 0 10 10";
        let long = gen_tracking_scenario(&ScenarioScript::parse(&format!("frames 50; {base}")).unwrap()).unwrap();
        assert_eq!(long.frames, 50);
        assert_eq!(long.detections.len(), 11);
        let short = gen_tracking_scenario(&ScenarioScript::parse(&format!("frames 3\n{base}")).unwrap()).unwrap();
        assert_eq!(short.frames, 11);
    }

    #[test]
    fn occlusion_window_removes_detections() {
        let s = ScenarioScript::parse("subject a\nwaypoint 0 0 0 10 10\nwaypoint 40 0 0 10 10\nocclude 10 19").unwrap();
        let sc = gen_tracking_scenario(&s).unwrap();
        assert_eq!(sc.detections.len(), 31);
        assert!(sc.detections.iter().all(|d| !(10..=19).contains(&d.frame)));
    }

    #[test]
    fn identical_trajectories_are_ambiguous() {
        let text = "subject a; waypoint 0 0 0 10 10; waypoint 9 5 0 10 10\nsubject b; waypoint 0 0 0 10 10; waypoint 9 5 0 10 10";
        assert!(matches!(ScenarioScript::parse(text), Err(Error::AmbiguousScript(_))));
    }

    #[test]
    fn deterministic_with_dropout() {
        let text = "seed 9\nconfidence_noise 0.2\nsubject a; waypoint 0 0 0 10 10; waypoint 99 0 0 10 10; dropout 0.3";
        let s = ScenarioScript::parse(text).unwrap();
        let (a, b) = (gen_tracking_scenario(&s).unwrap(), gen_tracking_scenario(&s).unwrap());
        assert_eq!(a.detections, b.detections);
        assert!(a.detections.len() < 100 && a.detections.len() > 40);
    }

    #[test]
    fn parse_errors() {
        assert!(ScenarioScript::parse("waypoint 0 0 0 1 1").is_err());
        assert!(ScenarioScript::parse("subject a; waypoint 5 0 0 1 1; waypoint 5 0 0 1 1").is_err());
        assert!(ScenarioScript::parse("subject a; teleport").is_err());
        assert!(ScenarioScript::parse("subject a").is_err());
    }
}
