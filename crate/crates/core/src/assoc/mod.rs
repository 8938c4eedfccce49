//! Multi-face association: tracker lifecycle with periodic detector refresh
//! and two-stage tracklet linking.

mod engine;
mod geometry;
mod hungarian;
pub mod io;
mod linking;
mod tracklet;

pub use engine::{
    associate, identity_switches, Assignment, AssocOutput, ConstantVelocity, Engine, Event, EventKind, MotionPredictor,
    ReplayPredictor,
};
pub use geometry::{overlap_ratio, BoundingBox};
pub use hungarian::{assign_gated, assignment_cost, hungarian_assign, FORBIDDEN_COST};
pub use linking::{affinity, link_tracklets, LinkKind, LinkMatch, LinkResult};
pub use tracklet::{AssocConfig, Detection, Tracklet, TrackletState};

/// True when no active tracklet's latest box overlaps the detection by more than `gamma`.
pub fn is_novel(d: &Detection, active: &[Tracklet], gamma: f64) -> bool {
    active.iter().filter(|t| t.is_active()).all(|t| overlap_ratio(&d.bbox, t.last_box()).unwrap_or(0.0) <= gamma)
}
