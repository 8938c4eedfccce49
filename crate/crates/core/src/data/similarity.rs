use crate::error::{Error, Result};

/// A similarity score; `None` is the MISSING marker.
///
/// `Option`'s ordering already places `None` below every `Some`, which is exactly
/// the "MISSING ranks below every finite score" rule the metrics rely on.
pub type Score = Option<f64>;

/// Gallery x probe score table. Rows are gallery templates, columns are probes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    gallery_ids: Vec<String>,
    probe_ids: Vec<String>,
    scores: Vec<Score>,
}

impl SimilarityMatrix {
    pub fn new(gallery_ids: Vec<String>, probe_ids: Vec<String>, scores: Vec<Score>) -> Result<Self> {
        let expected = gallery_ids.len() * probe_ids.len();
        if scores.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: scores.len() });
        }
        if let Some(bad) = scores.iter().flatten().find(|s| !s.is_finite()) {
            return Err(Error::Parse(format!("non-finite score {bad}; use MISSING instead")));
        }
        Ok(Self { gallery_ids, probe_ids, scores })
    }

    /// All-MISSING matrix of the given shape.
    pub fn missing(gallery_ids: Vec<String>, probe_ids: Vec<String>) -> Self {
        let n = gallery_ids.len() * probe_ids.len();
        Self { gallery_ids, probe_ids, scores: vec![None; n] }
    }

    pub fn gallery_ids(&self) -> &[String] {
        &self.gallery_ids
    }

    pub fn probe_ids(&self) -> &[String] {
        &self.probe_ids
    }

    pub fn n_gallery(&self) -> usize {
        self.gallery_ids.len()
    }

    pub fn n_probe(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn get(&self, gallery: usize, probe: usize) -> Score {
        self.scores[gallery * self.probe_ids.len() + probe]
    }

    pub fn set(&mut self, gallery: usize, probe: usize, score: Score) {
        debug_assert!(score.is_none_or(f64::is_finite));
        let n = self.probe_ids.len();
        self.scores[gallery * n + probe] = score;
    }

    /// Scores of one probe across the gallery, in gallery order.
    pub fn column(&self, probe: usize) -> Vec<Score> {
        (0..self.n_gallery()).map(|g| self.get(g, probe)).collect()
    }

    pub fn scores(&self) -> &[Score] {
        &self.scores
    }

    pub fn same_layout(&self, other: &SimilarityMatrix) -> bool {
        self.gallery_ids == other.gallery_ids && self.probe_ids == other.probe_ids
    }
}
