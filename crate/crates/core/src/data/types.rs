use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where an embedding's source face came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceKind {
    Image,
    VideoFrame,
}

impl SourceKind {
    pub fn to_byte(self) -> u8 {
        match self {
            SourceKind::Image => 0,
            SourceKind::VideoFrame => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(SourceKind::Image),
            1 => Ok(SourceKind::VideoFrame),
            other => Err(Error::Parse(format!("unknown source kind byte {other}"))),
        }
    }
}

/// A face descriptor with its subject and media labels.
///
/// Values are held in `f64` for arithmetic; the on-disk format stores `f32`, so
/// anything loaded from a file round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub subject_id: String,
    pub media_id: String,
    pub source_kind: SourceKind,
}

impl Embedding {
    pub fn new(
        values: Vec<f64>,
        subject_id: impl Into<String>,
        media_id: impl Into<String>,
        source_kind: SourceKind,
    ) -> Self {
        Self { values, subject_id: subject_id.into(), media_id: media_id.into(), source_kind }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A dataset of embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingSet {
    dim: usize,
    items: Vec<Embedding>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, items: Vec<Embedding>) -> Result<Self> {
        for e in &items {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: e.dim() });
            }
        }
        Ok(Self { dim, items })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Embedding] {
        &self.items
    }

    pub fn get(&self, index: usize) -> Option<&Embedding> {
        self.items.get(index)
    }

    pub fn push(&mut self, e: Embedding) -> Result<()> {
        if e.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: e.dim() });
        }
        self.items.push(e);
        Ok(())
    }

    /// Subset by index, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let items = indices
            .iter()
            .map(|&i| {
                self.items.get(i).cloned().ok_or_else(|| Error::Parse(format!("embedding index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim: self.dim, items })
    }

    /// Embedding indices grouped by subject, keyed in sorted subject order.
    pub fn by_subject(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.items.iter().enumerate() {
            groups.entry(e.subject_id.as_str()).or_default().push(i);
        }
        groups
    }

    pub fn subject_count(&self) -> usize {
        self.items.iter().map(|e| e.subject_id.as_str()).collect::<BTreeSet<_>>().len()
    }
}

/// An enrollment or probe unit: a set of embeddings of one subject.
///
/// `members` index into the owning [`EmbeddingSet`]. A template with
/// `missing == true` could not be built (no detected faces) and scores as MISSING.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub template_id: String,
    pub subject_id: String,
    pub members: Vec<usize>,
    pub missing: bool,
}

impl Template {
    pub fn new(template_id: impl Into<String>, subject_id: impl Into<String>, members: Vec<usize>) -> Self {
        let members_empty = members.is_empty();
        Self { template_id: template_id.into(), subject_id: subject_id.into(), members, missing: members_empty }
    }

    pub fn missing(template_id: impl Into<String>, subject_id: impl Into<String>) -> Self {
        Self { template_id: template_id.into(), subject_id: subject_id.into(), members: Vec::new(), missing: true }
    }

    /// Checks that every member exists and shares the template's subject.
    pub fn validate(&self, set: &EmbeddingSet) -> Result<()> {
        if self.members.is_empty() && !self.missing {
            return Err(Error::Config(format!(
                "template `{}` has no members and is not flagged missing",
                self.template_id
            )));
        }
        for &m in &self.members {
            let e = set.get(m).ok_or_else(|| {
                Error::Parse(format!("template `{}` references embedding {m} which does not exist", self.template_id))
            })?;
            if e.subject_id != self.subject_id {
                return Err(Error::Config(format!(
                    "template `{}` (subject `{}`) contains embedding {m} of subject `{}`",
                    self.template_id, self.subject_id, e.subject_id
                )));
            }
        }
        Ok(())
    }
}

/// Borrowed anchor/positive/negative triple.
#[derive(Debug, Clone, Copy)]
pub struct Triplet<'a> {
    pub anchor: &'a Embedding,
    pub positive: &'a Embedding,
    pub negative: &'a Embedding,
}

impl<'a> Triplet<'a> {
    pub fn new(anchor: &'a Embedding, positive: &'a Embedding, negative: &'a Embedding) -> Result<Self> {
        if anchor.subject_id != positive.subject_id {
            return Err(Error::Config(format!(
                "anchor subject `{}` differs from positive subject `{}`",
                anchor.subject_id, positive.subject_id
            )));
        }
        if anchor.subject_id == negative.subject_id {
            return Err(Error::Config(format!("negative shares the anchor subject `{}`", anchor.subject_id)));
        }
        Ok(Self { anchor, positive, negative })
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }
}

/// Indices of a triplet within an [`EmbeddingSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TripletIndices {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

impl TripletIndices {
    pub fn resolve<'a>(&self, set: &'a EmbeddingSet) -> Result<Triplet<'a>> {
        let get = |i: usize| set.get(i).ok_or_else(|| Error::Parse(format!("embedding index {i} out of range")));
        Triplet::new(get(self.anchor)?, get(self.positive)?, get(self.negative)?)
    }
}
