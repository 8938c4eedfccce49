//! Template pooling and multi-network score fusion.
//!
//! Pooling sums member vectors in a canonical (lexicographic) order so the result
//! does not depend on how members are listed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Embedding, EmbeddingSet, SimilarityMatrix, Template};
use crate::embedding::l2_normalize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    /// Plain mean over all members.
    Average,
    /// Mean within each media, then mean over media.
    #[default]
    Media,
}

impl std::str::FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(PoolingMode::Average),
            "media" => Ok(PoolingMode::Media),
            other => Err(Error::Config(format!("unknown pooling mode `{other}`"))),
        }
    }
}

/// Whether member vectors are L2-normalized before averaging. The pooled
/// vector is always normalized at the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeOrder {
    #[default]
    NormalizeThenAverage,
    AverageOnly,
}

/// A set of member vectors from one image or video.
#[derive(Debug, Clone)]
pub struct MediaGroup<'a> {
    pub media_id: &'a str,
    pub members: Vec<&'a Embedding>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Pooler {
    pub mode: PoolingMode,
    pub order: NormalizeOrder,
}

fn mean_canonical(mut vectors: Vec<Vec<f64>>) -> Vec<f64> {
    vectors.sort_by(|a, b| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let k = vectors.len() as f64;
    let mut sum = vec![0.0; vectors[0].len()];
    for v in &vectors {
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
    }
    sum.iter_mut().for_each(|s| *s /= k);
    sum
}

fn members<'a>(t: &Template, set: &'a EmbeddingSet) -> Result<Vec<&'a Embedding>> {
    if t.missing || t.members.is_empty() {
        return Err(Error::MissingTemplate(t.template_id.clone()));
    }
    t.members
        .iter()
        .map(|&i| {
            set.get(i).ok_or_else(|| Error::Parse(format!("template `{}` references embedding {i}", t.template_id)))
        })
        .collect()
}

impl Pooler {
    pub fn new(mode: PoolingMode) -> Self {
        Self { mode, order: NormalizeOrder::default() }
    }

    fn prepare(&self, e: &Embedding) -> Result<Vec<f64>> {
        match self.order {
            NormalizeOrder::NormalizeThenAverage => l2_normalize(&e.values),
            NormalizeOrder::AverageOnly => Ok(e.values.clone()),
        }
    }

    /// Pooled, unit-norm template vector. Missing templates yield
    /// [`Error::MissingTemplate`].
    pub fn pool(&self, t: &Template, set: &EmbeddingSet) -> Result<Vec<f64>> {
        let ms = members(t, set)?;
        let pooled = match self.mode {
            PoolingMode::Average => mean_canonical(ms.iter().map(|e| self.prepare(e)).collect::<Result<_>>()?),
            PoolingMode::Media => {
                let groups = group_by_media(&ms);
                let mut media_means = Vec::with_capacity(groups.len());
                for g in groups {
                    media_means.push(mean_canonical(g.members.iter().map(|e| self.prepare(e)).collect::<Result<_>>()?));
                }
                mean_canonical(media_means)
            }
        };
        l2_normalize(&pooled)
    }
}

/// Members grouped by media id, in sorted media order.
pub fn group_by_media<'a>(members: &[&'a Embedding]) -> Vec<MediaGroup<'a>> {
    let mut groups: BTreeMap<&str, Vec<&Embedding>> = BTreeMap::new();
    for e in members {
        groups.entry(e.media_id.as_str()).or_default().push(e);
    }
    groups.into_iter().map(|(media_id, members)| MediaGroup { media_id, members }).collect()
}

/// Mean of all member vectors, L2-normalized.
pub fn pool_average(t: &Template, set: &EmbeddingSet) -> Result<Vec<f64>> {
    Pooler::new(PoolingMode::Average).pool(t, set)
}

/// Mean of per-media means, L2-normalized.
pub fn pool_media_average(t: &Template, set: &EmbeddingSet) -> Result<Vec<f64>> {
    Pooler::new(PoolingMode::Media).pool(t, set)
}

/// Entrywise weighted sum of score matrices. An entry is MISSING when it is
/// MISSING in any input.
pub fn fuse_scores(matrices: &[SimilarityMatrix], weights: Option<&[f64]>) -> Result<SimilarityMatrix> {
    let first = matrices.first().ok_or_else(|| Error::Config("fusion needs at least one matrix".into()))?;
    if let Some(w) = weights {
        if w.len() != matrices.len() {
            return Err(Error::Config(format!("{} weights for {} matrices", w.len(), matrices.len())));
        }
    }
    for (k, m) in matrices.iter().enumerate().skip(1) {
        if !m.same_layout(first) {
            return Err(Error::OrderMismatch(format!("matrix {k} gallery/probe ids differ from matrix 0")));
        }
    }
    let mut out = SimilarityMatrix::missing(first.gallery_ids().to_vec(), first.probe_ids().to_vec());
    for g in 0..first.n_gallery() {
        for p in 0..first.n_probe() {
            let mut total = Some(0.0);
            for (k, m) in matrices.iter().enumerate() {
                let w = weights.map_or(1.0, |w| w[k]);
                total = match (total, m.get(g, p)) {
                    (Some(acc), Some(s)) => Some(acc + w * s),
                    _ => None,
                };
            }
            out.set(g, p, total);
        }
    }
    Ok(out)
}
