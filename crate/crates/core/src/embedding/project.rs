use crate::data::{Embedding, EmbeddingMatrix, EmbeddingSet};
use crate::embedding::l2_normalize;
use crate::error::Result;

/// `W v`.
pub fn project(w: &EmbeddingMatrix, v: &[f64]) -> Result<Vec<f64>> {
    w.apply(v)
}

/// `W v`, re-normalized to unit length when `renormalize` is set.
pub fn project_scored(w: &EmbeddingMatrix, v: &[f64], renormalize: bool) -> Result<Vec<f64>> {
    let out = w.apply(v)?;
    if renormalize {
        l2_normalize(&out)
    } else {
        Ok(out)
    }
}

/// Projects every embedding of a set, keeping labels.
pub fn project_set(w: &EmbeddingMatrix, set: &EmbeddingSet, renormalize: bool) -> Result<EmbeddingSet> {
    let items = set
        .items()
        .iter()
        .map(|e| Ok(Embedding { values: project_scored(w, &e.values, renormalize)?, ..e.clone() }))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingSet::new(w.rows(), items)
}
