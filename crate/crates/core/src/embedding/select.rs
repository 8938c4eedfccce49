use crate::data::{dot, seeded_rng, EmbeddingSet};
use crate::embedding::{project_set, train, Objective, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{roc_curve, tar_at_far};

/// Candidate output dimensions tried by default.
pub const DEFAULT_DIM_CANDIDATES: [usize; 3] = [64, 128, 256];

/// Operating point used to compare candidates.
pub const SELECTION_FAR: f64 = 1e-2;

/// All-pairs verification TAR at `far` for a labelled set of unit vectors.
pub fn pairwise_tar_at_far(set: &EmbeddingSet, far: f64) -> Result<f64> {
    let items = set.items();
    let mut pairs = Vec::with_capacity(items.len() * items.len().saturating_sub(1) / 2);
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            pairs.push((Some(dot(&items[i].values, &items[j].values)), items[i].subject_id == items[j].subject_id));
        }
    }
    Ok(tar_at_far(&roc_curve(&pairs)?, far))
}

/// Picks the output dimension with the best mean validation TAR@FAR=1e-2 over
/// subject-disjoint folds. Ties go to the smaller dimension.
pub fn select_output_dim(
    pool: &EmbeddingSet,
    candidates: &[usize],
    folds: usize,
    cfg: &TrainConfig,
    objective: Objective,
) -> Result<usize> {
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    match sorted.as_slice() {
        [] => return Err(Error::Config("no candidate dimensions".into())),
        [only] => return Ok(*only),
        _ => {}
    }
    if let Some(&bad) = sorted.iter().find(|&&d| d == 0 || d > pool.dim()) {
        return Err(Error::Config(format!("candidate dimension {bad} exceeds input dimension {}", pool.dim())));
    }
    let parts = crate::embedding::subject_folds(pool, folds, &mut seeded_rng(cfg.seed))?;

    let mut best: Option<(usize, f64)> = None;
    for &dim in &sorted {
        let mut total = 0.0;
        for (k, held) in parts.iter().enumerate() {
            let train_idx: Vec<usize> =
                parts.iter().enumerate().filter(|&(j, _)| j != k).flat_map(|(_, p)| p.iter().copied()).collect();
            let train_set = pool.select(&train_idx)?;
            let fold_cfg = TrainConfig { output_dim: dim, ..cfg.clone() };
            let w = train(&train_set, &fold_cfg, objective)?.matrix;
            let val = project_set(&w, &pool.select(held)?, true)?;
            total += pairwise_tar_at_far(&val, SELECTION_FAR)?;
        }
        let mean = total / parts.len() as f64;
        if best.is_none_or(|(_, b)| mean > b) {
            best = Some((dim, mean));
        }
    }
    Ok(best.expect("at least two candidates").0)
}
