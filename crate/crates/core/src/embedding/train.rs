use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{norm, seeded_rng, EmbeddingMatrix, EmbeddingSet, TripletIndices};
use crate::embedding::objective::{CandidateScorer, Objective};
use crate::error::{Error, Result, TraceRow};

/// Hyper-parameters for triplet embedding training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Rows of the learned projection.
    pub output_dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    /// Instances drawn from the training set per step when mining the negative.
    pub negatives_pool: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Emit a log row every this many iterations (and at the last one).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            output_dim: 128,
            margin: 0.1,
            learning_rate: 0.01,
            negatives_pool: 1000,
            iterations: 10_000,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.output_dim == 0 || self.output_dim > input_dim {
            return Err(Error::Config(format!("output dimension {} must be in 1..={input_dim}", self.output_dim)));
        }
        if self.negatives_pool == 0 || self.log_every == 0 {
            return Err(Error::Config("negatives_pool and log_every must be positive".into()));
        }
        Ok(())
    }
}

/// Draws triplets from a labelled pool.
///
/// Anchor-positive pairs are drawn uniformly among subjects with at least two
/// embeddings; the negative is the hardest violator among a random sample of
/// the whole pool.
#[derive(Debug)]
pub struct TripletSampler<'a> {
    pool: &'a EmbeddingSet,
    anchors: Vec<usize>,
    group_of: Vec<usize>,
    groups: Vec<Vec<usize>>,
}

impl<'a> TripletSampler<'a> {
    pub fn new(pool: &'a EmbeddingSet) -> Result<Self> {
        let by_subject = pool.by_subject();
        if by_subject.len() < 2 {
            return Err(Error::Config(format!(
                "triplet sampling needs at least 2 subjects, pool has {}",
                by_subject.len()
            )));
        }
        let mut group_of = vec![0; pool.len()];
        let mut groups = Vec::with_capacity(by_subject.len());
        for (g, members) in by_subject.into_values().enumerate() {
            for &i in &members {
                group_of[i] = g;
            }
            groups.push(members);
        }
        let anchors: Vec<usize> = (0..pool.len()).filter(|&i| groups[group_of[i]].len() >= 2).collect();
        if anchors.is_empty() {
            return Err(Error::Config("triplet sampling needs a subject with at least 2 embeddings".into()));
        }
        Ok(Self { pool, anchors, group_of, groups })
    }

    pub fn pool(&self) -> &EmbeddingSet {
        self.pool
    }

    fn draw_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let a = self.anchors[rng.random_range(0..self.anchors.len())];
        let group = &self.groups[self.group_of[a]];
        // uniform over the other members of the group
        let mut k = rng.random_range(0..group.len() - 1);
        if group[k] == a {
            k = group.len() - 1;
        }
        (a, group[k])
    }

    /// Hard-negative triplet with strictly positive loss, or `None` when no
    /// sampled candidate violates the margin.
    pub fn sample_hard<R: Rng + ?Sized>(
        &self,
        w: &EmbeddingMatrix,
        margin: f64,
        negatives_pool: usize,
        objective: Objective,
        rng: &mut R,
    ) -> Result<Option<(TripletIndices, f64)>> {
        let (a, p) = self.draw_pair(rng);
        let items = self.pool.items();
        let scorer = CandidateScorer::new(objective, w, &items[a].values, &items[p].values, margin)?;
        let k = negatives_pool.min(items.len());
        let group = self.group_of[a];
        let mut best: Option<(usize, f64)> = None;
        for n in index::sample(rng, items.len(), k) {
            if self.group_of[n] == group {
                continue;
            }
            let loss = scorer.loss(&items[n].values)?;
            if loss > best.map_or(0.0, |(_, l)| l) {
                best = Some((n, loss));
            }
        }
        Ok(best.map(|(n, loss)| (TripletIndices { anchor: a, positive: p, negative: n }, loss)))
    }

    /// Uniformly random valid triplets (no mining), for held-out loss estimates.
    pub fn sample_random<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<TripletIndices> {
        (0..count)
            .map(|_| {
                let (a, p) = self.draw_pair(rng);
                let group = self.group_of[a];
                let n = loop {
                    let n = rng.random_range(0..self.pool.len());
                    if self.group_of[n] != group {
                        break n;
                    }
                };
                TripletIndices { anchor: a, positive: p, negative: n }
            })
            .collect()
    }
}

/// Single hard-triplet draw with the similarity objective.
pub fn sample_hard_triplet<R: Rng + ?Sized>(
    pool: &EmbeddingSet,
    w: &EmbeddingMatrix,
    margin: f64,
    negatives_pool: usize,
    rng: &mut R,
) -> Result<Option<TripletIndices>> {
    let sampler = TripletSampler::new(pool)?;
    Ok(sampler.sample_hard(w, margin, negatives_pool, Objective::Tse, rng)?.map(|(t, _)| t))
}

/// Mean hinge loss of `objective` over the given triplets.
pub fn mean_loss(
    pool: &EmbeddingSet,
    w: &EmbeddingMatrix,
    triplets: &[TripletIndices],
    margin: f64,
    objective: Objective,
) -> Result<f64> {
    if triplets.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for t in triplets {
        total += objective.loss(w, &t.resolve(pool)?, margin)?;
    }
    Ok(total / triplets.len() as f64)
}

/// Trained projection with its optimisation history.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub matrix: EmbeddingMatrix,
    pub iteration: usize,
    /// Mined hinge loss per iteration (0 when no violator was found).
    pub objective_trace: Vec<f64>,
    pub log: Vec<TraceRow>,
}

const EMA_DECAY: f64 = 0.99;
const UNIT_TOLERANCE: f64 = 1e-4;

fn check_pool(pool: &EmbeddingSet) -> Result<()> {
    if let Some((i, e)) = pool.items().iter().enumerate().find(|(_, e)| (norm(&e.values) - 1.0).abs() > UNIT_TOLERANCE)
    {
        return Err(Error::Config(format!("training embedding {i} (subject `{}`) is not unit-norm", e.subject_id)));
    }
    Ok(())
}

/// Online SGD with hard-negative mining for a fixed iteration budget.
pub fn train(pool: &EmbeddingSet, cfg: &TrainConfig, objective: Objective) -> Result<TrainState> {
    cfg.validate(pool.dim())?;
    check_pool(pool)?;
    let sampler = TripletSampler::new(pool)?;
    let mut rng = seeded_rng(cfg.seed);
    let mut w = EmbeddingMatrix::random(cfg.output_dim, pool.dim(), &mut rng);

    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut log = Vec::new();
    let mut ema: Option<f64> = None;
    let mut window_active = 0usize;
    let mut window_len = 0usize;

    for it in 1..=cfg.iterations {
        let mined = sampler.sample_hard(&w, cfg.margin, cfg.negatives_pool, objective, &mut rng)?;
        let loss = match mined {
            Some((idx, loss)) => {
                let t = idx.resolve(pool)?;
                objective.step_in_place(&mut w, &t, cfg.learning_rate, cfg.margin).map_err(|e| match e {
                    Error::Divergence { .. } => Error::Divergence { iteration: it, trace: log.clone() },
                    other => other,
                })?;
                window_active += 1;
                loss
            }
            None => 0.0,
        };
        // W can stay finite while the mined loss has already overflowed
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: it, trace: log });
        }
        window_len += 1;
        trace.push(loss);
        let e = match ema {
            None => loss,
            Some(prev) => EMA_DECAY * prev + (1.0 - EMA_DECAY) * loss,
        };
        ema = Some(e);
        if it % cfg.log_every == 0 || it == cfg.iterations {
            log.push(TraceRow {
                iteration: it,
                loss_ema: e,
                active_fraction: window_active as f64 / window_len as f64,
            });
            window_active = 0;
            window_len = 0;
        }
    }

    Ok(TrainState { matrix: w, iteration: cfg.iterations, objective_trace: trace, log })
}

pub fn train_tse(pool: &EmbeddingSet, cfg: &TrainConfig) -> Result<EmbeddingMatrix> {
    Ok(train(pool, cfg, Objective::Tse)?.matrix)
}

pub fn train_tde(pool: &EmbeddingSet, cfg: &TrainConfig) -> Result<EmbeddingMatrix> {
    Ok(train(pool, cfg, Objective::Tde)?.matrix)
}

/// The initial matrix `train` starts from for this config.
pub fn initial_matrix(input_dim: usize, cfg: &TrainConfig) -> EmbeddingMatrix {
    let mut rng = seeded_rng(cfg.seed);
    EmbeddingMatrix::random(cfg.output_dim, input_dim, &mut rng)
}

/// CSV `iteration,loss_ema,active_fraction`.
pub fn write_training_log(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::from("iteration,loss_ema,active_fraction\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.iteration, r.loss_ema, r.active_fraction));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Subject-disjoint split of a pool into `folds` parts (subjects dealt round-robin
/// after a seeded shuffle).
pub fn subject_folds<R: Rng + ?Sized>(pool: &EmbeddingSet, folds: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    let by_subject: BTreeMap<&str, Vec<usize>> = pool.by_subject();
    if folds < 2 || by_subject.len() < folds {
        return Err(Error::Config(format!("{} subjects cannot form {folds} subject-disjoint folds", by_subject.len())));
    }
    let mut subjects: Vec<Vec<usize>> = by_subject.into_values().collect();
    use rand::seq::SliceRandom;
    subjects.shuffle(rng);
    let mut out = vec![Vec::new(); folds];
    for (i, members) in subjects.into_iter().enumerate() {
        out[i % folds].extend(members);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}
