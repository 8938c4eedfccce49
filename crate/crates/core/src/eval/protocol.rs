use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{dot, EmbeddingMatrix, EmbeddingSet, SimilarityMatrix, Template};
use crate::embedding::project_scored;
use crate::error::{Error, Result};
use crate::eval::{
    cmc_curve, matrix_pairs, rank_accuracy, roc_curve, tar_at_far, tpir_at_fpir, RocPoint, SubjectLabels,
};
use crate::pooling::Pooler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Gallery,
    Probe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolRow {
    pub split_index: usize,
    pub role: Role,
    pub template_id: String,
}

/// Template ids per role for one train/test split.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub index: usize,
    pub train: Vec<String>,
    pub gallery: Vec<String>,
    pub probe: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Protocol {
    pub splits: Vec<Split>,
}

impl Protocol {
    pub fn from_rows(rows: &[ProtocolRow]) -> Self {
        let mut by_split: BTreeMap<usize, Split> = BTreeMap::new();
        for r in rows {
            let s =
                by_split.entry(r.split_index).or_insert_with(|| Split { index: r.split_index, ..Default::default() });
            match r.role {
                Role::Train => s.train.push(r.template_id.clone()),
                Role::Gallery => s.gallery.push(r.template_id.clone()),
                Role::Probe => s.probe.push(r.template_id.clone()),
            }
        }
        Self { splits: by_split.into_values().collect() }
    }

    pub fn rows(&self) -> Vec<ProtocolRow> {
        let mut out = Vec::new();
        for s in &self.splits {
            for (role, ids) in [(Role::Train, &s.train), (Role::Gallery, &s.gallery), (Role::Probe, &s.probe)] {
                out.extend(ids.iter().map(|id| ProtocolRow { split_index: s.index, role, template_id: id.clone() }));
            }
        }
        out
    }

    /// Every split has gallery and probe templates, all ids resolve, and
    /// training subjects do not appear among test subjects.
    pub fn validate(&self, templates: &HashMap<&str, &Template>) -> Result<()> {
        if self.splits.is_empty() {
            return Err(Error::Config("protocol has no splits".into()));
        }
        for s in &self.splits {
            if s.gallery.is_empty() || s.probe.is_empty() {
                return Err(Error::Config(format!("split {} lacks gallery or probe templates", s.index)));
            }
            let subject = |id: &String| {
                templates
                    .get(id.as_str())
                    .map(|t| t.subject_id.as_str())
                    .ok_or_else(|| Error::UnknownTemplate(id.clone()))
            };
            let train: HashSet<&str> = s.train.iter().map(subject).collect::<Result<_>>()?;
            for id in s.gallery.iter().chain(&s.probe) {
                let subj = subject(id)?;
                if train.contains(subj) {
                    return Err(Error::Config(format!(
                        "split {}: subject `{subj}` appears in both train and test",
                        s.index
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn read_protocol(path: &Path) -> Result<Protocol> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<ProtocolRow>, _>>()?;
    Ok(Protocol::from_rows(&rows))
}

pub fn write_protocol(path: &Path, p: &Protocol) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    for r in p.rows() {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Where face boxes and landmarks come from when building templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Setup {
    /// Dataset-provided metadata for every face.
    #[default]
    Manual,
    /// Only automatically detected faces; templates left without faces are MISSING.
    Automatic,
    /// Automatic where detection succeeded, metadata otherwise.
    SemiAutomatic,
}

impl Setup {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Setup::Manual),
            2 => Ok(Setup::Automatic),
            3 => Ok(Setup::SemiAutomatic),
            other => Err(Error::Config(format!("setup must be 1, 2 or 3, got {other}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Setup::Manual => 1,
            Setup::Automatic => 2,
            Setup::SemiAutomatic => 3,
        }
    }
}

/// Applies a setup to templates, given the embedding indices whose faces the
/// automatic pipeline failed to detect.
pub fn apply_setup(templates: &[Template], undetected: &HashSet<usize>, setup: Setup) -> Vec<Template> {
    templates
        .iter()
        .map(|t| match setup {
            Setup::Manual | Setup::SemiAutomatic => t.clone(),
            Setup::Automatic => {
                let members: Vec<usize> = t.members.iter().copied().filter(|m| !undetected.contains(m)).collect();
                Template { missing: t.missing || members.is_empty(), members, ..t.clone() }
            }
        })
        .collect()
}

/// Pooling followed by an optional learned projection.
#[derive(Debug, Clone, Default)]
pub struct ScoringPipeline {
    pub pooler: Pooler,
    pub projection: Option<EmbeddingMatrix>,
    /// Re-normalize projected vectors so scores are cosines; off gives raw
    /// inner products under the projection.
    pub renormalize: bool,
}

impl ScoringPipeline {
    pub fn new(pooler: Pooler) -> Self {
        Self { pooler, projection: None, renormalize: true }
    }

    pub fn with_projection(mut self, w: EmbeddingMatrix) -> Self {
        self.projection = Some(w);
        self
    }

    /// Template vector, or `None` for a missing template.
    pub fn template_vector(&self, t: &Template, set: &EmbeddingSet) -> Result<Option<Vec<f64>>> {
        if t.missing {
            return Ok(None);
        }
        let pooled = self.pooler.pool(t, set)?;
        Ok(Some(match &self.projection {
            Some(w) => project_scored(w, &pooled, self.renormalize)?,
            None => pooled,
        }))
    }

    pub fn template_vectors<'a>(
        &self,
        templates: impl IntoIterator<Item = &'a Template>,
        set: &EmbeddingSet,
    ) -> Result<HashMap<String, Option<Vec<f64>>>> {
        templates.into_iter().map(|t| Ok((t.template_id.clone(), self.template_vector(t, set)?))).collect()
    }
}

/// Gallery x probe scores: inner products of template vectors, with whole
/// rows/columns MISSING for templates that have no vector.
pub fn build_similarity_matrix(
    gallery: &[&Template],
    probe: &[&Template],
    vectors: &HashMap<String, Option<Vec<f64>>>,
) -> Result<SimilarityMatrix> {
    let lookup = |t: &Template| -> Result<Option<&Vec<f64>>> {
        if t.missing {
            return Ok(None);
        }
        vectors.get(&t.template_id).map(Option::as_ref).ok_or_else(|| Error::UnknownTemplate(t.template_id.clone()))
    };
    let gv = gallery.iter().map(|t| lookup(t)).collect::<Result<Vec<_>>>()?;
    let pv = probe.iter().map(|t| lookup(t)).collect::<Result<Vec<_>>>()?;
    if let Some((g, p)) = gv.iter().flatten().next().zip(pv.iter().flatten().next()) {
        if g.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: g.len(), found: p.len() });
        }
    }
    let scores: Vec<_> = gv
        .par_iter()
        .flat_map_iter(|g| {
            pv.iter().map(move |p| match (g, p) {
                (Some(g), Some(p)) => Some(dot(g, p)),
                _ => None,
            })
        })
        .collect();
    SimilarityMatrix::new(
        gallery.iter().map(|t| t.template_id.clone()).collect(),
        probe.iter().map(|t| t.template_id.clone()).collect(),
        scores,
    )
}

pub const FAR_TARGETS: [f64; 3] = [1e-1, 1e-2, 1e-3];
pub const CMC_RANKS: [usize; 3] = [1, 5, 10];
pub const FPIR_TARGETS: [f64; 2] = [0.01, 0.1];

/// Metrics and curves for one split.
#[derive(Debug, Clone)]
pub struct SplitReport {
    pub split_index: usize,
    pub matrix: SimilarityMatrix,
    pub roc: Vec<RocPoint>,
    pub cmc: Vec<f64>,
    pub metrics: Vec<(String, f64)>,
}

pub fn far_label(far: f64) -> String {
    match far {
        1e-1 => "TAR@FAR=1e-1".into(),
        1e-2 => "TAR@FAR=1e-2".into(),
        1e-3 => "TAR@FAR=1e-3".into(),
        f => format!("TAR@FAR={f}"),
    }
}

/// Verification, closed-set and (when impostor probes exist) open-set metrics
/// for a scored split.
pub fn score_report(split_index: usize, matrix: SimilarityMatrix, labels: &SubjectLabels) -> Result<SplitReport> {
    let roc = roc_curve(&matrix_pairs(&matrix, labels)?)?;
    let mut metrics: Vec<(String, f64)> = FAR_TARGETS.iter().map(|&f| (far_label(f), tar_at_far(&roc, f))).collect();

    let enrolled: HashSet<&str> = labels.gallery.iter().map(String::as_str).collect();
    let mated: Vec<usize> = (0..matrix.n_probe()).filter(|&p| enrolled.contains(labels.probe[p].as_str())).collect();
    let mut cmc = Vec::new();
    if !mated.is_empty() {
        let sub = probe_subset(&matrix, &mated)?;
        let sub_labels = SubjectLabels {
            gallery: labels.gallery.clone(),
            probe: mated.iter().map(|&p| labels.probe[p].clone()).collect(),
        };
        cmc = cmc_curve(&sub, &sub_labels, matrix.n_gallery())?;
        for r in CMC_RANKS {
            metrics.push((format!("rank-{r}"), rank_accuracy(&cmc, r)));
        }
    }
    if mated.len() < matrix.n_probe() && !mated.is_empty() {
        let tpir = tpir_at_fpir(&matrix, labels, &FPIR_TARGETS)?;
        for (f, v) in FPIR_TARGETS.iter().zip(tpir) {
            metrics.push((format!("TPIR@FPIR={f}"), v));
        }
    }
    Ok(SplitReport { split_index, matrix, roc, cmc, metrics })
}

fn probe_subset(m: &SimilarityMatrix, probes: &[usize]) -> Result<SimilarityMatrix> {
    let mut scores = Vec::with_capacity(m.n_gallery() * probes.len());
    for g in 0..m.n_gallery() {
        for &p in probes {
            scores.push(m.get(g, p));
        }
    }
    SimilarityMatrix::new(m.gallery_ids().to_vec(), probes.iter().map(|&p| m.probe_ids()[p].clone()).collect(), scores)
}

/// Scores and evaluates one split of a protocol.
pub fn evaluate_split(
    set: &EmbeddingSet,
    templates: &HashMap<&str, &Template>,
    split: &Split,
    pipeline: &ScoringPipeline,
) -> Result<SplitReport> {
    let resolve = |ids: &[String]| -> Result<Vec<&Template>> {
        ids.iter()
            .map(|id| templates.get(id.as_str()).copied().ok_or_else(|| Error::UnknownTemplate(id.clone())))
            .collect()
    };
    let gallery = resolve(&split.gallery)?;
    let probe = resolve(&split.probe)?;
    let vectors = pipeline.template_vectors(gallery.iter().chain(&probe).copied(), set)?;
    let matrix = build_similarity_matrix(&gallery, &probe, &vectors)?;
    let labels = SubjectLabels {
        gallery: gallery.iter().map(|t| t.subject_id.clone()).collect(),
        probe: probe.iter().map(|t| t.subject_id.clone()).collect(),
    };
    score_report(split.index, matrix, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Embedding, SourceKind};
    use crate::pooling::PoolingMode;

    fn unit_set() -> EmbeddingSet {
        EmbeddingSet::new(
            2,
            vec![
                Embedding::new(vec![1.0, 0.0], "a", "m0", SourceKind::Image),
                Embedding::new(vec![0.0, 1.0], "b", "m1", SourceKind::Image),
                Embedding::new(vec![1.0, 0.0], "a", "m2", SourceKind::Image),
                Embedding::new(vec![0.0, 1.0], "b", "m3", SourceKind::Image),
            ],
        )
        .unwrap()
    }

    #[test]
    fn orthogonal_templates_give_identity_scores() {
        let set = unit_set();
        let g = [Template::new("ga", "a", vec![0]), Template::new("gb", "b", vec![1])];
        let p = [Template::new("pa", "a", vec![2]), Template::new("pb", "b", vec![3])];
        let pipe = ScoringPipeline::new(Pooler::new(PoolingMode::Average));
        let vecs = pipe.template_vectors(g.iter().chain(&p), &set).unwrap();
        let m = build_similarity_matrix(&g.iter().collect::<Vec<_>>(), &p.iter().collect::<Vec<_>>(), &vecs).unwrap();
        assert_eq!(m.scores(), &[Some(1.0), Some(0.0), Some(0.0), Some(1.0)]);
    }

    #[test]
    fn missing_probe_column() {
        let set = unit_set();
        let g = [Template::new("ga", "a", vec![0]), Template::new("gb", "b", vec![1])];
        let p = [Template::new("pa", "a", vec![2]), Template::missing("pb", "b")];
        let pipe = ScoringPipeline::new(Pooler::default());
        let vecs = pipe.template_vectors(g.iter().chain(&p), &set).unwrap();
        let m = build_similarity_matrix(&g.iter().collect::<Vec<_>>(), &p.iter().collect::<Vec<_>>(), &vecs).unwrap();
        assert_eq!(m.get(0, 1), None);
        assert_eq!(m.get(1, 1), None);
        assert_eq!(m.get(0, 0), Some(1.0));
    }

    #[test]
    fn unknown_template_reference() {
        let g = [Template::new("ga", "a", vec![0])];
        let err = build_similarity_matrix(&[&g[0]], &[&g[0]], &HashMap::new());
        assert!(matches!(err, Err(Error::UnknownTemplate(_))));
    }

    #[test]
    fn large_matrix_shape_accepted() {
        // 167 x 1806, the size of one CS2 split
        let set = EmbeddingSet::new(1, vec![Embedding::new(vec![1.0], "a", "m", SourceKind::Image)]).unwrap();
        let g: Vec<Template> = (0..167).map(|i| Template::new(format!("g{i}"), "a", vec![0])).collect();
        let p: Vec<Template> = (0..1806).map(|i| Template::new(format!("p{i}"), "a", vec![0])).collect();
        let pipe = ScoringPipeline::new(Pooler::default());
        let vecs = pipe.template_vectors(g.iter().chain(&p), &set).unwrap();
        let m = build_similarity_matrix(&g.iter().collect::<Vec<_>>(), &p.iter().collect::<Vec<_>>(), &vecs).unwrap();
        assert_eq!((m.n_gallery(), m.n_probe()), (167, 1806));
    }

    #[test]
    fn automatic_setup_flags_templates_without_detections() {
        let ts = vec![Template::new("t0", "a", vec![0, 2]), Template::new("t1", "b", vec![1])];
        let undetected: HashSet<usize> = [1, 2].into_iter().collect();
        let auto = apply_setup(&ts, &undetected, Setup::Automatic);
        assert_eq!(auto[0].members, vec![0]);
        assert!(!auto[0].missing);
        assert!(auto[1].missing);
        assert_eq!(apply_setup(&ts, &undetected, Setup::SemiAutomatic), ts);
        assert_eq!(apply_setup(&ts, &undetected, Setup::Manual), ts);
    }

    #[test]
    fn protocol_rows_round_trip_and_disjointness() {
        let rows = vec![
            ProtocolRow { split_index: 0, role: Role::Train, template_id: "t0".into() },
            ProtocolRow { split_index: 0, role: Role::Gallery, template_id: "t1".into() },
            ProtocolRow { split_index: 0, role: Role::Probe, template_id: "t2".into() },
        ];
        let p = Protocol::from_rows(&rows);
        assert_eq!(p.rows(), rows);
        let t0 = Template::new("t0", "a", vec![0]);
        let t1 = Template::new("t1", "b", vec![1]);
        let t2 = Template::new("t2", "a", vec![2]);
        let map: HashMap<&str, &Template> = [("t0", &t0), ("t1", &t1), ("t2", &t2)].into_iter().collect();
        assert!(matches!(p.validate(&map), Err(Error::Config(_))));
    }
}
