use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::io::{manifest_rows, ManifestRow};
use crate::data::{seeded_rng, Embedding, EmbeddingSet, SourceKind, Template};
use crate::embedding::l2_normalize;
use crate::error::{Error, Result};

/// How a subject's members are grouped into media.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MediaLayout {
    /// `per_subject` members dealt into `media_per_subject` contiguous media.
    #[default]
    Uniform,
    /// Every template opens with one video of `video_frames` near-duplicate
    /// frames; the remaining media are single images. `per_subject` is ignored.
    ImbalancedVideo { video_frames: usize },
}

/// Parameters of a labelled Gaussian-cluster embedding corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub subjects: usize,
    pub per_subject: usize,
    pub ambient_dim: usize,
    /// Subject means live in a random subspace of this dimension.
    pub intrinsic_dim: usize,
    /// Per-member isotropic noise.
    pub noise_sigma: f64,
    pub media_per_subject: usize,
    /// Noise shared by all members of one media.
    pub media_noise_sigma: f64,
    pub templates_per_subject: usize,
    pub layout: MediaLayout,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            subjects: 20,
            per_subject: 40,
            ambient_dim: 64,
            intrinsic_dim: 8,
            noise_sigma: 0.25,
            media_per_subject: 4,
            media_noise_sigma: 0.0,
            templates_per_subject: 2,
            layout: MediaLayout::Uniform,
            seed: 1,
        }
    }
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.intrinsic_dim == 0 || self.intrinsic_dim > self.ambient_dim {
            return Err(Error::Config(format!(
                "intrinsic dimension {} must be in 1..={}",
                self.intrinsic_dim, self.ambient_dim
            )));
        }
        if !(self.noise_sigma >= 0.0) || !(self.media_noise_sigma >= 0.0) {
            return Err(Error::Config("noise sigmas must be >= 0".into()));
        }
        if self.subjects == 0 || self.media_per_subject == 0 || self.templates_per_subject == 0 {
            return Err(Error::Config("subjects, media and templates per subject must be positive".into()));
        }
        if self.media_per_subject < self.templates_per_subject {
            return Err(Error::Config(format!(
                "{} media cannot fill {} templates per subject",
                self.media_per_subject, self.templates_per_subject
            )));
        }
        match self.layout {
            MediaLayout::Uniform if self.per_subject < self.media_per_subject => {
                Err(Error::Config(format!("{} members cannot fill {} media", self.per_subject, self.media_per_subject)))
            }
            MediaLayout::ImbalancedVideo { video_frames: 0 } => {
                Err(Error::Config("video needs at least one frame".into()))
            }
            _ => Ok(()),
        }
    }

    fn media_sizes(&self) -> Vec<usize> {
        match self.layout {
            MediaLayout::Uniform => (0..self.media_per_subject)
                .map(|m| {
                    let base = self.per_subject / self.media_per_subject;
                    base + usize::from(m < self.per_subject % self.media_per_subject)
                })
                .collect(),
            MediaLayout::ImbalancedVideo { video_frames } => (0..self.media_per_subject)
                .map(|m| if m < self.templates_per_subject { video_frames } else { 1 })
                .collect(),
        }
    }
}

/// Generated corpus: embeddings plus their template grouping.
#[derive(Debug, Clone)]
pub struct ClusterData {
    pub embeddings: EmbeddingSet,
    pub templates: Vec<Template>,
    /// Unit-norm subject means, in subject order.
    pub means: Vec<Vec<f64>>,
}

impl ClusterData {
    pub fn manifest(&self) -> Vec<ManifestRow> {
        manifest_rows(&self.templates, &self.embeddings)
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// Random orthonormal basis of `k` vectors in `m` dimensions (Gram-Schmidt).
fn random_basis<R: Rng + ?Sized>(rng: &mut R, k: usize, m: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = gaussian(rng, m, 1.0);
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        if let Ok(u) = l2_normalize(&v) {
            if v.iter().map(|x| x * x).sum::<f64>() > 1e-12 {
                basis.push(u);
            }
        }
    }
    basis
}

pub fn subject_label(s: usize) -> String {
    format!("s{s:03}")
}

/// Labelled clusters: one mean direction per subject drawn uniformly on the
/// unit sphere of a random intrinsic subspace, members perturbed by isotropic
/// noise and re-normalized, grouped into media and templates.
pub fn gen_clusters(spec: &ClusterSpec) -> Result<ClusterData> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let m = spec.ambient_dim;
    let basis = random_basis(&mut rng, spec.intrinsic_dim, m);
    let sizes = spec.media_sizes();

    let mut items = Vec::new();
    let mut templates = Vec::new();
    let mut means = Vec::with_capacity(spec.subjects);
    for s in 0..spec.subjects {
        let subject = subject_label(s);
        let z = l2_normalize(&gaussian(&mut rng, spec.intrinsic_dim, 1.0))?;
        let mut mean = vec![0.0; m];
        for (zi, b) in z.iter().zip(&basis) {
            mean.iter_mut().zip(b).for_each(|(x, y)| *x += zi * y);
        }
        let mut subject_templates: Vec<Template> = (0..spec.templates_per_subject)
            .map(|t| Template::new(format!("{subject}_t{t}"), subject.clone(), Vec::new()))
            .collect();
        for (mi, &size) in sizes.iter().enumerate() {
            let media = format!("{subject}_m{mi:02}");
            let kind = if size > 1 { SourceKind::VideoFrame } else { SourceKind::Image };
            let offset = gaussian(&mut rng, m, spec.media_noise_sigma);
            let template = &mut subject_templates[mi % spec.templates_per_subject];
            for _ in 0..size {
                let noise = gaussian(&mut rng, m, spec.noise_sigma);
                let v: Vec<f64> = (0..m).map(|d| mean[d] + offset[d] + noise[d]).collect();
                template.members.push(items.len());
                items.push(Embedding::new(l2_normalize(&v)?, subject.clone(), media.clone(), kind));
            }
        }
        for t in &mut subject_templates {
            t.missing = t.members.is_empty();
        }
        templates.extend(subject_templates);
        means.push(mean);
    }
    Ok(ClusterData { embeddings: EmbeddingSet::new(m, items)?, templates, means })
}
