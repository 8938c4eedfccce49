use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::landmarks::{normalized_error, ErrorNorm, FeatureFunction, GrayImage, Shape};

pub const DEFAULT_PATCH_SCALES: [f64; 5] = [0.4, 0.3, 0.2, 0.15, 0.1];

/// One cascade stage: `weights` maps features to a `2L` shape increment.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRegressor {
    pub stage_index: usize,
    pub weights: EmbeddingMatrix,
    pub patch_scale: f64,
}

impl StageRegressor {
    pub fn increment(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.weights.cols() {
            return Err(Error::DimensionMismatch { expected: self.weights.cols(), found: features.len() });
        }
        self.weights.apply(features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    /// One stage per entry; must be strictly decreasing.
    pub patch_scales: Vec<f64>,
    pub ridge: f64,
    /// Shrink each fitted stage by the best factor in {1, 1/2, 1/4, 1/8, 0}
    /// on training error, so the error can never go up.
    pub line_search: bool,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self { patch_scales: DEFAULT_PATCH_SCALES.to_vec(), ridge: 1e-3, line_search: true }
    }
}

impl CascadeConfig {
    pub fn with_stages(stages: usize) -> Self {
        Self { patch_scales: DEFAULT_PATCH_SCALES[..stages.min(5)].to_vec(), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_scales.is_empty() {
            return Err(Error::Config("cascade needs at least one stage".into()));
        }
        if self.patch_scales.windows(2).any(|w| !(w[1] < w[0])) || self.patch_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("patch scales must be positive and strictly decreasing".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config(format!("ridge {} must be >= 0", self.ridge)));
        }
        Ok(())
    }
}

/// `S^t = S^{t-1} + W^t phi(I, S^{t-1})`, applied once per stage.
pub fn cascade_predict(
    img: &GrayImage,
    s0: &Shape,
    stages: &[StageRegressor],
    phi: &dyn FeatureFunction,
) -> Result<Shape> {
    if stages.is_empty() {
        return Err(Error::Config("cascade has no stages".into()));
    }
    let mut s = s0.clone();
    for stage in stages {
        if stage.weights.rows() != 2 * s.len() {
            return Err(Error::DimensionMismatch { expected: 2 * s.len(), found: stage.weights.rows() });
        }
        let delta = stage.increment(&phi.extract(img, &s, stage.patch_scale)?)?;
        s.add_flat(&delta);
    }
    Ok(s)
}

/// Result of training: the stages plus the mean training error after each
/// stage (index 0 is the initial mean-shape error).
#[derive(Debug, Clone)]
pub struct TrainedCascade {
    pub stages: Vec<StageRegressor>,
    pub errors: Vec<f64>,
}

fn mean_error(shapes: &[Shape], truth: &[Shape], norm: &ErrorNorm) -> Result<f64> {
    let mut total = 0.0;
    for (s, t) in shapes.iter().zip(truth) {
        total += normalized_error(s, t, norm)?;
    }
    Ok(total / shapes.len() as f64)
}

/// Ridge solution of `X W^T ≈ R`, returned as `W` with shape `targets x features`.
fn ridge_fit(x: &DMatrix<f64>, r: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    let mut gram = x.transpose() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let rhs = x.transpose() * r;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Singular(format!("normal equations are not positive definite with ridge {ridge}; use ridge > 0"))
    })?;
    let w = chol.solve(&rhs).transpose();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("ridge solution is not finite; use a larger ridge".into()));
    }
    Ok(w)
}

/// Fits each stage by ridge regression from its features to the residual
/// `S_gt - S^{t-1}` over all samples.
pub fn cascade_train(
    samples: &[(GrayImage, Shape)],
    mean_shape: &Shape,
    phi: &dyn FeatureFunction,
    cfg: &CascadeConfig,
) -> Result<TrainedCascade> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(Error::Config(format!("cascade training needs >= 2 samples, got {}", samples.len())));
    }
    let l = mean_shape.len();
    if let Some((_, s)) = samples.iter().find(|(_, s)| s.len() != l) {
        return Err(Error::DimensionMismatch { expected: l, found: s.len() });
    }
    let norm = ErrorNorm::for_len(l);
    let truth: Vec<Shape> = samples.iter().map(|(_, s)| s.clone()).collect();
    let mut current: Vec<Shape> = vec![mean_shape.clone(); samples.len()];
    let mut errors = vec![mean_error(&current, &truth, &norm)?];
    let mut stages = Vec::with_capacity(cfg.patch_scales.len());

    for (t, &scale) in cfg.patch_scales.iter().enumerate() {
        let feats: Vec<Vec<f64>> =
            samples.iter().zip(&current).map(|((img, _), s)| phi.extract(img, s, scale)).collect::<Result<_>>()?;
        let d = feats[0].len();
        if let Some(f) = feats.iter().find(|f| f.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: f.len() });
        }
        let x = DMatrix::from_fn(samples.len(), d, |i, j| feats[i][j]);
        let r = DMatrix::from_fn(samples.len(), 2 * l, |i, k| {
            let (a, b) = (&truth[i].points[k / 2], &current[i].points[k / 2]);
            if k % 2 == 0 {
                a.x - b.x
            } else {
                a.y - b.y
            }
        });
        let w = ridge_fit(&x, &r, cfg.ridge)?;
        let deltas: Vec<DVector<f64>> = feats.iter().map(|f| &w * DVector::from_column_slice(f)).collect();

        let apply = |c: f64| -> Vec<Shape> {
            current
                .iter()
                .zip(&deltas)
                .map(|(s, dlt)| {
                    let mut s = s.clone();
                    let scaled: Vec<f64> = dlt.iter().map(|v| v * c).collect();
                    s.add_flat(&scaled);
                    s
                })
                .collect()
        };
        let factors: &[f64] = if cfg.line_search { &[1.0, 0.5, 0.25, 0.125, 0.0] } else { &[1.0] };
        let mut best: Option<(f64, f64, Vec<Shape>)> = None;
        for &c in factors {
            let shapes = apply(c);
            let err = mean_error(&shapes, &truth, &norm)?;
            if best.as_ref().is_none_or(|(e, _, _)| err < *e) {
                best = Some((err, c, shapes));
            }
        }
        let (err, c, shapes) = best.expect("at least one factor");
        let data: Vec<f64> = w.transpose().iter().map(|v| v * c).collect();
        stages.push(StageRegressor {
            stage_index: t + 1,
            weights: EmbeddingMatrix::from_row_major(2 * l, d, data)?,
            patch_scale: scale,
        });
        current = shapes;
        errors.push(err);
    }
    Ok(TrainedCascade { stages, errors })
}

const MODEL_MAGIC: &[u8; 4] = b"VPL1";

pub fn encode_model(stages: &[StageRegressor]) -> Vec<u8> {
    let mut out = MODEL_MAGIC.to_vec();
    out.extend((stages.len() as u32).to_le_bytes());
    for s in stages {
        out.extend((s.patch_scale as f32).to_le_bytes());
        out.extend((s.weights.rows() as u32).to_le_bytes());
        out.extend((s.weights.cols() as u32).to_le_bytes());
        for v in s.weights.as_slice() {
            out.extend((*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<Vec<StageRegressor>> {
    if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::MalformedHeader("expected VPL1 landmark model".into()));
    }
    let mut pos = 4;
    let mut take = |n: usize| -> Result<&[u8]> {
        let end = pos + n;
        if end > bytes.len() {
            return Err(Error::TruncatedPayload { expected: end, found: bytes.len() });
        }
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let count = u32_at(take(4)?) as usize;
    let mut stages = Vec::with_capacity(count.min(64));
    for t in 0..count {
        let scale = f32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        let rows = u32_at(take(4)?) as usize;
        let cols = u32_at(take(4)?) as usize;
        let payload = take(rows * cols * 4)?;
        let data = payload.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect();
        stages.push(StageRegressor {
            stage_index: t + 1,
            weights: EmbeddingMatrix::from_row_major(rows, cols, data)?,
            patch_scale: f64::from(scale),
        });
    }
    if pos != bytes.len() {
        return Err(Error::Parse(format!("{} trailing bytes after landmark model", bytes.len() - pos)));
    }
    Ok(stages)
}

pub fn write_model(path: &Path, stages: &[StageRegressor]) -> Result<()> {
    fs::write(path, encode_model(stages)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Vec<StageRegressor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmarks::{ConstantFeature, Point};

    fn square() -> Shape {
        Shape::new(vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(10.0, 10.0)])
    }

    fn stage(rows: usize, cols: usize, data: Vec<f64>, scale: f64) -> StageRegressor {
        StageRegressor {
            stage_index: 1,
            weights: EmbeddingMatrix::from_row_major(rows, cols, data).unwrap(),
            patch_scale: scale,
        }
    }

    #[test]
    fn zero_regressors_keep_initial_shape() {
        let img = GrayImage::zeros(4, 4);
        let stages = vec![stage(6, 1, vec![0.0; 6], 0.4), stage(6, 1, vec![0.0; 6], 0.3)];
        assert_eq!(cascade_predict(&img, &square(), &stages, &ConstantFeature).unwrap(), square());
    }

    #[test]
    fn constant_offset_stage() {
        let img = GrayImage::zeros(4, 4);
        let stages = vec![stage(6, 1, vec![1.0, -2.0, 1.0, -2.0, 1.0, -2.0], 0.4)];
        let out = cascade_predict(&img, &square(), &stages, &ConstantFeature).unwrap();
        assert_eq!(out.points[2], Point::new(11.0, 8.0));
    }

    #[test]
    fn feature_length_mismatch() {
        let img = GrayImage::zeros(4, 4);
        let stages = vec![stage(6, 2, vec![0.0; 12], 0.4)];
        assert!(matches!(
            cascade_predict(&img, &square(), &stages, &ConstantFeature),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constant_offset_is_learned() {
        // every target is the mean shape shifted by (2, -1): one constant feature suffices
        let target = {
            let mut s = square();
            s.add_flat(&[2.0, -1.0, 2.0, -1.0, 2.0, -1.0]);
            s
        };
        let samples = vec![(GrayImage::zeros(4, 4), target.clone()); 3];
        let cfg = CascadeConfig { patch_scales: vec![0.4], ridge: 0.0, line_search: false };
        let trained = cascade_train(&samples, &square(), &ConstantFeature, &cfg).unwrap();
        let out = cascade_predict(&samples[0].0, &square(), &trained.stages, &ConstantFeature).unwrap();
        for (a, b) in out.points.iter().zip(&target.points) {
            assert!(a.dist(b) < 1e-9);
        }
    }

    #[test]
    fn singular_without_ridge() {
        struct Zeros;
        impl FeatureFunction for Zeros {
            fn dim(&self, _: usize) -> usize {
                2
            }
            fn extract(&self, _: &GrayImage, _: &Shape, _: f64) -> Result<Vec<f64>> {
                Ok(vec![0.0, 0.0])
            }
        }
        let samples = vec![(GrayImage::zeros(2, 2), square()); 2];
        let cfg = CascadeConfig { patch_scales: vec![0.4], ridge: 0.0, line_search: false };
        assert!(matches!(cascade_train(&samples, &square(), &Zeros, &cfg), Err(Error::Singular(_))));
    }

    #[test]
    fn model_round_trip() {
        let stages = vec![stage(2, 3, vec![0.5, -1.0, 2.0, 0.0, 0.25, 4.0], 0.4), stage(2, 1, vec![1.0, 2.0], 0.2)];
        let bytes = encode_model(&stages);
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].weights, stages[0].weights);
        assert_eq!(encode_model(&back), bytes);
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_model(b"VPE1\0\0\0\0").is_err());
    }

    #[test]
    fn config_checks() {
        assert!(CascadeConfig { patch_scales: vec![0.2, 0.3], ..Default::default() }.validate().is_err());
        assert!(CascadeConfig { patch_scales: vec![], ..Default::default() }.validate().is_err());
        assert_eq!(CascadeConfig::with_stages(1).patch_scales, vec![0.4]);
    }
}
