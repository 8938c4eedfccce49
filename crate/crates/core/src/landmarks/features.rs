use rand::Rng;

use crate::data::seeded_rng;
use crate::error::{Error, Result};
use crate::landmarks::{GrayImage, Shape};

/// Shape-indexed descriptor: `(image, current shape, patch scale) -> features`.
pub trait FeatureFunction {
    /// Output length for shapes of `points` landmarks.
    fn dim(&self, points: usize) -> usize;
    fn extract(&self, img: &GrayImage, shape: &Shape, patch_scale: f64) -> Result<Vec<f64>>;
}

/// Normalized pixel differences `(a - b) / (|a| + |b| + eps)` between pairs
/// of locations sampled around each landmark, offsets scaled by
/// `patch_scale x face size`. A trailing constant 1 acts as the bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDifference {
    pub pairs_per_point: usize,
    pub seed: u64,
    offsets: Vec<[f64; 4]>,
}

const EPS: f64 = 1e-6;

impl PixelDifference {
    pub fn new(pairs_per_point: usize, seed: u64) -> Self {
        Self { pairs_per_point, seed, offsets: Vec::new() }
    }

    fn offsets_for(&self, points: usize) -> Vec<[f64; 4]> {
        if self.offsets.len() == points * self.pairs_per_point {
            return self.offsets.clone();
        }
        let mut rng = seeded_rng(self.seed);
        (0..points * self.pairs_per_point).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..=1.0))).collect()
    }

    /// Caches offsets for a fixed landmark count.
    pub fn prepared(mut self, points: usize) -> Self {
        self.offsets = self.offsets_for(points);
        self
    }
}

impl Default for PixelDifference {
    fn default() -> Self {
        Self::new(4, 0)
    }
}

impl FeatureFunction for PixelDifference {
    fn dim(&self, points: usize) -> usize {
        points * self.pairs_per_point + 1
    }

    fn extract(&self, img: &GrayImage, shape: &Shape, patch_scale: f64) -> Result<Vec<f64>> {
        let radius = patch_scale * shape.extent();
        if !radius.is_finite() {
            return Err(Error::Degenerate("non-finite shape".into()));
        }
        let offsets = self.offsets_for(shape.len());
        let mut out = Vec::with_capacity(self.dim(shape.len()));
        for (i, p) in shape.points.iter().enumerate() {
            for o in &offsets[i * self.pairs_per_point..(i + 1) * self.pairs_per_point] {
                let a = img.sample(p.x + o[0] * radius, p.y + o[1] * radius);
                let b = img.sample(p.x + o[2] * radius, p.y + o[3] * radius);
                out.push((a - b) / (a.abs() + b.abs() + EPS));
            }
        }
        out.push(1.0);
        Ok(out)
    }
}

/// Always `[1.0]`: turns a stage into a constant offset.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantFeature;

impl FeatureFunction for ConstantFeature {
    fn dim(&self, _points: usize) -> usize {
        1
    }

    fn extract(&self, _img: &GrayImage, _shape: &Shape, _patch_scale: f64) -> Result<Vec<f64>> {
        Ok(vec![1.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmarks::Point;

    #[test]
    fn fixed_length_and_bias() {
        let img = GrayImage::zeros(32, 32);
        let shape = Shape::new(vec![Point::new(10.0, 10.0), Point::new(20.0, 20.0)]);
        let f = PixelDifference::new(3, 7);
        let v = f.extract(&img, &shape, 0.3).unwrap();
        assert_eq!(v.len(), f.dim(2));
        assert_eq!(*v.last().unwrap(), 1.0);
        assert_eq!(f.clone().prepared(2).extract(&img, &shape, 0.3).unwrap(), v);
    }
}
