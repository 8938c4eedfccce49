//! Landmark corpus: 68-point faces rendered as Gaussian blobs.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::seeded_rng;
use crate::error::{Error, Result};
use crate::landmarks::{GrayImage, Point, Shape, SimilarityTransform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCorpusSpec {
    pub samples: usize,
    pub image_size: usize,
    /// Half the face width in pixels.
    pub face_radius: f64,
    pub max_rotation: f64,
    pub max_scale_jitter: f64,
    pub max_shift: f64,
    pub point_noise: f64,
    pub blob_sigma: f64,
    pub seed: u64,
}

impl Default for ShapeCorpusSpec {
    fn default() -> Self {
        Self {
            samples: 200,
            image_size: 128,
            face_radius: 40.0,
            max_rotation: 0.15,
            max_scale_jitter: 0.1,
            max_shift: 6.0,
            point_noise: 0.5,
            blob_sigma: 2.5,
            seed: 5,
        }
    }
}

fn ellipse(out: &mut Vec<Point>, cx: f64, cy: f64, rx: f64, ry: f64, angles: &[f64]) {
    out.extend(angles.iter().map(|a| Point::new(cx + rx * a.cos(), cy - ry * a.sin())));
}

/// Canonical 68-point layout in a unit face box centered at the origin (y down).
pub fn unit_face() -> Shape {
    let mut p = Vec::with_capacity(68);
    for i in 0..17 {
        let t = PI * i as f64 / 16.0;
        p.push(Point::new(-0.95 * t.cos(), -0.1 + 0.9 * t.sin()));
    }
    for (x0, x1) in [(-0.75, -0.15), (0.15, 0.75)] {
        for i in 0..5 {
            let u = i as f64 / 4.0;
            p.push(Point::new(x0 + (x1 - x0) * u, -0.45 - 0.08 * (PI * u).sin()));
        }
    }
    for i in 0..4 {
        p.push(Point::new(0.0, -0.3 + 0.4 * i as f64 / 3.0));
    }
    for i in 0..5 {
        p.push(Point::new(-0.2 + 0.1 * i as f64, 0.2 + 0.03 * (1.0 - ((i as f64) - 2.0).abs() / 2.0)));
    }
    let deg = |d: f64| d * PI / 180.0;
    let eye = [180.0, 120.0, 60.0, 0.0, 300.0, 240.0].map(deg);
    ellipse(&mut p, -0.4, -0.25, 0.15, 0.06, &eye);
    ellipse(&mut p, 0.4, -0.25, 0.15, 0.06, &eye);
    let outer: Vec<f64> = (0..12).map(|i| deg(180.0 - 30.0 * i as f64)).collect();
    ellipse(&mut p, 0.0, 0.45, 0.35, 0.12, &outer);
    let inner: Vec<f64> = (0..8).map(|i| deg(180.0 - 45.0 * i as f64)).collect();
    ellipse(&mut p, 0.0, 0.45, 0.2, 0.05, &inner);
    Shape::new(p)
}

/// The unit face placed in the middle of the image at `face_radius` scale.
pub fn mean_face(spec: &ShapeCorpusSpec) -> Shape {
    let c = spec.image_size as f64 / 2.0;
    let t = SimilarityTransform { scale: spec.face_radius, theta: 0.0, tx: c, ty: c };
    t.apply_shape(&unit_face())
}

/// Sum of isotropic Gaussian blobs, one per landmark, cut at 3 sigma.
pub fn render_blobs(shape: &Shape, size: usize, sigma: f64) -> GrayImage {
    let mut img = GrayImage::zeros(size, size);
    let reach = (3.0 * sigma).ceil() as i64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let data = img.data_mut();
    for p in &shape.points {
        let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
        for y in (cy - reach).max(0)..=(cy + reach).min(size as i64 - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(size as i64 - 1) {
                let d2 = (x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2);
                data[y as usize * size + x as usize] += (-d2 * inv).exp() as f32;
            }
        }
    }
    img
}

/// Samples: mean face under a random similarity perturbation plus per-point noise.
pub fn gen_shape_corpus(spec: &ShapeCorpusSpec) -> Result<(Vec<(GrayImage, Shape)>, Shape)> {
    if spec.image_size < 8 || !(spec.face_radius > 0.0) || !(spec.blob_sigma > 0.0) {
        return Err(Error::Config("shape corpus needs image_size >= 8 and positive radius/sigma".into()));
    }
    let mut rng = seeded_rng(spec.seed);
    let mean = mean_face(spec);
    let c = spec.image_size as f64 / 2.0;
    let mut out = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let theta = rng.random_range(-1.0..=1.0) * spec.max_rotation;
        let scale = 1.0 + rng.random_range(-1.0..=1.0) * spec.max_scale_jitter;
        let (dx, dy) = (rng.random_range(-1.0..=1.0) * spec.max_shift, rng.random_range(-1.0..=1.0) * spec.max_shift);
        // rotate and scale about the image center, then shift
        let about = SimilarityTransform { scale, theta, tx: 0.0, ty: 0.0 };
        let center = about.apply(&Point::new(c, c));
        let t = SimilarityTransform { tx: c - center.x + dx, ty: c - center.y + dy, ..about };
        let mut shape = t.apply_shape(&mean);
        for p in &mut shape.points {
            let (nx, ny): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            p.x += spec.point_noise * nx;
            p.y += spec.point_noise * ny;
        }
        out.push((render_blobs(&shape, spec.image_size, spec.blob_sigma), shape));
    }
    Ok((out, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmarks::AlignmentIndices;

    #[test]
    fn layout_has_68_points_with_expected_landmarks() {
        let f = unit_face();
        assert_eq!(f.len(), 68);
        let idx = AlignmentIndices::default().0;
        // eye corners left to right, mouth corners below the nose
        assert!(f.points[idx[0]].x < f.points[idx[1]].x && f.points[idx[1]].x < f.points[idx[2]].x);
        assert!(f.points[idx[2]].x < f.points[idx[3]].x);
        assert!(f.points[idx[5]].y > f.points[idx[4]].y && f.points[idx[6]].y > f.points[idx[4]].y);
        assert!(f.points[idx[5]].x < 0.0 && f.points[idx[6]].x > 0.0);
    }

    #[test]
    fn corpus_is_deterministic() {
        let spec = ShapeCorpusSpec { samples: 3, ..Default::default() };
        let (a, _) = gen_shape_corpus(&spec).unwrap();
        let (b, _) = gen_shape_corpus(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a[0].0.data().iter().any(|v| *v > 0.5));
    }
}
