use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{Point, Shape};

/// `p -> s R(theta) p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    /// Radians, counter-clockwise in the x-right, y-up convention.
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: Self = Self { scale: 1.0, theta: 0.0, tx: 0.0, ty: 0.0 };

    pub fn apply(&self, p: &Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(self.scale * (c * p.x - s * p.y) + self.tx, self.scale * (s * p.x + c * p.y) + self.ty)
    }

    pub fn apply_shape(&self, shape: &Shape) -> Shape {
        Shape::new(shape.points.iter().map(|p| self.apply(p)).collect())
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &SimilarityTransform) -> SimilarityTransform {
        let t = self.apply(&Point::new(first.tx, first.ty));
        SimilarityTransform { scale: self.scale * first.scale, theta: self.theta + first.theta, tx: t.x, ty: t.y }
    }

    pub fn inverse(&self) -> Result<SimilarityTransform> {
        if !(self.scale.abs() > 0.0) {
            return Err(Error::Degenerate("zero-scale transform has no inverse".into()));
        }
        let rot = SimilarityTransform { scale: 1.0 / self.scale, theta: -self.theta, tx: 0.0, ty: 0.0 };
        let t = rot.apply(&Point::new(self.tx, self.ty));
        Ok(SimilarityTransform { tx: -t.x, ty: -t.y, ..rot })
    }

    /// Sum of squared distances between transformed `src` and `dst`.
    pub fn residual(&self, src: &[Point], dst: &[Point]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(p, q)| {
                let r = self.apply(p);
                (r.x - q.x).powi(2) + (r.y - q.y).powi(2)
            })
            .sum()
    }
}

/// Least-squares similarity mapping `src` onto `dst` (closed-form Procrustes).
pub fn similarity_transform(src: &[Point], dst: &[Point]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch { expected: src.len(), found: dst.len() });
    }
    if src.len() < 2 {
        return Err(Error::Degenerate(format!("need >= 2 points, got {}", src.len())));
    }
    let n = src.len() as f64;
    let mean = |pts: &[Point]| {
        let (x, y) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
        Point::new(x / n, y / n)
    };
    let (ps, qs) = (mean(src), mean(dst));
    let (mut a, mut b, mut norm) = (0.0, 0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let (px, py) = (p.x - ps.x, p.y - ps.y);
        let (qx, qy) = (q.x - qs.x, q.y - qs.y);
        a += px * qx + py * qy;
        b += px * qy - py * qx;
        norm += px * px + py * py;
    }
    let spread = src.iter().map(|p| p.dist(&ps)).fold(0.0, f64::max);
    if !(norm > 0.0) || spread <= 1e-12 * (1.0 + ps.x.abs().max(ps.y.abs())) {
        return Err(Error::Degenerate("source points coincide".into()));
    }
    let (a, b) = (a / norm, b / norm);
    let rot = SimilarityTransform { scale: a.hypot(b), theta: b.atan2(a), tx: 0.0, ty: 0.0 };
    let r = rot.apply(&ps);
    Ok(SimilarityTransform { tx: qs.x - r.x, ty: qs.y - r.y, ..rot })
}

/// Which landmarks feed the 7-point alignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentIndices(pub [usize; 7]);

impl Default for AlignmentIndices {
    /// 68-point markup: outer/inner corners of each eye, nose tip, mouth corners.
    fn default() -> Self {
        Self([36, 39, 42, 45, 30, 48, 54])
    }
}

/// Selects the 7 alignment points and fits the transform toward `canonical`.
pub fn align_face(
    landmarks: &Shape,
    canonical: &[Point; 7],
    indices: &AlignmentIndices,
) -> Result<SimilarityTransform> {
    let src =
        indices
            .0
            .iter()
            .map(|&i| {
                landmarks.points.get(i).copied().ok_or_else(|| {
                    Error::Config(format!("alignment index {i} outside a {}-point shape", landmarks.len()))
                })
            })
            .collect::<Result<Vec<Point>>>()?;
    similarity_transform(&src, canonical)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts() -> Vec<Point> {
        vec![Point::new(0.0, 0.0), Point::new(4.0, 1.0), Point::new(2.0, 5.0)]
    }

    #[test]
    fn identity_and_scale() {
        let t = similarity_transform(&pts(), &pts()).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12 && t.theta.abs() < 1e-12 && t.tx.abs() < 1e-12 && t.ty.abs() < 1e-12);
        let doubled: Vec<Point> = pts().iter().map(|p| Point::new(2.0 * p.x, 2.0 * p.y)).collect();
        let t = similarity_transform(&pts(), &doubled).unwrap();
        assert!((t.scale - 2.0).abs() < 1e-12 && t.theta.abs() < 1e-12 && t.tx.abs() < 1e-12);
    }

    #[test]
    fn coincident_points_rejected() {
        let same = vec![Point::new(1.0, 1.0); 3];
        assert!(matches!(similarity_transform(&same, &pts()), Err(Error::Degenerate(_))));
        assert!(similarity_transform(&pts()[..1], &pts()[..1]).is_err());
    }

    #[test]
    fn inverse_and_compose() {
        let t = SimilarityTransform { scale: 1.7, theta: 0.4, tx: -3.0, ty: 8.0 };
        let back = t.inverse().unwrap();
        for p in pts() {
            let q = back.apply(&t.apply(&p));
            assert!(q.dist(&p) < 1e-12);
        }
        let u = SimilarityTransform { scale: 0.5, theta: -1.1, tx: 2.0, ty: 1.0 };
        let p = Point::new(3.0, -2.0);
        assert!(u.compose(&t).apply(&p).dist(&u.apply(&t.apply(&p))) < 1e-12);
    }

    #[test]
    fn align_selects_configured_points() {
        let mut shape = Shape::new(vec![Point::default(); 68]);
        let canon = [
            Point::new(30.0, 40.0),
            Point::new(45.0, 40.0),
            Point::new(60.0, 40.0),
            Point::new(75.0, 40.0),
            Point::new(52.0, 60.0),
            Point::new(38.0, 78.0),
            Point::new(66.0, 78.0),
        ];
        for (k, &i) in AlignmentIndices::default().0.iter().enumerate() {
            shape.points[i] = Point::new(canon[k].x - 10.0, canon[k].y);
        }
        let t = align_face(&shape, &canon, &AlignmentIndices::default()).unwrap();
        assert!((t.tx - 10.0).abs() < 1e-9 && t.ty.abs() < 1e-9 && (t.scale - 1.0).abs() < 1e-12);
        assert!(align_face(&Shape::new(vec![Point::default(); 10]), &canon, &AlignmentIndices::default()).is_err());
    }
}
