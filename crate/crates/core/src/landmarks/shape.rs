use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, o: &Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Ordered landmark coordinates in pixels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Shape {
    pub points: Vec<Point>,
}

impl Shape {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Interleaved `[x0, y0, x1, y1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn from_flat(v: &[f64]) -> Self {
        Self::new(v.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect())
    }

    pub fn add_flat(&mut self, delta: &[f64]) {
        for (p, d) in self.points.iter_mut().zip(delta.chunks_exact(2)) {
            p.x += d[0];
            p.y += d[1];
        }
    }

    pub fn centroid(&self) -> Point {
        let n = self.points.len().max(1) as f64;
        let (sx, sy) = self.points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
        Point::new(sx / n, sy / n)
    }

    /// Larger side of the bounding box of the points.
    pub fn extent(&self) -> f64 {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        (x1 - x0).max(y1 - y0).max(0.0)
    }

    fn mean_of(&self, idx: &[usize]) -> Point {
        let n = idx.len() as f64;
        let (sx, sy) = idx.iter().fold((0.0, 0.0), |(a, b), &i| (a + self.points[i].x, b + self.points[i].y));
        Point::new(sx / n, sy / n)
    }
}

/// How point errors are normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ErrorNorm {
    /// Distance from the nose tip to the midpoint of the two eye centers.
    NoseToEyes { nose: usize, left_eye: Vec<usize>, right_eye: Vec<usize> },
    /// Raw pixels.
    Pixels,
}

impl ErrorNorm {
    /// 68-point markup: nose tip 30, eyes 36-41 and 42-47.
    pub fn markup68() -> Self {
        ErrorNorm::NoseToEyes { nose: 30, left_eye: (36..=41).collect(), right_eye: (42..=47).collect() }
    }

    /// The 68-point normalization when the shape has 68 points, pixels otherwise.
    pub fn for_len(len: usize) -> Self {
        if len == 68 {
            Self::markup68()
        } else {
            ErrorNorm::Pixels
        }
    }

    fn scale(&self, truth: &Shape) -> Result<f64> {
        match self {
            ErrorNorm::Pixels => Ok(1.0),
            ErrorNorm::NoseToEyes { nose, left_eye, right_eye } => {
                let max = left_eye.iter().chain(right_eye).chain([nose]).copied().max().unwrap_or(0);
                if max >= truth.len() || left_eye.is_empty() || right_eye.is_empty() {
                    return Err(Error::Config(format!("normalization indices exceed {} points", truth.len())));
                }
                let l = truth.mean_of(left_eye);
                let r = truth.mean_of(right_eye);
                let mid = Point::new((l.x + r.x) / 2.0, (l.y + r.y) / 2.0);
                let d = truth.points[*nose].dist(&mid);
                if !(d > 0.0) {
                    return Err(Error::Degenerate("nose tip coincides with the eye midpoint".into()));
                }
                Ok(d)
            }
        }
    }
}

/// Mean point-to-point distance divided by the normalization distance of `truth`.
pub fn normalized_error(pred: &Shape, truth: &Shape, norm: &ErrorNorm) -> Result<f64> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch { expected: truth.len(), found: pred.len() });
    }
    let mean = pred.points.iter().zip(&truth.points).map(|(a, b)| a.dist(b)).sum::<f64>() / truth.len() as f64;
    Ok(mean / norm.scale(truth)?)
}

pub fn shape_csv(shape: &Shape) -> String {
    let mut s = String::from("point_index,x,y\n");
    for (i, p) in shape.points.iter().enumerate() {
        s.push_str(&format!("{i},{},{}\n", p.x, p.y));
    }
    s
}

pub fn parse_shape(text: &str) -> Result<Shape> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["point_index", "x", "y"] {
        return Err(Error::MalformedHeader(format!("shape header `{}`", header.join(","))));
    }
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.trim().parse().ok())
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("shape line {}: bad column {k}", i + 2)))
        };
        if num(0)? as usize != i {
            return Err(Error::Parse(format!("shape line {}: point indices must run 0, 1, 2, ...", i + 2)));
        }
        points.push(Point::new(num(1)?, num(2)?));
    }
    Ok(Shape::new(points))
}

pub fn write_shape(path: &Path, shape: &Shape) -> Result<()> {
    fs::write(path, shape_csv(shape)).map_err(|e| Error::io(path, e))
}

pub fn load_shape(path: &Path) -> Result<Shape> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_shape(&text)
}
