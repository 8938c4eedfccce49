use crate::data::{dot, norm};
use crate::error::{Error, Result};

/// Tolerance on the unit-norm precondition of [`cosine_similarity`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// Scales `v` to unit Euclidean length.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate(format!("cannot normalize a vector of norm {n}")));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Dot product of two unit vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    for v in [a, b] {
        let n = norm(v);
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::Degenerate(format!("cosine_similarity expects unit vectors, got norm {n}")));
        }
    }
    Ok(dot(a, b))
}
