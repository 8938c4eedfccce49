//! Triplet hinge objectives and their SGD updates.
//!
//! Similarity form (TSE): `max(0, margin + a'W'Wn - a'W'Wp)`.
//! Distance form (TDE):   `max(0, margin + |W(a-p)|^2 - |W(a-n)|^2)`.

use serde::{Deserialize, Serialize};

use crate::data::{dot, EmbeddingMatrix, Triplet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Inner-product triplet constraints.
    #[default]
    Tse,
    /// Squared-distance triplet constraints (baseline).
    Tde,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Objective::Tse => write!(f, "tse"),
            Objective::Tde => write!(f, "tde"),
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tse" => Ok(Objective::Tse),
            "tde" => Ok(Objective::Tde),
            other => Err(Error::Config(format!("unknown objective `{other}`"))),
        }
    }
}

fn check_dims(w: &EmbeddingMatrix, t: &Triplet<'_>) -> Result<()> {
    for e in [t.anchor, t.positive, t.negative] {
        if e.dim() != w.cols() {
            return Err(Error::DimensionMismatch { expected: w.cols(), found: e.dim() });
        }
    }
    Ok(())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl Objective {
    /// Value inside the hinge, before clamping at zero.
    pub fn violation(self, w: &EmbeddingMatrix, t: &Triplet<'_>, margin: f64) -> Result<f64> {
        check_dims(w, t)?;
        let (a, p, n) = (&t.anchor.values, &t.positive.values, &t.negative.values);
        Ok(match self {
            Objective::Tse => {
                let wa = w.apply(a)?;
                margin + dot(&wa, &w.apply(n)?) - dot(&wa, &w.apply(p)?)
            }
            Objective::Tde => {
                let wu = w.apply(&sub(a, p))?;
                let wv = w.apply(&sub(a, n))?;
                margin + dot(&wu, &wu) - dot(&wv, &wv)
            }
        })
    }

    pub fn loss(self, w: &EmbeddingMatrix, t: &Triplet<'_>, margin: f64) -> Result<f64> {
        Ok(self.violation(w, t, margin)?.max(0.0))
    }

    /// Gradient of the active hinge branch with respect to `W`.
    ///
    /// TSE: `W (a (n-p)' + (n-p) a')`. TDE: `2 W (u u' - v v')` with `u = a-p`, `v = a-n`.
    pub fn gradient(self, w: &EmbeddingMatrix, t: &Triplet<'_>) -> Result<EmbeddingMatrix> {
        check_dims(w, t)?;
        let (a, p, n) = (&t.anchor.values, &t.positive.values, &t.negative.values);
        let mut g = EmbeddingMatrix::zeros(w.rows(), w.cols());
        match self {
            Objective::Tse => {
                let d = sub(n, p);
                let wa = w.apply(a)?;
                let wd = w.apply(&d)?;
                g.add_outer(1.0, &wa, &d);
                g.add_outer(1.0, &wd, a);
            }
            Objective::Tde => {
                let u = sub(a, p);
                let v = sub(a, n);
                let wu = w.apply(&u)?;
                let wv = w.apply(&v)?;
                g.add_outer(2.0, &wu, &u);
                g.add_outer(-2.0, &wv, &v);
            }
        }
        Ok(g)
    }

    /// One SGD step in place. Returns whether the hinge was active; an inactive
    /// triplet leaves `w` untouched.
    pub fn step_in_place(
        self,
        w: &mut EmbeddingMatrix,
        t: &Triplet<'_>,
        learning_rate: f64,
        margin: f64,
    ) -> Result<bool> {
        if self.violation(w, t, margin)? <= 0.0 {
            return Ok(false);
        }
        let g = self.gradient(w, t)?;
        w.add_scaled(-learning_rate, &g);
        if !w.is_finite() {
            return Err(Error::Divergence { iteration: 0, trace: Vec::new() });
        }
        Ok(true)
    }

    /// Functional form of [`Objective::step_in_place`].
    pub fn step(
        self,
        w: &EmbeddingMatrix,
        t: &Triplet<'_>,
        learning_rate: f64,
        margin: f64,
    ) -> Result<EmbeddingMatrix> {
        let mut out = w.clone();
        self.step_in_place(&mut out, t, learning_rate, margin)?;
        Ok(out)
    }
}

/// `max(0, margin + a'W'Wn - a'W'Wp)`.
pub fn triplet_loss(w: &EmbeddingMatrix, t: &Triplet<'_>, margin: f64) -> Result<f64> {
    Objective::Tse.loss(w, t, margin)
}

/// `max(0, margin + |W(a-p)|^2 - |W(a-n)|^2)`.
pub fn tde_loss(w: &EmbeddingMatrix, t: &Triplet<'_>, margin: f64) -> Result<f64> {
    Objective::Tde.loss(w, t, margin)
}

/// `W - lr * W (a (n-p)' + (n-p) a')` when the hinge is active, `W` otherwise.
pub fn tse_sgd_step(w: &EmbeddingMatrix, t: &Triplet<'_>, learning_rate: f64, margin: f64) -> Result<EmbeddingMatrix> {
    Objective::Tse.step(w, t, learning_rate, margin)
}

/// Scores many negative candidates against a fixed anchor/positive pair
/// without re-projecting the pair each time.
pub(crate) struct CandidateScorer<'a> {
    objective: Objective,
    w: &'a EmbeddingMatrix,
    margin: f64,
    // TSE: W'Wa and a'W'Wp. TDE: Wa, |Wa|^2 and |W(a-p)|^2.
    q: Vec<f64>,
    base: f64,
    wa_sq: f64,
}

impl<'a> CandidateScorer<'a> {
    pub fn new(objective: Objective, w: &'a EmbeddingMatrix, a: &[f64], p: &[f64], margin: f64) -> Result<Self> {
        let wa = w.apply(a)?;
        Ok(match objective {
            Objective::Tse => {
                let wp = w.apply(p)?;
                Self { objective, w, margin, base: dot(&wa, &wp), q: w.apply_transpose(&wa)?, wa_sq: 0.0 }
            }
            Objective::Tde => {
                let wu = w.apply(&sub(a, p))?;
                Self { objective, w, margin, base: dot(&wu, &wu), wa_sq: dot(&wa, &wa), q: wa }
            }
        })
    }

    pub fn loss(&self, n: &[f64]) -> Result<f64> {
        let v = match self.objective {
            Objective::Tse => self.margin + dot(&self.q, n) - self.base,
            Objective::Tde => {
                let wn = self.w.apply(n)?;
                let dist = self.wa_sq - 2.0 * dot(&self.q, &wn) + dot(&wn, &wn);
                self.margin + self.base - dist
            }
        };
        Ok(v.max(0.0))
    }
}
