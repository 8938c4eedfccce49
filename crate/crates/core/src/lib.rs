//! Face verification toolkit for the stages downstream of CNN feature
//! extraction: triplet similarity embeddings, template pooling and fusion,
//! tracklet association, cascaded landmark regression with alignment, and
//! template-based verification/identification evaluation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assoc;
pub mod cli;
pub mod data;
pub mod embedding;
mod error;
pub mod eval;
pub mod landmarks;
pub mod pooling;
pub mod synth;

pub use error::{Error, Result, TraceRow};
