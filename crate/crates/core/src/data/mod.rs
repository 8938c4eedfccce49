//! Shared domain types, the seeded random source, and file formats.

pub mod io;
mod matrix;
mod rng;
mod similarity;
mod types;

pub use matrix::{dot, norm, EmbeddingMatrix};
pub use rng::{seeded_rng, SeededRng};
pub use similarity::{Score, SimilarityMatrix};
pub use types::{Embedding, EmbeddingSet, SourceKind, Template, Triplet, TripletIndices};
