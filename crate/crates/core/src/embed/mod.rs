//! Text embeddings, cosine similarity, and a top-K nearest-neighbor index.
//!
//! The index is an exact exhaustive scan: template libraries are small
//! (a few thousand anchors) so correctness wins over sublinear search.

mod encoder;
mod index;

pub use encoder::{CachingEncoder, Encoder, HttpEncoder, MockEncoder};
pub use index::VectorIndex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("encoder unavailable: {0}")]
    EncoderUnavailable(String),
    #[error("empty text")]
    EmptyText,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("empty index")]
    EmptyIndex,
    #[error("non-finite embedding value")]
    NonFinite,
    #[error("duplicate record id: {0}")]
    DuplicateId(String),
    #[error("index format mismatch: {0}")]
    FormatVersionMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A fixed-length real vector. All entries are finite and the dimension is
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::DimensionMismatch { expected: 1, got: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity `dot(a,b) / (|a|·|b|)` in `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let norm_a = a.norm();
    let norm_b = b.norm();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}
