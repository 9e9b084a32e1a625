//! Text encoders: a deterministic mock for tests and an HTTP client for a
//! real sentence-encoder service.

use super::{EmbedError, Embedding};
use serde_json::json;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// Maps text to a fixed-dimension vector. Encoding identical text must
/// yield identical vectors within one backend instance.
pub trait Encoder: Send + Sync {
    fn encode(&self, text: &str) -> Result<Embedding, EmbedError>;

    /// Batch encode; the default loops over [`Encoder::encode`].
    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        texts.iter().map(|t| self.encode(t)).collect()
    }
}

/// Deterministic mock encoder: each character trigram of the trimmed text
/// (plus the whole text as one extra gram) is hashed with FNV-1a seeded by
/// `seed`; the hash picks a coordinate `h % dim` and a value in `[-1, 1]`,
/// contributions accumulate, and the result is L2-normalized.
#[derive(Debug, Clone)]
pub struct MockEncoder {
    dim: usize,
    seed: u64,
}

impl MockEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "mock encoder dimension must be positive");
        Self { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fold one gram into the accumulator. Public so tests can recompute
    /// expected vectors independently of `encode`.
    pub fn fold_gram(acc: &mut [f64], seed: u64, gram: &str) {
        let h = fnv1a64(seed, gram.as_bytes());
        let idx = (h % acc.len() as u64) as usize;
        // Map the high 53 bits to [-1, 1].
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        acc[idx] += unit * 2.0 - 1.0;
    }
}

/// FNV-1a over the seed bytes followed by the payload.
pub fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

impl Encoder for MockEncoder {
    fn encode(&self, text: &str) -> Result<Embedding, EmbedError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut acc = vec![0.0; self.dim];
        let chars: Vec<char> = trimmed.chars().collect();
        if chars.len() < 3 {
            Self::fold_gram(&mut acc, self.seed, trimmed);
        } else {
            for window in chars.windows(3) {
                let gram: String = window.iter().collect();
                Self::fold_gram(&mut acc, self.seed, &gram);
            }
        }
        Self::fold_gram(&mut acc, self.seed, trimmed);
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            acc[0] = 1.0;
        } else {
            for v in &mut acc {
                *v /= norm;
            }
        }
        Embedding::new(acc)
    }
}

/// HTTP encoder client. Sends `{"model": ..., "texts": [...]}` and expects
/// a JSON array of float vectors in the same order.
pub struct HttpEncoder {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
}

impl HttpEncoder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Self { agent, endpoint: endpoint.into(), model: model.into() }
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        let payload = json!({ "model": self.model, "texts": texts });
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(&payload)
            .map_err(|e| EmbedError::EncoderUnavailable(e.to_string()))?;
        let rows: Vec<Vec<f64>> = response
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::EncoderUnavailable(format!("bad response: {e}")))?;
        if rows.len() != texts.len() {
            return Err(EmbedError::EncoderUnavailable(format!(
                "expected {} vectors, got {}",
                texts.len(),
                rows.len()
            )));
        }
        rows.into_iter().map(Embedding::new).collect()
    }
}

impl Encoder for HttpEncoder {
    fn encode(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        Ok(self.request(&[text])?.remove(0))
    }

    fn encode_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(empty) = texts.iter().find(|t| t.trim().is_empty()) {
            let _ = empty;
            return Err(EmbedError::EmptyText);
        }
        self.request(texts)
    }
}

/// Memoizing wrapper around any encoder. Safe because encoders are
/// deterministic per instance.
pub struct CachingEncoder {
    inner: Arc<dyn Encoder>,
    cache: Mutex<HashMap<String, Embedding>>,
}

impl CachingEncoder {
    pub fn new(inner: Arc<dyn Encoder>) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }
}

impl Encoder for CachingEncoder {
    fn encode(&self, text: &str) -> Result<Embedding, EmbedError> {
        if let Some(hit) = self.cache.lock().expect("encoder cache poisoned").get(text) {
            return Ok(hit.clone());
        }
        let fresh = self.inner.encode(text)?;
        self.cache
            .lock()
            .expect("encoder cache poisoned")
            .insert(text.to_string(), fresh.clone());
        Ok(fresh)
    }
}
