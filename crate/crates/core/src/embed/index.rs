//! Exact nearest-neighbor index over record embeddings.

use super::{cosine, EmbedError, Embedding};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"KGQAVIX1";

/// Exhaustive-scan vector index. Record ids are unique and all embeddings
/// share one dimension; the structure is immutable after build.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    ids: Vec<String>,
    vectors: Vec<Embedding>,
    dim: usize,
}

impl VectorIndex {
    pub fn build(entries: Vec<(String, Embedding)>) -> Result<Self, EmbedError> {
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        let mut dim = 0;
        for (id, vector) in entries {
            if dim == 0 {
                dim = vector.dim();
            } else if vector.dim() != dim {
                return Err(EmbedError::DimensionMismatch { expected: dim, got: vector.dim() });
            }
            if ids.contains(&id) {
                return Err(EmbedError::DuplicateId(id));
            }
            ids.push(id);
            vectors.push(vector);
        }
        Ok(Self { ids, vectors, dim })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The `k` entries most similar to `query`, sorted by descending cosine
    /// with ties broken by ascending record id. Returns fewer than `k` when
    /// the index is smaller.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Result<Vec<(String, f64)>, EmbedError> {
        if self.is_empty() {
            return Err(EmbedError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(EmbedError::DimensionMismatch { expected: self.dim, got: query.dim() });
        }
        let mut scored: Vec<(String, f64)> = self
            .ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| Ok((id.clone(), cosine(query, v)?)))
            .collect::<Result<_, EmbedError>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k.max(1).min(scored.len()));
        Ok(scored)
    }

    /// Write the index: magic header, dimension, then per record the id and
    /// row-major little-endian floats.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), EmbedError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.ids.len() as u32).to_le_bytes())?;
        for (id, vector) in self.ids.iter().zip(&self.vectors) {
            let bytes = id.as_bytes();
            out.write_all(&(bytes.len() as u32).to_le_bytes())?;
            out.write_all(bytes)?;
            for v in vector.values() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, EmbedError> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        read_exact(&mut input, &mut magic)?;
        if &magic != MAGIC {
            return Err(EmbedError::FormatVersionMismatch(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let dim = read_u32(&mut input)? as usize;
        let count = read_u32(&mut input)? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let id_len = read_u32(&mut input)? as usize;
            let mut id_bytes = vec![0u8; id_len];
            read_exact(&mut input, &mut id_bytes)?;
            let id = String::from_utf8(id_bytes)
                .map_err(|e| EmbedError::FormatVersionMismatch(e.to_string()))?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut buf = [0u8; 8];
                read_exact(&mut input, &mut buf)?;
                values.push(f64::from_le_bytes(buf));
            }
            entries.push((id, Embedding::new(values)?));
        }
        Self::build(entries)
    }
}

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<(), EmbedError> {
    reader
        .read_exact(buf)
        .map_err(|e| EmbedError::FormatVersionMismatch(format!("truncated index file: {e}")))
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32, EmbedError> {
    let mut buf = [0u8; 4];
    read_exact(reader, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
