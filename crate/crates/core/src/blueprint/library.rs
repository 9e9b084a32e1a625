//! Library construction, statistics, persistence, and anchor indexing.

use super::{
    extract::{extract_with, ExtractorConfig},
    BlueprintError, BlueprintLibrary, BlueprintRecord, TrainingPair,
};
use crate::embed::{Encoder, VectorIndex};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const FORMAT_VERSION: u32 = 1;

/// Group pairs by blueprint key; each record's anchor is the longest
/// question of its support set (character count, ties broken by taking the
/// lexicographically smallest), so any permutation of the input builds the
/// same library. Pairs whose extraction fails are skipped and counted.
pub fn build_library(pairs: &[TrainingPair]) -> Result<BlueprintLibrary, BlueprintError> {
    build_library_with(pairs, &ExtractorConfig::default())
}

pub fn build_library_with(
    pairs: &[TrainingPair],
    config: &ExtractorConfig,
) -> Result<BlueprintLibrary, BlueprintError> {
    let mut groups: BTreeMap<String, (BlueprintRecord, usize)> = BTreeMap::new();
    let mut skipped = 0usize;
    for pair in pairs {
        let blueprint = match extract_with(&pair.sparql, config) {
            Ok(bp) => bp,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let key = blueprint.key();
        match groups.get_mut(&key) {
            Some((record, _)) => {
                record.support_count += 1;
                if prefer_anchor(&pair.question, &record.anchor) {
                    record.anchor = pair.question.clone();
                }
            }
            None => {
                groups.insert(
                    key,
                    (
                        BlueprintRecord {
                            anchor: pair.question.clone(),
                            blueprint,
                            support_count: 1,
                        },
                        0,
                    ),
                );
            }
        }
    }
    if groups.is_empty() && !pairs.is_empty() {
        return Err(BlueprintError::AllPairsFailed);
    }
    let records = groups.into_values().map(|(r, _)| r).collect();
    Ok(BlueprintLibrary::from_records(records, skipped))
}

/// True when `candidate` should replace `current` as anchor: longer in
/// characters, or equal length and lexicographically smaller.
fn prefer_anchor(candidate: &str, current: &str) -> bool {
    let c = candidate.chars().count();
    let k = current.chars().count();
    c > k || (c == k && candidate < current)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LibraryStats {
    pub template_count: usize,
    pub compression_ratio: f64,
}

/// Template count and compression ratio against the source corpus size.
pub fn library_stats(library: &BlueprintLibrary, corpus_size: usize) -> LibraryStats {
    let template_count = library.len();
    let compression_ratio = if corpus_size == 0 {
        0.0
    } else {
        template_count as f64 / corpus_size as f64
    };
    LibraryStats { template_count, compression_ratio }
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    format_version: u32,
    skipped_pairs: usize,
    records: Vec<BlueprintRecord>,
}

pub fn save_library<P: AsRef<Path>>(library: &BlueprintLibrary, path: P) -> Result<(), BlueprintError> {
    let file = LibraryFile {
        format_version: FORMAT_VERSION,
        skipped_pairs: library.skipped_pairs(),
        records: library.records().to_vec(),
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, &file)
        .map_err(|e| BlueprintError::FormatVersionMismatch(e.to_string()))?;
    out.flush()?;
    Ok(())
}

pub fn load_library<P: AsRef<Path>>(path: P) -> Result<BlueprintLibrary, BlueprintError> {
    let data = std::fs::read_to_string(path)?;
    let file: LibraryFile = serde_json::from_str(&data)
        .map_err(|e| BlueprintError::FormatVersionMismatch(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(BlueprintError::FormatVersionMismatch(format!(
            "expected version {FORMAT_VERSION}, found {}",
            file.format_version
        )));
    }
    Ok(BlueprintLibrary::from_records(file.records, file.skipped_pairs))
}

/// Encode every record's anchor and build the retrieval index, keyed by
/// blueprint string key.
pub fn build_index(
    library: &BlueprintLibrary,
    encoder: &dyn Encoder,
) -> Result<VectorIndex, BlueprintError> {
    let entries = library
        .records()
        .iter()
        .map(|r| Ok((r.blueprint.key(), encoder.encode(&r.anchor)?)))
        .collect::<Result<Vec<_>, BlueprintError>>()?;
    Ok(VectorIndex::build(entries)?)
}

/// Read line-delimited training pairs: one JSON object per line with
/// `question` and `sparql` fields.
pub fn load_training_pairs<P: AsRef<Path>>(path: P) -> Result<Vec<TrainingPair>, BlueprintError> {
    let file = std::fs::File::open(path)?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: TrainingPair = serde_json::from_str(&line)
            .map_err(|e| BlueprintError::Line { line: i + 1, msg: e.to_string() })?;
        if pair.question.is_empty() || pair.sparql.is_empty() {
            return Err(BlueprintError::Line { line: i + 1, msg: "empty question or sparql".into() });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}
