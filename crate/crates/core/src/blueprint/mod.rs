//! Offline relational-blueprint library.
//!
//! Training (question, SPARQL) pairs are de-instantiated into relation-only
//! templates, deduplicated by template key, anchored by their longest
//! support question, and indexed by anchor embedding for online retrieval.

mod extract;
mod library;

pub use extract::{extract_blueprint, ExtractorConfig};
pub use library::{
    build_index, build_library, library_stats, load_library, load_training_pairs, save_library,
    LibraryStats,
};

use crate::kg::Relation;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Separator used in blueprint string keys.
pub const KEY_SEPARATOR: &str = "→";

#[derive(Debug, Error)]
pub enum BlueprintError {
    #[error("no relation predicate found")]
    EmptyBlueprint,
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("every training pair failed extraction")]
    AllPairsFailed,
    #[error("library format mismatch: {0}")]
    FormatVersionMismatch(String),
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
}

/// An ordered sequence of relation slots abstracting a reasoning path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationBlueprint {
    slots: Vec<Relation>,
}

impl RelationBlueprint {
    pub fn new(slots: Vec<Relation>) -> Result<Self, BlueprintError> {
        if slots.is_empty() {
            return Err(BlueprintError::EmptyBlueprint);
        }
        Ok(Self { slots })
    }

    pub fn from_predicates<I, S>(predicates: I) -> Result<Self, BlueprintError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let slots = predicates
            .into_iter()
            .map(|p| Relation::new(p).map_err(|_| BlueprintError::EmptyBlueprint))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(slots)
    }

    pub fn slots(&self) -> &[Relation] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 1-based slot access.
    pub fn slot(&self, index: usize) -> &Relation {
        &self.slots[index - 1]
    }

    /// Unique string key: slots joined with an arrow.
    pub fn key(&self) -> String {
        self.slots
            .iter()
            .map(Relation::predicate)
            .collect::<Vec<_>>()
            .join(KEY_SEPARATOR)
    }
}

impl std::fmt::Display for RelationBlueprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.key())
    }
}

/// One deduplicated template with its semantic anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlueprintRecord {
    /// The longest question among the template's support set.
    pub anchor: String,
    pub blueprint: RelationBlueprint,
    /// Number of training questions mapped to this template.
    pub support_count: usize,
}

/// A training (question, SPARQL) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub question: String,
    pub sparql: String,
}

/// Deduplicated blueprint records, addressable by template key. Records are
/// kept sorted by key so construction order never leaks into output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlueprintLibrary {
    records: Vec<BlueprintRecord>,
    by_key: HashMap<String, usize>,
    skipped: usize,
}

impl BlueprintLibrary {
    pub(crate) fn from_records(mut records: Vec<BlueprintRecord>, skipped: usize) -> Self {
        records.sort_by(|a, b| a.blueprint.key().cmp(&b.blueprint.key()));
        let by_key = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.blueprint.key(), i))
            .collect();
        Self { records, by_key, skipped }
    }

    pub fn records(&self) -> &[BlueprintRecord] {
        &self.records
    }

    pub fn get(&self, key: &str) -> Option<&BlueprintRecord> {
        self.by_key.get(key).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Pairs whose extraction failed during the build.
    pub fn skipped_pairs(&self) -> usize {
        self.skipped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_joins_slots_with_arrow() {
        let bp = RelationBlueprint::from_predicates(["a.b.c", "d.e.f"]).unwrap();
        assert_eq!(bp.key(), "a.b.c→d.e.f");
        assert_eq!(bp.len(), 2);
        assert_eq!(bp.slot(1).predicate(), "a.b.c");
    }

    #[test]
    fn blueprint_requires_a_slot() {
        assert!(matches!(
            RelationBlueprint::new(vec![]),
            Err(BlueprintError::EmptyBlueprint)
        ));
    }
}
