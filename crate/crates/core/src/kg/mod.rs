//! Knowledge-graph access layer.
//!
//! Two interchangeable backends sit behind the [`GraphBackend`] trait: an
//! in-memory triple store ([`MemoryStore`]) for tests and offline corpora,
//! and a SPARQL-over-HTTP client ([`SparqlEndpoint`]) issuing fixed query
//! templates against a Freebase-style endpoint.

mod memory;
mod sparql;

pub use memory::MemoryStore;
pub use sparql::SparqlEndpoint;

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Namespace prefix stripped from Freebase predicates and entity URIs.
pub const FREEBASE_NS: &str = "http://rdf.freebase.com/ns/";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty identifier")]
    EmptyId,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A graph node, identified by an opaque id (e.g. a Freebase MID like
/// `m.0d05w3`). Equality, ordering and hashing consider the id only; the
/// label is display metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: Option<String>,
}

impl Entity {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), label: None }
    }

    pub fn with_label(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self { id: id.into(), label: Some(label.into()) }
    }

    /// Label when known, otherwise the raw id.
    pub fn display(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.id)
    }
}

impl PartialEq for Entity {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Entity {}

impl PartialOrd for Entity {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entity {
    fn cmp(&self, other: &Self) -> Ordering {
        self.id.cmp(&other.id)
    }
}

impl std::hash::Hash for Entity {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display())
    }
}

/// A relation predicate as a bare dotted path (`film.director.film`).
/// Construction trims whitespace and rejects empty strings.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Relation(String);

impl Relation {
    pub fn new(predicate: impl AsRef<str>) -> Result<Self, KgError> {
        let p = predicate.as_ref().trim();
        if p.is_empty() {
            return Err(KgError::EmptyId);
        }
        Ok(Self(p.to_string()))
    }

    pub fn predicate(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A directed factual edge `(head, relation, tail)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: Entity,
    pub relation: Relation,
    pub tail: Entity,
}

impl Triple {
    pub fn new(head: Entity, relation: Relation, tail: Entity) -> Self {
        Self { head, relation, tail }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// Edge orientation relative to the queried entity: `Outgoing` matches
/// `entity ?r ?x`, `Incoming` matches `?x ?r entity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Outgoing,
    Incoming,
}

/// Uniform read access to a knowledge graph. Implementations are immutable
/// after construction and safe to share across concurrent query runs.
pub trait GraphBackend: Send + Sync {
    /// Distinct relations adjacent to `entity` in the given direction.
    fn relation_search(&self, entity: &Entity, direction: Direction)
        -> Result<BTreeSet<Relation>, KgError>;

    /// Entities reachable from `entity` via `relation` in the given direction.
    fn entity_search(
        &self,
        entity: &Entity,
        relation: &Relation,
        direction: Direction,
    ) -> Result<BTreeSet<Entity>, KgError>;

    /// Highest-priority English name for an entity, if any. Tiers:
    /// `type.object.name` (1), `common.topic.alias` (2), `owl#sameAs` (3);
    /// ties within a tier break lexicographically.
    fn resolve_name(&self, entity: &Entity) -> Result<Option<String>, KgError>;
}
