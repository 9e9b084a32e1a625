//! In-memory triple store with head- and tail-indexed maps for
//! direction-symmetric lookup.

use super::{Direction, Entity, GraphBackend, KgError, Relation, Triple};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

const NAME_PREDICATE: &str = "type.object.name";
const ALIAS_PREDICATE: &str = "common.topic.alias";
const SAME_AS_PREDICATE: &str = "http://www.w3.org/2002/07/owl#sameAs";

type EdgeIndex = BTreeMap<String, BTreeMap<Relation, BTreeSet<Entity>>>;

/// Immutable in-memory triple store. Duplicate triples collapse on insert.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    by_head: EdgeIndex,
    by_tail: EdgeIndex,
    len: usize,
}

impl MemoryStore {
    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Self {
        let mut store = Self::default();
        for t in triples {
            store.insert(t);
        }
        store
    }

    /// Load a store from a tab-separated triple file: one triple per line,
    /// fields `head-id  predicate  tail-id`; lines starting with `#` and
    /// blank lines are ignored.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, KgError> {
        let file = std::fs::File::open(path)?;
        Self::read(BufReader::new(file))
    }

    pub fn read<R: std::io::Read>(reader: R) -> Result<Self, KgError> {
        let mut store = Self::default();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::Parse {
                    line: lineno,
                    msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
                });
            }
            let head = fields[0].trim();
            let tail = fields[2].trim();
            if head.is_empty() || tail.is_empty() {
                return Err(KgError::Parse { line: lineno, msg: "empty entity id".into() });
            }
            let relation = Relation::new(fields[1])
                .map_err(|_| KgError::Parse { line: lineno, msg: "empty predicate".into() })?;
            store.insert(Triple::new(Entity::new(head), relation, Entity::new(tail)));
        }
        Ok(store)
    }

    fn insert(&mut self, t: Triple) {
        let fresh = self
            .by_head
            .entry(t.head.id.clone())
            .or_default()
            .entry(t.relation.clone())
            .or_default()
            .insert(t.tail.clone());
        if fresh {
            self.len += 1;
        }
        self.by_tail
            .entry(t.tail.id)
            .or_default()
            .entry(t.relation)
            .or_default()
            .insert(t.head);
    }

    /// Number of distinct triples.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn index(&self, direction: Direction) -> &EdgeIndex {
        match direction {
            Direction::Outgoing => &self.by_head,
            Direction::Incoming => &self.by_tail,
        }
    }
}

impl GraphBackend for MemoryStore {
    fn relation_search(
        &self,
        entity: &Entity,
        direction: Direction,
    ) -> Result<BTreeSet<Relation>, KgError> {
        Ok(self
            .index(direction)
            .get(&entity.id)
            .map(|edges| edges.keys().cloned().collect())
            .unwrap_or_default())
    }

    fn entity_search(
        &self,
        entity: &Entity,
        relation: &Relation,
        direction: Direction,
    ) -> Result<BTreeSet<Entity>, KgError> {
        Ok(self
            .index(direction)
            .get(&entity.id)
            .and_then(|edges| edges.get(relation))
            .cloned()
            .unwrap_or_default())
    }

    fn resolve_name(&self, entity: &Entity) -> Result<Option<String>, KgError> {
        let tiers = [NAME_PREDICATE, ALIAS_PREDICATE, SAME_AS_PREDICATE];
        for predicate in tiers {
            let relation = Relation::new(predicate).expect("static predicate");
            let values = self.entity_search(entity, &relation, Direction::Outgoing)?;
            // BTreeSet iterates in id order, so first() is the lexicographic
            // tie-break within the tier.
            if let Some(first) = values.into_iter().next() {
                return Ok(Some(first.id));
            }
        }
        Ok(None)
    }
}
