//! SPARQL-over-HTTP backend.
//!
//! Issues three fixed query templates (relation search, entity search, name
//! resolution) against a Freebase-style endpoint speaking the standard
//! SPARQL JSON results format.

use super::{Direction, Entity, GraphBackend, KgError, Relation, FREEBASE_NS};
use serde_json::Value;
use std::collections::BTreeSet;
use std::time::Duration;

/// SPARQL endpoint client. Requests are `POST` form-encoded with a JSON
/// results `Accept` header; concurrent use is safe.
pub struct SparqlEndpoint {
    agent: ureq::Agent,
    url: String,
}

impl SparqlEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self::with_timeout(url, Duration::from_secs(30))
    }

    pub fn with_timeout(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent, url: url.into() }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn execute(&self, query: &str) -> Result<Value, KgError> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("Accept", "application/sparql-results+json")
            .send_form([("query", query), ("format", "json")])
            .map_err(|e| KgError::BackendUnreachable(e.to_string()))?;
        response
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| KgError::MalformedResponse(e.to_string()))
    }

    /// Extract one variable's values from a SPARQL JSON result set,
    /// stripping the Freebase namespace from URIs.
    fn bindings(value: &Value, var: &str) -> Result<Vec<String>, KgError> {
        let rows = value
            .get("results")
            .and_then(|r| r.get("bindings"))
            .and_then(Value::as_array)
            .ok_or_else(|| KgError::MalformedResponse("missing results.bindings".into()))?;
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            let text = row
                .get(var)
                .and_then(|b| b.get("value"))
                .and_then(Value::as_str)
                .ok_or_else(|| KgError::MalformedResponse(format!("binding missing ?{var}")))?;
            out.push(strip_ns(text).to_string());
        }
        Ok(out)
    }
}

fn strip_ns(value: &str) -> &str {
    value.strip_prefix(FREEBASE_NS).unwrap_or(value)
}

fn relation_query(mid: &str, direction: Direction) -> String {
    let pattern = match direction {
        Direction::Outgoing => format!("ns:{mid} ?relation ?x ."),
        Direction::Incoming => format!("?x ?relation ns:{mid} ."),
    };
    format!(
        "PREFIX ns: <{FREEBASE_NS}>\nSELECT DISTINCT ?relation\nWHERE {{\n  {pattern}\n}}"
    )
}

fn entity_query(mid: &str, relation: &str, direction: Direction) -> String {
    let pattern = match direction {
        Direction::Outgoing => format!("ns:{mid} ns:{relation} ?tailEntity ."),
        Direction::Incoming => format!("?tailEntity ns:{relation} ns:{mid} ."),
    };
    format!("PREFIX ns: <{FREEBASE_NS}>\nSELECT ?tailEntity\nWHERE {{\n  {pattern}\n}}")
}

fn name_query(mid: &str) -> String {
    format!(
        r#"PREFIX ns: <{FREEBASE_NS}>
SELECT DISTINCT ?tailEntity
WHERE {{
  BIND(ns:{mid} AS ?entity)
  {{
    ?entity ns:type.object.name ?tailEntity .
    FILTER(LANG(?tailEntity) = "" || LANGMATCHES(LANG(?tailEntity), "en"))
    BIND(1 AS ?priority)
  }}
  UNION
  {{
    ?entity ns:common.topic.alias ?tailEntity .
    FILTER(LANG(?tailEntity) = "" || LANGMATCHES(LANG(?tailEntity), "en"))
    BIND(2 AS ?priority)
  }}
  UNION
  {{
    ?entity <http://www.w3.org/2002/07/owl#sameAs> ?tailEntity .
    BIND(3 AS ?priority)
  }}
}}
ORDER BY ASC(?priority) LIMIT 1"#
    )
}

impl GraphBackend for SparqlEndpoint {
    fn relation_search(
        &self,
        entity: &Entity,
        direction: Direction,
    ) -> Result<BTreeSet<Relation>, KgError> {
        let value = self.execute(&relation_query(&entity.id, direction))?;
        let mut relations = BTreeSet::new();
        for text in Self::bindings(&value, "relation")? {
            if let Ok(rel) = Relation::new(&text) {
                relations.insert(rel);
            }
        }
        Ok(relations)
    }

    fn entity_search(
        &self,
        entity: &Entity,
        relation: &Relation,
        direction: Direction,
    ) -> Result<BTreeSet<Entity>, KgError> {
        let value = self.execute(&entity_query(&entity.id, relation.predicate(), direction))?;
        Ok(Self::bindings(&value, "tailEntity")?
            .into_iter()
            .filter(|id| !id.is_empty())
            .map(Entity::new)
            .collect())
    }

    fn resolve_name(&self, entity: &Entity) -> Result<Option<String>, KgError> {
        let value = self.execute(&name_query(&entity.id))?;
        Ok(Self::bindings(&value, "tailEntity")?.into_iter().next())
    }
}
