//! Rule-based de-instantiation of SPARQL queries into relation blueprints.

use super::{BlueprintError, RelationBlueprint};
use regex::Regex;

/// Configurable de-instantiation filter chain. The defaults match Freebase
/// SPARQL: keep `ns:`-prefixed tokens that are not entity ids, in textual
/// order, dropping variables, literals, keywords, and FILTER/ORDER clauses.
#[derive(Debug, Clone)]
pub struct ExtractorConfig {
    pub ns_prefix: String,
    pub entity_id: Regex,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            ns_prefix: "ns:".to_string(),
            entity_id: Regex::new(r"^(m|g)\.[0-9a-z_]+$").expect("static regex"),
        }
    }
}

/// Extract the ordered relation-slot sequence from a SPARQL query.
/// Consecutive duplicate predicates are kept: order is the structure.
pub fn extract_blueprint(sparql: &str) -> Result<RelationBlueprint, BlueprintError> {
    extract_with(sparql, &ExtractorConfig::default())
}

pub fn extract_with(
    sparql: &str,
    config: &ExtractorConfig,
) -> Result<RelationBlueprint, BlueprintError> {
    if sparql.trim().is_empty() {
        return Err(BlueprintError::EmptyBlueprint);
    }
    check_braces(sparql)?;
    let cleaned = strip_order_clauses(&strip_filter_groups(sparql));

    let mut slots = Vec::new();
    for raw in cleaned.split(|c: char| c.is_whitespace() || matches!(c, '{' | '}' | '(' | ')' | ',' | ';')) {
        let token = raw.trim_end_matches('.');
        let Some(rest) = token.strip_prefix(config.ns_prefix.as_str()) else {
            continue;
        };
        if rest.is_empty() || config.entity_id.is_match(rest) {
            continue;
        }
        slots.push(rest);
    }
    RelationBlueprint::from_predicates(slots)
}

fn check_braces(sparql: &str) -> Result<(), BlueprintError> {
    let mut depth: i64 = 0;
    for c in sparql.chars() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 {
                    return Err(BlueprintError::ParseError("unbalanced braces".into()));
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(BlueprintError::ParseError("unbalanced braces".into()));
    }
    Ok(())
}

/// Remove `FILTER (...)` groups, including nested parentheses. A FILTER not
/// followed by a parenthesis loses just the keyword.
fn strip_filter_groups(sparql: &str) -> String {
    let mut out = String::with_capacity(sparql.len());
    let chars: Vec<char> = sparql.chars().collect();
    let lower: Vec<char> = sparql.to_lowercase().chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if is_keyword_at(&lower, i, "filter") {
            i += "filter".len();
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '(' {
                let mut depth = 0;
                while i < chars.len() {
                    match chars[i] {
                        '(' => depth += 1,
                        ')' => {
                            depth -= 1;
                            if depth == 0 {
                                i += 1;
                                break;
                            }
                        }
                        _ => {}
                    }
                    i += 1;
                }
            }
            out.push(' ');
            continue;
        }
        out.push(chars[i]);
        i += 1;
    }
    out
}

/// Remove `ORDER BY ...` to end of line.
fn strip_order_clauses(sparql: &str) -> String {
    let mut out = String::with_capacity(sparql.len());
    for line in sparql.lines() {
        if let Some(pos) = line.to_lowercase().find("order by") {
            out.push_str(&line[..pos]);
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out
}

fn is_keyword_at(lower: &[char], i: usize, keyword: &str) -> bool {
    let kw: Vec<char> = keyword.chars().collect();
    if i + kw.len() > lower.len() || lower[i..i + kw.len()] != kw[..] {
        return false;
    }
    let before_ok = i == 0 || !lower[i - 1].is_alphanumeric();
    let after = i + kw.len();
    let after_ok = after >= lower.len() || !lower[after].is_alphanumeric();
    before_ok && after_ok
}
