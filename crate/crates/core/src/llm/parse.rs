//! Lenient parsing of structured LLM output. Real model output drifts, so
//! both parsers scan for the first valid structure; callers decide the
//! fallback on errors.

use super::LlmError;
use serde_json::{Map, Value};

/// Extract the first bracketed list in `text`, tolerating surrounding
/// prose. Items are split on top-level commas and trimmed of whitespace and
/// surrounding quotes; empty items are dropped.
pub fn parse_list(text: &str) -> Result<Vec<String>, LlmError> {
    let chars: Vec<char> = text.chars().collect();
    let open = chars.iter().position(|&c| c == '[').ok_or(LlmError::NoListFound)?;
    let mut depth = 0;
    let mut close = None;
    for (i, &c) in chars.iter().enumerate().skip(open) {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    close = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    let close = close.ok_or(LlmError::NoListFound)?;
    let inner: String = chars[open + 1..close].iter().collect();
    Ok(split_items(&inner))
}

fn split_items(inner: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut depth = 0;
    let mut quote: Option<char> = None;
    let mut current = String::new();
    for c in inner.chars() {
        match quote {
            Some(q) => {
                if c == q {
                    quote = None;
                }
                current.push(c);
            }
            None => match c {
                '\'' | '"' => {
                    quote = Some(c);
                    current.push(c);
                }
                '[' | '{' | '(' => {
                    depth += 1;
                    current.push(c);
                }
                ']' | '}' | ')' => {
                    depth -= 1;
                    current.push(c);
                }
                ',' if depth == 0 => {
                    push_item(&mut items, &current);
                    current.clear();
                }
                _ => current.push(c),
            },
        }
    }
    push_item(&mut items, &current);
    items
}

fn push_item(items: &mut Vec<String>, raw: &str) {
    let cleaned = raw.trim().trim_matches(|c| c == '\'' || c == '"').trim();
    if !cleaned.is_empty() {
        items.push(cleaned.to_string());
    }
}

/// Render a list of plain identifiers in the same bracketed form the
/// prompts request, so `parse_list(format_list(xs)) == xs`.
pub fn format_list<S: AsRef<str>>(items: &[S]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("'{}'", s.as_ref())).collect();
    format!("[{}]", quoted.join(", "))
}

/// Find the first JSON object in `text` and require the given keys.
pub fn parse_json(text: &str, required_keys: &[&str]) -> Result<Map<String, Value>, LlmError> {
    let bytes: Vec<char> = text.chars().collect();
    let mut start = 0;
    while let Some(open_rel) = bytes[start..].iter().position(|&c| c == '{') {
        let open = start + open_rel;
        if let Some(object) = balanced_object(&bytes, open) {
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&object) {
                for key in required_keys {
                    if !map.contains_key(*key) {
                        return Err(LlmError::MissingKey((*key).to_string()));
                    }
                }
                return Ok(map);
            }
        }
        start = open + 1;
    }
    Err(LlmError::NoJsonFound)
}

/// Return the substring from `open` to its matching close brace, honoring
/// JSON string quoting and escapes.
fn balanced_object(chars: &[char], open: usize) -> Option<String> {
    let mut depth = 0;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate().skip(open) {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(chars[open..=i].iter().collect());
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_quoted_relation_list() {
        let items = parse_list("['film.director.film', 'film.film.music']").unwrap();
        assert_eq!(items, vec!["film.director.film", "film.film.music"]);
    }

    #[test]
    fn empty_list_and_missing_list() {
        assert!(parse_list("Answer: []").unwrap().is_empty());
        assert!(matches!(parse_list("no brackets here"), Err(LlmError::NoListFound)));
        assert!(matches!(parse_list("[unclosed"), Err(LlmError::NoListFound)));
    }

    #[test]
    fn tolerates_surrounding_prose() {
        let items = parse_list("The answer is: ['a', \"b\"] as requested.").unwrap();
        assert_eq!(items, vec!["a", "b"]);
    }

    #[test]
    fn format_then_parse_is_identity() {
        let cases: Vec<Vec<&str>> = vec![
            vec![],
            vec!["one"],
            vec!["film.director.film", "film.film.music", "x_y"],
        ];
        for case in cases {
            assert_eq!(parse_list(&format_list(&case)).unwrap(), case);
        }
    }

    #[test]
    fn parses_json_with_required_keys() {
        let map = parse_json(r#"{"Add": true, "Reason": "dead end"}"#, &["Add", "Reason"]).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map["Add"], Value::Bool(true));
    }

    #[test]
    fn missing_key_is_named() {
        match parse_json(r#"{"A": "x"}"#, &["A", "R"]) {
            Err(LlmError::MissingKey(k)) => assert_eq!(k, "R"),
            other => panic!("expected MissingKey, got {other:?}"),
        }
    }

    #[test]
    fn json_tolerates_prose_and_escapes() {
        let map = parse_json(r#"prefix {"A":"x","R":"quo\"te"} suffix"#, &["A", "R"]).unwrap();
        assert_eq!(map["R"], Value::String("quo\"te".into()));
        assert!(matches!(parse_json("nothing here", &[]), Err(LlmError::NoJsonFound)));
    }

    #[test]
    fn skips_invalid_object_before_valid_one() {
        let map = parse_json(r#"{broken} then {"A": 1}"#, &["A"]).unwrap();
        assert_eq!(map["A"], Value::from(1));
    }
}
