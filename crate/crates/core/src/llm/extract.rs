use std::collections::BTreeMap;

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no JSON object found in model output")]
    NoObjectFound,
    #[error("required key `{0}` missing")]
    MissingKey(String),
}

/// Canonical `True`/`False` for boolean-like text; other text is returned unchanged.
pub fn normalize_bool(s: &str) -> String {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" => "True".to_string(),
        "false" => "False".to_string(),
        _ => s.to_string(),
    }
}

/// Finds the first well-formed JSON object in `text` (fenced or not) and
/// returns its top-level entries as text.
///
/// A strict parse is tried first, then a lenient one that tolerates `//`
/// comments, trailing commas and bare `True`/`False`/`None`.
pub fn extract_structured(text: &str, required_keys: &[&str]) -> Result<BTreeMap<String, String>, ExtractError> {
    let object = first_object(text).ok_or(ExtractError::NoObjectFound)?;
    let map: BTreeMap<String, String> = object.into_iter().map(|(k, v)| (k, value_text(v))).collect();
    if let Some(missing) = required_keys.iter().find(|k| !map.contains_key(**k)) {
        return Err(ExtractError::MissingKey(missing.to_string()));
    }
    Ok(map)
}

fn value_text(v: Value) -> String {
    match v {
        Value::String(s) => normalize_bool(&s),
        Value::Bool(true) => "True".to_string(),
        Value::Bool(false) => "False".to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn first_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    for (start, &b) in bytes.iter().enumerate() {
        if b != b'{' {
            continue;
        }
        let Some(end) = matching_brace(bytes, start) else {
            continue;
        };
        let candidate = &text[start..=end];
        if let Ok(Value::Object(m)) = serde_json::from_str::<Value>(candidate) {
            return Some(m);
        }
        if let Ok(Value::Object(m)) = serde_json::from_str::<Value>(&relax(candidate)) {
            return Some(m);
        }
    }
    None
}

/// Index of the brace closing the one at `start`, skipping string contents.
fn matching_brace(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Rewrites common near-JSON model output into strict JSON.
fn relax(candidate: &str) -> String {
    let chars: Vec<char> = candidate.chars().collect();
    let mut out = String::with_capacity(candidate.len());
    let mut i = 0;
    let mut in_string = false;
    let mut escaped = false;
    while i < chars.len() {
        let c = chars[i];
        if in_string {
            out.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            i += 1;
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
                i += 1;
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace() && **c != ',');
                let is_trailing = matches!(next, Some('}') | Some(']'));
                let has_comment_then_close = {
                    // a comment can sit between a trailing comma and the close brace
                    let rest: String = chars[i + 1..].iter().collect();
                    let stripped = strip_line_comments(&rest);
                    matches!(stripped.trim_start().chars().next(), Some('}') | Some(']'))
                };
                if !(is_trailing || has_comment_then_close) {
                    out.push(c);
                }
                i += 1;
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push_str(match word.as_str() {
                    "True" | "TRUE" => "true",
                    "False" | "FALSE" => "false",
                    "None" => "null",
                    _ => &word,
                });
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

fn strip_line_comments(s: &str) -> String {
    s.lines()
        .map(|l| l.split_once("//").map_or(l, |(a, _)| a))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_relevant() {
        let text = "Here you go:\n```json\n{\"Relevant\":\"True\"}\n```";
        let m = extract_structured(text, &["Relevant"]).unwrap();
        assert_eq!(m["Relevant"], "True");
    }

    #[test]
    fn prose_then_summary_object() {
        let text = r#"After reading the assay I conclude the following.
{
  "BioAssay_Summary": "Measures GRK5 inhibition.",
  "Assay_Type": "Enzymatic Inhibition",
  "Summary_of_Observations": "Cyclic peptides are weak.",
  "CounterScreen": "false"
}"#;
        let keys = [
            "BioAssay_Summary",
            "Assay_Type",
            "Summary_of_Observations",
            "CounterScreen",
        ];
        let m = extract_structured(text, &keys).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m["CounterScreen"], "False");
    }

    #[test]
    fn no_braces() {
        assert_eq!(
            extract_structured("nothing here", &[]),
            Err(ExtractError::NoObjectFound)
        );
        assert_eq!(extract_structured("{ not json", &[]), Err(ExtractError::NoObjectFound));
    }

    #[test]
    fn missing_key() {
        assert_eq!(
            extract_structured(r#"{"a": 1}"#, &["a", "b"]),
            Err(ExtractError::MissingKey("b".into()))
        );
    }

    #[test]
    fn lenient_forms() {
        let text = "```\njson\n{\n  \"Relevant\": True  // shares the kinase family\n}\n```";
        assert_eq!(extract_structured(text, &["Relevant"]).unwrap()["Relevant"], "True");
        let text = "{\"a\": \"x\", \"b\": false,}";
        let m = extract_structured(text, &["a", "b"]).unwrap();
        assert_eq!(m["b"], "False");
        let text = "{\"a\": 2, // note\n}";
        assert_eq!(extract_structured(text, &["a"]).unwrap()["a"], "2");
    }

    #[test]
    fn skips_broken_object_for_later_one() {
        let text = "{broken} and then {\"k\": \"v\"}";
        assert_eq!(extract_structured(text, &["k"]).unwrap()["k"], "v");
    }

    #[test]
    fn braces_inside_strings() {
        let text = r#"{"k": "a } b", "j": "{"}"#;
        let m = extract_structured(text, &["k", "j"]).unwrap();
        assert_eq!(m["k"], "a } b");
    }

    #[test]
    fn bool_normalization() {
        assert_eq!(normalize_bool("true"), "True");
        assert_eq!(normalize_bool(" FALSE "), "False");
        assert_eq!(normalize_bool("maybe"), "maybe");
    }
}
