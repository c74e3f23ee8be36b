//! Locating and repairing JSON recommendation arrays in free text.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Recommendation, RecommendationList};

/// Keys accepted as the name field, compared case-insensitively.
pub const NAME_KEYS: &[&str] = &[
    "name",
    "full_name",
    "fullname",
    "scientist",
    "scientist_name",
    "author",
    "author_name",
    "researcher",
    "researcher_name",
    "physicist",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionFailure {
    NoArray,
    EmptyArray,
    SchemaMismatch,
}

impl ExtractionFailure {
    pub fn name(self) -> &'static str {
        match self {
            Self::NoArray => "no_array",
            Self::EmptyArray => "empty_array",
            Self::SchemaMismatch => "schema_mismatch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    SingleQuotes,
    UnquotedKeys,
    TrailingCommas,
    TruncatedTail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub list: RecommendationList,
    /// Non-whitespace text outside the array (code fences excluded).
    pub verbose: bool,
    /// Byte span of the array in the raw text.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repaired {
    pub list: RecommendationList,
    pub repairs: Vec<Repair>,
}

fn name_of(obj: &serde_json::Map<String, Value>) -> Option<(&str, &str)> {
    for want in NAME_KEYS {
        for (k, v) in obj {
            if k.trim().eq_ignore_ascii_case(want) {
                if let Value::String(s) = v {
                    return Some((k.as_str(), s.as_str()));
                }
            }
        }
    }
    None
}

fn to_list(items: &[Value]) -> Result<RecommendationList, ExtractionFailure> {
    if items.is_empty() {
        return Err(ExtractionFailure::EmptyArray);
    }
    let mut entries = Vec::with_capacity(items.len());
    for item in items {
        let Value::Object(obj) = item else {
            return Err(ExtractionFailure::SchemaMismatch);
        };
        let (key, name) = name_of(obj).ok_or(ExtractionFailure::SchemaMismatch)?;
        let extras: BTreeMap<String, Value> = obj
            .iter()
            .filter(|(k, _)| k.as_str() != key)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        entries.push(Recommendation {
            raw_name: name.to_string(),
            extras,
        });
    }
    Ok(RecommendationList::new(entries))
}

fn is_verbose(raw: &str, start: usize, end: usize) -> bool {
    let outside = |s: &str| {
        s.lines().any(|line| {
            let t = line.trim();
            !(t.is_empty() || t.starts_with("```") && t[3..].chars().all(|c| c.is_alphanumeric()))
        })
    };
    outside(&raw[..start]) || outside(&raw[end..])
}

/// Strict extraction: the first syntactically complete JSON array whose
/// elements are all objects carrying a name field.
pub fn extract_recommendations(raw: &str) -> Result<Extraction, ExtractionFailure> {
    let mut failure = ExtractionFailure::NoArray;
    for (start, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        let Some(Ok(Value::Array(items))) = stream.next() else {
            continue;
        };
        let end = start + stream.byte_offset();
        match to_list(&items) {
            Ok(list) => {
                return Ok(Extraction {
                    list,
                    verbose: is_verbose(raw, start, end),
                    span: (start, end),
                })
            }
            Err(f) => failure = failure.max(f),
        }
    }
    Err(failure)
}

/// Attempts the closed repair grammar on each array-of-objects opening.
pub fn repair_recommendations(raw: &str) -> Option<Repaired> {
    let bytes = raw.as_bytes();
    for (start, _) in raw.match_indices('[') {
        let next = bytes[start + 1..]
            .iter()
            .find(|b| !b.is_ascii_whitespace())
            .copied();
        if next != Some(b'{') {
            continue;
        }
        let Some((text, repairs)) = relex(&raw[start..]) else {
            continue;
        };
        if repairs.is_empty() {
            continue;
        }
        let Ok(Value::Array(items)) = serde_json::from_str::<Value>(&text) else {
            continue;
        };
        if let Ok(list) = to_list(&items) {
            return Some(Repaired { list, repairs });
        }
    }
    None
}

/// Re-emits `src` (starting at `[`) as JSON, applying repairs as needed.
/// Returns the repaired array text and the repairs used.
fn relex(src: &str) -> Option<(String, Vec<Repair>)> {
    #[derive(PartialEq)]
    enum Str {
        No,
        Double,
        Single,
    }
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len() + 8);
    let mut repairs = Vec::new();
    fn note(r: Repair, repairs: &mut Vec<Repair>) {
        if !repairs.contains(&r) {
            repairs.push(r);
        }
    }
    let mut stack: Vec<char> = Vec::new();
    let mut in_str = Str::No;
    let mut escape = false;
    let mut last_element_end: Option<usize> = None;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match in_str {
            Str::Double => {
                out.push(c);
                if escape {
                    escape = false;
                } else if c == '\\' {
                    escape = true;
                } else if c == '"' {
                    in_str = Str::No;
                }
            }
            Str::Single => {
                if escape {
                    escape = false;
                    if c == '\'' {
                        out.pop();
                        out.push('\'');
                    } else {
                        out.push(c);
                    }
                } else if c == '\\' {
                    escape = true;
                    out.push(c);
                } else if c == '\'' {
                    out.push('"');
                    in_str = Str::No;
                } else if c == '"' {
                    out.push_str("\\\"");
                } else {
                    out.push(c);
                }
            }
            Str::No => match c {
                '"' => {
                    in_str = Str::Double;
                    out.push(c);
                }
                '\'' => {
                    in_str = Str::Single;
                    note(Repair::SingleQuotes, &mut repairs);
                    out.push('"');
                }
                ',' => {
                    let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                    if matches!(next, Some(']') | Some('}')) {
                        note(Repair::TrailingCommas, &mut repairs);
                    } else {
                        out.push(c);
                    }
                }
                '[' | '{' => {
                    stack.push(c);
                    out.push(c);
                }
                ']' | '}' => {
                    let open = stack.pop()?;
                    if (open == '[') != (c == ']') {
                        return None;
                    }
                    out.push(c);
                    if stack.is_empty() {
                        return Some((out, repairs));
                    }
                    if stack.len() == 1 {
                        last_element_end = Some(out.len());
                    }
                }
                c if (c.is_alphabetic() || c == '_') && stack.last() == Some(&'{') => {
                    let prev = out.chars().rev().find(|c| !c.is_whitespace());
                    let mut j = i;
                    while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                        j += 1;
                    }
                    let ident: String = chars[i..j].iter().collect();
                    let colon = chars[j..].iter().find(|c| !c.is_whitespace()) == Some(&':');
                    if matches!(prev, Some('{') | Some(',')) && colon {
                        note(Repair::UnquotedKeys, &mut repairs);
                        out.push('"');
                        out.push_str(&ident);
                        out.push('"');
                    } else {
                        out.push_str(&ident);
                    }
                    i = j;
                    continue;
                }
                _ => out.push(c),
            },
        }
        i += 1;
    }
    // ran out of input inside the array: keep the complete elements
    let end = last_element_end?;
    out.truncate(end);
    out.push(']');
    note(Repair::TruncatedTail, &mut repairs);
    Some((out, repairs))
}
