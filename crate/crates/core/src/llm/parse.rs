use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingBackend, EmbeddingError};
use crate::instruct::{EXPANSION_OUTPUT_PREFIX, PARENT_OUTPUT_PREFIX};
use crate::retrieval::{rank_entities, CandidateSet, RetrievalError};
use crate::taxonomy::Entity;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no entity found in model output")]
    ParseEmpty,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

impl From<RetrievalError> for ParseError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Embedding(e) => ParseError::Embedding(e),
            _ => ParseError::ParseEmpty,
        }
    }
}

/// How a parent answer was mapped onto the candidate list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Fallback,
}

/// Remove `prefix` (ASCII case-insensitive, trailing space optional) and an
/// optional colon from the start of `text`, repeatedly.
fn strip_answer_prefix<'a>(mut text: &'a str, prefix: &str) -> &'a str {
    let prefix = prefix.trim_end();
    loop {
        let t = text.trim_start();
        let hit = t.len() >= prefix.len()
            && t.is_char_boundary(prefix.len())
            && t[..prefix.len()].eq_ignore_ascii_case(prefix);
        if !hit {
            return t;
        }
        text = t[prefix.len()..].trim_start().trim_start_matches(':');
    }
}

fn strip_numbering(s: &str) -> &str {
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            if r.is_empty() || r.starts_with(char::is_whitespace) {
                return r;
            }
        }
    }
    for bullet in ["- ", "* ", "• ", "+ "] {
        if let Some(r) = s.strip_prefix(bullet) {
            return r;
        }
    }
    if s == "-" || s == "*" || s == "•" {
        return "";
    }
    s
}

const QUOTES: &[char] = &['"', '\'', '“', '”', '‘', '’', '`'];

fn clean_item(item: &str) -> &str {
    let mut s = item.trim();
    loop {
        let before = s;
        s = strip_numbering(s).trim();
        if let Some(r) = s.strip_prefix("and ") {
            s = r.trim();
        }
        s = s.trim_end_matches(['.', '!', '?']).trim();
        s = s.trim_matches(QUOTES).trim();
        if s == before {
            return s;
        }
    }
}

/// Free text without the answer prefix or any list separator that reads as
/// a sentence ("I cannot help with that.").
fn is_prose(text: &str, body: &str) -> bool {
    let had_prefix = text.trim_start().len() != body.len();
    let t = body.trim();
    !had_prefix
        && !t.contains([',', ';', '\n'])
        && t.ends_with(['.', '!', '?'])
        && t.split_whitespace().count() >= 3
}

/// Entities listed in a set-expansion answer, deduplicated in first-seen
/// order.
pub fn parse_expansion_response(text: &str) -> Result<Vec<Entity>, ParseError> {
    let body = strip_answer_prefix(text, EXPANSION_OUTPUT_PREFIX);
    if is_prose(text, body) {
        return Err(ParseError::ParseEmpty);
    }
    let mut seen = HashSet::new();
    let out: Vec<Entity> = body
        .split([',', ';', '\n'])
        .map(clean_item)
        .filter_map(|s| Entity::new(s).ok())
        .filter(|e| seen.insert(e.norm().to_string()))
        .collect();
    if out.is_empty() {
        return Err(ParseError::ParseEmpty);
    }
    Ok(out)
}

/// Free-form parent class named by a parent-generation answer.
pub fn parse_generated_parent(text: &str) -> Result<Entity, ParseError> {
    let first_line = strip_answer_prefix(text, PARENT_OUTPUT_PREFIX)
        .lines()
        .next()
        .unwrap_or("");
    Entity::new(clean_item(first_line)).map_err(|_| ParseError::ParseEmpty)
}

/// Map a parent answer onto a candidate: exact normalized match, else the
/// candidate most similar to the answer text.
pub fn parse_parent_response<B: EmbeddingBackend + ?Sized>(
    text: &str,
    candidates: &CandidateSet,
    backend: &B,
) -> Result<(Entity, MatchKind), ParseError> {
    let answer = parse_generated_parent(text)?;
    if let Some(c) = candidates.candidates().iter().find(|c| **c == answer) {
        return Ok((c.clone(), MatchKind::Exact));
    }
    let ranked = rank_entities(candidates.candidates(), &answer, backend)?;
    let best = ranked.into_iter().next().ok_or(ParseError::ParseEmpty)?.0;
    Ok((best, MatchKind::Fallback))
}
