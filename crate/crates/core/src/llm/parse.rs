//! Extraction and validation of the five `Passage N:` blocks in a response.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datamodel::normalize_text;

pub const PASSAGE_COUNT: usize = 5;
pub const MIN_WORDS: usize = 75;
pub const MAX_WORDS: usize = 100;

/// `Passage N:` with optional markdown emphasis around the label or colon,
/// e.g. `**Passage 2:**` or `__Passage 2__:`.
static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:\*\*|__)?(passage)[ \t]*(\d{1,6})[ \t]*(?:\*\*|__)?[ \t]*:(?:[ \t]*(?:\*\*|__))?")
        .expect("marker regex")
});

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParsePassagesError {
    #[error("missing Passage {0}")]
    Missing(usize),
    #[error("duplicate Passage {0}")]
    Duplicate(usize),
    #[error("Passage {0} out of order")]
    OutOfOrder(usize),
    #[error("unexpected Passage {0}")]
    Unexpected(usize),
    #[error("empty Passage {0}")]
    Empty(usize),
}

impl ParsePassagesError {
    /// Marker number the error refers to.
    pub fn marker(&self) -> usize {
        match *self {
            ParsePassagesError::Missing(n)
            | ParsePassagesError::Duplicate(n)
            | ParsePassagesError::OutOfOrder(n)
            | ParsePassagesError::Unexpected(n)
            | ParsePassagesError::Empty(n) => n,
        }
    }
}

/// Drops a leading reasoning block (`<think>...</think>`), which some chat
/// models emit before the answer and which may contain draft markers.
fn strip_reasoning(raw: &str) -> &str {
    match raw.rfind("</think>") {
        Some(i) => &raw[i + "</think>".len()..],
        None => raw,
    }
}

fn clean_body(body: &str) -> &str {
    body.trim()
        .trim_end_matches(|c: char| c == '*' || c == '#' || c == '_' || c.is_whitespace())
        .trim()
}

/// Extracts the five passages that follow `Passage 1:` … `Passage 5:`.
///
/// Each body runs to the next marker or the end of the text. The markers
/// must each appear exactly once, in ascending order; the first violation
/// is reported.
pub fn parse_passages(raw: &str) -> Result<Vec<String>, ParsePassagesError> {
    let text = strip_reasoning(raw);
    let markers: Vec<(usize, usize, usize)> = MARKER
        .captures_iter(text)
        .filter(|c| {
            // word boundary before the label; `\b` would reject `__Passage`
            let start = c.get(1).expect("group").start();
            !text[..start].chars().next_back().is_some_and(char::is_alphanumeric)
        })
        .map(|c| {
            let whole = c.get(0).expect("match");
            // \d{1,6} always fits, so parse cannot fail
            let n = c[2].parse::<usize>().unwrap_or(usize::MAX);
            (n, whole.start(), whole.end())
        })
        .collect();

    let mut expected = 1;
    for (i, &(n, _, _)) in markers.iter().enumerate() {
        if n == expected && n <= PASSAGE_COUNT {
            expected += 1;
        } else if n >= 1 && n < expected {
            return Err(ParsePassagesError::Duplicate(n));
        } else if n == 0 || n > PASSAGE_COUNT {
            return Err(ParsePassagesError::Unexpected(n));
        } else if markers[i + 1..].iter().any(|&(m, _, _)| m == expected) {
            return Err(ParsePassagesError::OutOfOrder(expected));
        } else {
            return Err(ParsePassagesError::Missing(expected));
        }
    }
    if expected <= PASSAGE_COUNT {
        return Err(ParsePassagesError::Missing(expected));
    }

    let mut out = Vec::with_capacity(PASSAGE_COUNT);
    for (i, &(n, _, end)) in markers.iter().enumerate() {
        let stop = markers.get(i + 1).map_or(text.len(), |m| m.1);
        let body = clean_body(&text[end..stop]);
        if body.is_empty() {
            return Err(ParsePassagesError::Empty(n));
        }
        out.push(body.to_string());
    }
    Ok(out)
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    TooShort,
    TooLong,
    EqualsPositive,
    /// Exact repeat (after normalization) of an earlier passage in the same response.
    Duplicate,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::TooShort => "too_short",
            ViolationKind::TooLong => "too_long",
            ViolationKind::EqualsPositive => "equals_positive",
            ViolationKind::Duplicate => "duplicate",
        }
    }

    pub fn is_length(self) -> bool {
        matches!(self, ViolationKind::TooShort | ViolationKind::TooLong)
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// 0-based passage index.
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.index + 1, self.kind)
    }
}

/// Length bounds (75–100 whitespace-delimited words), equality with the
/// positive, and exact repeats. Report only; nothing is removed.
pub fn validate_passages(passages: &[String], positive: &str) -> Vec<Violation> {
    let positive = normalize_text(positive);
    let mut seen: Vec<String> = Vec::with_capacity(passages.len());
    let mut out = Vec::new();
    for (index, p) in passages.iter().enumerate() {
        let words = word_count(p);
        if words < MIN_WORDS {
            out.push(Violation { index, kind: ViolationKind::TooShort });
        } else if words > MAX_WORDS {
            out.push(Violation { index, kind: ViolationKind::TooLong });
        }
        let norm = normalize_text(p);
        if norm == positive {
            out.push(Violation { index, kind: ViolationKind::EqualsPositive });
        }
        if seen.contains(&norm) {
            out.push(Violation { index, kind: ViolationKind::Duplicate });
        }
        seen.push(norm);
    }
    out
}
