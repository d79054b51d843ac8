//! Deterministic word tokenizer used for BM25 indexing and querying.
//!
//! Text is lowercased, then split into maximal runs of Unicode letters and
//! digits. An apostrophe or hyphen is kept only when it sits between two
//! alphanumeric characters, so `don't` and `state-of-the-art` survive as
//! single tokens. Everything else (whitespace, punctuation, symbols) is a
//! boundary. No stemming and no stopword removal.

use std::ops::Deref;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    tokens: Vec<String>,
}

impl TokenStream {
    pub fn into_inner(self) -> Vec<String> {
        self.tokens
    }
}

impl Deref for TokenStream {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.tokens
    }
}

impl From<Vec<String>> for TokenStream {
    fn from(tokens: Vec<String>) -> Self {
        TokenStream { tokens }
    }
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '-')
}

pub fn tokenize(text: &str) -> TokenStream {
    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let inner_joiner = is_joiner(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || inner_joiner {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenStream { tokens }
}
