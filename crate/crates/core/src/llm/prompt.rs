//! Chat prompts for hard-negative generation.

use serde::Serialize;

use crate::datamodel::QueryPositivePair;
use crate::error::{Error, Result};

pub const SYSTEM_PROMPT: &str = "You are an assistant that generates hard negative passages for information retrieval tasks. A hard negative is a passage that seems relevant to the query but does not actually answer it or provide the correct information. You will be given both a query and a positive passage (the correct answer). Use this context to generate hard negatives that are semantically similar but factually incorrect or irrelevant.";

/// User message template. `{query}` and `{positive}` are substituted once,
/// left to right; substituted text is never rescanned.
pub const USER_TEMPLATE: &str = "Generate 5 hard negative passages for the following query and positive passage pair.

The hard negatives should be similar in style and topic to the positive passage but should NOT correctly answer the query. Each passage should be max of 100 words but no less than 75.

Query: {query}

Positive Passage (correct answer): {positive}

Generate 5 hard negative passages that seem relevant but are actually incorrect or don't properly answer the query.

Provide the passages in the following format:

Passage 1: [your first passage]

Passage 2: [your second passage]

Passage 3: [your third passage]

Passage 4: [your fourth passage]

Passage 5: [your fifth passage]";

/// Flag raised when the query or positive already contains a marker line.
pub const FLAG_MARKER_IN_INPUT: &str = "marker_in_input";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChatPrompt {
    pub system: String,
    pub user: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    'outer: while !rest.is_empty() {
        for (name, value) in values {
            if let Some(tail) = rest.strip_prefix(name) {
                out.push_str(value);
                rest = tail;
                continue 'outer;
            }
        }
        let c = rest.chars().next().expect("non-empty");
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

pub fn render_prompt(pair: &QueryPositivePair) -> Result<ChatPrompt> {
    if pair.query.trim().is_empty() {
        return Err(Error::InvalidInput(format!("query {} is empty", pair.query_id)));
    }
    if pair.positive.text.trim().is_empty() {
        return Err(Error::InvalidInput(format!(
            "positive passage of query {} is empty",
            pair.query_id
        )));
    }
    let user = substitute(
        USER_TEMPLATE,
        &[("{query}", &pair.query), ("{positive}", &pair.positive.text)],
    );
    let mut flags = Vec::new();
    if pair.query.contains("Passage 1:") || pair.positive.text.contains("Passage 1:") {
        log::warn!("query {} input contains a \"Passage 1:\" marker", pair.query_id);
        flags.push(FLAG_MARKER_IN_INPUT.to_string());
    }
    Ok(ChatPrompt {
        system: SYSTEM_PROMPT.to_string(),
        user,
        flags,
    })
}
