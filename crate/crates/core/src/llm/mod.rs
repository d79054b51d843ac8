//! Corpus-free negatives: prompt rendering, the chat client, response
//! parsing and the retrying generation loop.

pub mod client;
pub mod generate;
pub mod parse;
pub mod prompt;

pub use client::{ChatClient, ChatMessage, ChatRequest, OpenAiChatClient, RateLimiter};
pub use generate::{generate_hard_negatives, generate_many, GenerationConfig, GenerationRecord, LengthPolicy};
pub use parse::{parse_passages, validate_passages, ParsePassagesError, Violation, ViolationKind};
pub use prompt::{render_prompt, ChatPrompt, SYSTEM_PROMPT, USER_TEMPLATE};
