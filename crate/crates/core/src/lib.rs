//! Hard-negative mining and training-set construction for retrieval
//! fine-tuning.

pub mod bm25;
pub mod config;
pub mod datamodel;
pub mod embed;
pub mod error;
pub mod eval;
pub mod http;
pub mod jsonl;
pub mod llm;
pub mod mixer;
pub mod mock;
pub mod pipeline;
mod ranking;
pub mod report;
pub mod tokenizer;

pub use error::{Error, Result};
