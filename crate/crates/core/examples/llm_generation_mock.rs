//! LLM negative generation against the in-process mock server, including
//! a scripted malformed reply that forces one retry.
//!
//!     cargo run --example llm_generation_mock

use std::time::Duration;

use hardneg::datamodel::{Passage, QueryPositivePair};
use hardneg::llm::{generate_hard_negatives, GenerationConfig, OpenAiChatClient};
use hardneg::mock::{Fallback, MockReply, MockServer};

#[tokio::main]
async fn main() -> hardneg::Result<()> {
    let server = MockServer::with_script(
        vec![MockReply::Content("Sure! Passage 1: only one passage here".into())],
        Fallback::Canonical,
    )
    .await
    .expect("bind mock");
    let client = OpenAiChatClient::new(&server.url(), Duration::from_secs(10), None)?;
    let config = GenerationConfig {
        initial_backoff_ms: 10,
        ..GenerationConfig::new("qwen3-4b")
    };
    let pair = QueryPositivePair {
        query_id: "q7".into(),
        query: "what is the capital of australia".into(),
        positive: Passage::new("d7", "", "Canberra is the capital city of Australia."),
        alternates: vec![],
    };

    let (set, record) = generate_hard_negatives(&client, &pair, &config).await?;
    println!("attempts {} (server saw {})", record.attempts, server.chat_requests().len());
    println!("word counts {:?}", record.word_counts);
    for (i, n) in set.negatives.iter().enumerate() {
        let preview: String = n.passage.text.chars().take(70).collect();
        println!("  {}: {preview}...", i + 1);
    }
    let req = &server.chat_requests()[0];
    println!(
        "sent temperature {} top_p {} top_k {} min_p {} max_tokens {}",
        req["temperature"], req["top_p"], req["top_k"], req["min_p"], req["max_tokens"]
    );
    Ok(())
}
