//! Dense mining with the offline hashing provider, then the same corpus
//! served over HTTP by the mock's `/embed` route.
//!
//!     cargo run --example embed_mining

use std::time::Duration;

use hardneg::datamodel::{build_corpus, Passage, QueryPositivePair};
use hardneg::embed::{embed_corpus, mine_embed, HashingProvider, RemoteProvider};
use hardneg::http::RetryPolicy;
use hardneg::mock::MockServer;

#[tokio::main]
async fn main() -> hardneg::Result<()> {
    let pair = QueryPositivePair {
        query_id: "q1".into(),
        query: "why is the sky blue".into(),
        positive: Passage::new("d1", "", "Air scatters blue light more than red light, so the sky looks blue."),
        alternates: vec![],
    };
    let extra: Vec<Passage> = [
        "Sunsets look red because light crosses more air near the horizon.",
        "The ocean looks blue partly because water absorbs red light.",
        "Clouds are white because droplets scatter all colours equally.",
        "Mars has a thin atmosphere and a butterscotch sky.",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| Passage::new(format!("x{i}"), "", *t))
    .collect();
    let corpus = build_corpus(std::slice::from_ref(&pair), &extra)?;

    let local = HashingProvider::default();
    let vectors = embed_corpus(&local, &corpus, 2, 2).await?;
    let set = mine_embed(&local, &corpus, &vectors, &pair, 3).await?;
    println!("{}", set.source);
    for n in &set.negatives {
        println!("  {:.4}  {}", n.score.unwrap_or(0.0), n.passage.text);
    }

    let server = MockServer::start().await.expect("bind mock");
    let remote = RemoteProvider::new(&server.url(), "hashed-bow-256", 256, Duration::from_secs(5), RetryPolicy::default())?;
    let remote_vectors = embed_corpus(&remote, &corpus, 2, 2).await?;
    let remote_set = mine_embed(&remote, &corpus, &remote_vectors, &pair, 3).await?;
    println!("remote: {} batches, same ranking: {}", server.embed_requests(), remote_set.negatives == set.negatives);
    Ok(())
}
