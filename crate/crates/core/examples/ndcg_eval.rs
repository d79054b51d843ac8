//! nDCG@k from qrels and a run, plus a BM25 run built over a corpus.
//!
//!     cargo run --example ndcg_eval

use hardneg::bm25::{build_index, Bm25Params};
use hardneg::datamodel::{Passage, PassageCorpus};
use hardneg::eval::{make_run, ndcg_at_k, ndcg_at_k_with, Gain, Qrels, Retriever, RunRanking};

#[tokio::main]
async fn main() -> hardneg::Result<()> {
    let mut qrels = Qrels::new();
    qrels.insert("q1", "d1", 1);
    qrels.insert("q1", "d2", 2);
    let mut run = RunRanking::new();
    run.insert("q1", vec![("d3".into(), 3.0), ("d2".into(), 2.0), ("d1".into(), 1.0)])?;
    println!("linear      {:.5}", ndcg_at_k(&run, &qrels, 10)?.mean);
    println!("exponential {:.5}", ndcg_at_k_with(&run, &qrels, 10, Gain::Exponential)?.mean);

    let corpus = PassageCorpus::from_passages([
        Passage::new("d1", "", "jupiter is the largest planet"),
        Passage::new("d2", "", "mercury is the smallest planet"),
        Passage::new("d3", "", "bees make honey from nectar"),
    ])?;
    let index = build_index(&corpus, Bm25Params::default())?;
    let queries = vec![("q1".to_string(), "largest planet".to_string())];
    let bm25_run = make_run(&Retriever::Bm25(&index), &queries, &corpus, 10).await?;
    print!("{}", bm25_run.to_trec("bm25"));
    println!("bm25 nDCG@10 {:.5}", ndcg_at_k(&bm25_run, &qrels, 10)?.mean);
    Ok(())
}
