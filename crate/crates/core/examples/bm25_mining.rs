//! BM25 hard-negative mining over a small in-memory corpus.
//!
//!     cargo run --example bm25_mining

use hardneg::bm25::{build_index, mine_bm25, Bm25Params};
use hardneg::datamodel::{build_corpus, Passage, QueryPositivePair};
use hardneg::tokenizer::tokenize;

fn main() -> hardneg::Result<()> {
    let pair = QueryPositivePair {
        query_id: "q1".into(),
        query: "what causes ocean tides".into(),
        positive: Passage::new("d1", "", "Tides are caused by the gravitational pull of the moon on the oceans."),
        alternates: vec![],
    };
    let extra = [
        "The moon orbits the earth roughly every 27 days.",
        "Ocean currents are driven by wind and differences in salinity.",
        "Spring tides happen when the sun and moon line up.",
        "Honey bees collect nectar from flowers.",
        "Tides in the Bay of Fundy are among the highest on earth.",
        "Volcanoes form where tectonic plates meet.",
    ];
    let extra: Vec<Passage> = extra
        .iter()
        .enumerate()
        .map(|(i, t)| Passage::new(format!("x{i}"), "", *t))
        .collect();
    let corpus = build_corpus(std::slice::from_ref(&pair), &extra)?;
    let index = build_index(&corpus, Bm25Params::default())?;

    println!("avgdl {:.3}, idf(tides) {:.5}", index.avgdl(), index.idf("tides").unwrap_or(0.0));
    let set = mine_bm25(&index, &corpus, &pair, 3)?;
    for n in &set.negatives {
        println!("{:>8.4}  {}  {}", n.score.unwrap_or(0.0), n.passage.doc_id, n.passage.text);
    }
    println!("positive score {:.4}", index.score(&tokenize(&pair.query), "d1")?);
    Ok(())
}
