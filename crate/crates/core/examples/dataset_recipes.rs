//! Composing training sets from several negative sources, in rows and in
//! merged mode, and the full recipe book.
//!
//!     cargo run --example dataset_recipes

use hardneg::datamodel::{HardNegativeSet, Negative, Passage, QueryPositivePair, SourceTag};
use hardneg::mixer::{compose, default_llm_labels, recipe_book_from_paper, MixMode, NegativeSources, Recipe};

fn set(qid: &str, source: SourceTag, texts: &[&str]) -> HardNegativeSet {
    HardNegativeSet {
        query_id: qid.into(),
        source,
        negatives: texts
            .iter()
            .map(|t| Negative {
                passage: Passage::new(*t, "", *t),
                score: None,
                flags: vec![],
            })
            .collect(),
        attempts: None,
    }
}

fn main() -> hardneg::Result<()> {
    let pairs = vec![QueryPositivePair {
        query_id: "q1".into(),
        query: "who wrote the origin of species".into(),
        positive: Passage::new("d1", "", "Charles Darwin wrote it."),
        alternates: vec![],
    }];
    let mut sources = NegativeSources::new();
    sources.insert("bm25", [set("q1", SourceTag::Bm25, &["Wallace proposed selection.", "Darwin sailed on the Beagle."])]);
    sources.insert("ce", [set("q1", SourceTag::Embed("mini".into()), &["Darwin sailed on the Beagle.", "Mendel studied peas."])]);
    sources.insert("llm:qwen3-4b", [set("q1", SourceTag::Llm("qwen3-4b".into()), &["Huxley wrote it.", "Charles Darwin wrote it."])]);

    let mut recipe = Recipe::rows("bm25+ce+qwen3-4b", ["bm25", "ce", "llm:qwen3-4b"]);
    for mode in [MixMode::Rows, MixMode::Merged] {
        recipe.mode = mode;
        let c = compose(&recipe, &pairs, &sources)?;
        println!("{mode:?}: {} rows", c.examples.len());
        for e in &c.examples {
            println!("  {:?} {:?}", e.source_tags, e.negatives);
        }
    }

    let book = recipe_book_from_paper(&default_llm_labels());
    println!("{} recipes:", book.len());
    for r in &book {
        println!("  {:<18} {}", r.name, r.sources.join(", "));
    }
    Ok(())
}
