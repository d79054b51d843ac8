use std::collections::{BTreeMap, HashSet};

use hardneg::datamodel::{normalize_text, HardNegativeSet, Negative, Passage, QueryPositivePair, SourceTag};
use hardneg::mixer::{
    compose, default_llm_labels, export, manifest_path, read_triplets, recipe_book_from_paper, MixMode,
    NegativeSources, Recipe, TrainingExample,
};
use proptest::prelude::*;

const SELECTORS: [&str; 4] = ["bm25", "ce", "llm:a", "llm:b"];

fn tag(selector: &str) -> SourceTag {
    match selector {
        "bm25" => SourceTag::Bm25,
        "ce" => SourceTag::Embed("mini".into()),
        s => SourceTag::Llm(s.trim_start_matches("llm:").into()),
    }
}

/// Random world: `n` pairs over a small text alphabet so negatives often
/// repeat across sources and sometimes equal the positive; each source
/// covers a random subset of the pairs.
#[derive(Debug, Clone)]
struct World {
    pairs: Vec<QueryPositivePair>,
    sets: Vec<(String, Vec<HardNegativeSet>)>,
}

fn world() -> impl Strategy<Value = World> {
    (1usize..12).prop_flat_map(|n| {
        let texts = prop::collection::vec(prop::collection::vec(0u8..6, 0..5), n);
        let cover = prop::collection::vec(prop::collection::vec(any::<bool>(), n), SELECTORS.len());
        let positives = prop::collection::vec(0u8..6, n);
        (Just(n), positives, prop::collection::vec(texts, SELECTORS.len()), cover).prop_map(
            |(n, positives, texts, cover)| {
                let pairs: Vec<QueryPositivePair> = (0..n)
                    .map(|i| QueryPositivePair {
                        query_id: format!("q{i}"),
                        query: format!("query {i}"),
                        positive: Passage::new(format!("p{i}"), "", format!("text {}", positives[i])),
                        alternates: vec![],
                    })
                    .collect();
                let sets = SELECTORS
                    .iter()
                    .enumerate()
                    .map(|(s, sel)| {
                        let sets = (0..n)
                            .filter(|&i| cover[s][i])
                            .map(|i| HardNegativeSet {
                                query_id: format!("q{i}"),
                                source: tag(sel),
                                negatives: texts[s][i]
                                    .iter()
                                    .map(|t| Negative {
                                        passage: Passage::new(format!("n{t}"), "", format!("text  {t}")),
                                        score: None,
                                        flags: vec![],
                                    })
                                    .collect(),
                                attempts: None,
                            })
                            .collect();
                        (sel.to_string(), sets)
                    })
                    .collect();
                World { pairs, sets }
            },
        )
    })
}

fn sources(w: &World) -> NegativeSources {
    let mut s = NegativeSources::new();
    for (sel, sets) in &w.sets {
        s.insert(sel.clone(), sets.clone());
    }
    s
}

fn usable(w: &World, sel: &str, qid: &str) -> bool {
    let pair = w.pairs.iter().find(|p| p.query_id == qid).unwrap();
    let pos = normalize_text(&pair.positive.text);
    w.sets
        .iter()
        .find(|(s, _)| s == sel)
        .and_then(|(_, sets)| sets.iter().find(|x| x.query_id == qid))
        .is_some_and(|set| set.negatives.iter().any(|n| normalize_text(&n.passage.text) != pos))
}

fn covered(w: &World, recipe: &[&str], qid: &str) -> bool {
    recipe.iter().all(|sel| {
        w.sets
            .iter()
            .find(|(s, _)| s == sel)
            .is_some_and(|(_, sets)| sets.iter().any(|x| x.query_id == qid))
    })
}

fn key(e: &TrainingExample) -> String {
    serde_json::to_string(e).unwrap()
}

#[test]
fn book_has_22_uniquely_named_recipes() {
    let book = recipe_book_from_paper(&default_llm_labels());
    assert_eq!(book.len(), 22);
    let names: HashSet<_> = book.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names.len(), 22);
    let mixed = book
        .iter()
        .filter(|r| {
            let llm = r.sources.iter().any(|s| Recipe::is_llm_source(s));
            let mined = r.sources.iter().any(|s| !Recipe::is_llm_source(s));
            llm && mined
        })
        .count();
    assert_eq!(mixed, 15);
    assert!(book.iter().all(|r| r.mode == MixMode::Rows && !r.sources.is_empty()));
    assert_eq!(book[2].sources.len(), 4);
    assert_eq!(book[5].sources.len(), 6);
}

#[test]
fn three_sources_over_n_pairs_give_3n_rows() {
    let n = 7;
    let pairs: Vec<QueryPositivePair> = (0..n)
        .map(|i| QueryPositivePair {
            query_id: format!("q{i}"),
            query: format!("q {i}"),
            positive: Passage::new(format!("p{i}"), "", format!("pos {i}")),
            alternates: vec![],
        })
        .collect();
    let mut s = NegativeSources::new();
    for sel in ["bm25", "ce", "llm:a"] {
        s.insert(
            sel,
            pairs.iter().map(|p| HardNegativeSet {
                query_id: p.query_id.clone(),
                source: tag(sel),
                negatives: (0..5)
                    .map(|j| Negative {
                        passage: Passage::new(format!("{sel}{j}"), "", format!("{sel} neg {j} for {}", p.query_id)),
                        score: None,
                        flags: vec![],
                    })
                    .collect(),
                attempts: None,
            }),
        );
    }
    let c = compose(&Recipe::rows("r", ["bm25", "ce", "llm:a"]), &pairs, &s).unwrap();
    assert_eq!(c.examples.len(), 3 * n);
    assert!(c.skipped.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.jsonl");
    let m = export(&c.examples, "r", &path).unwrap();
    assert_eq!((m.examples, m.negatives), (3 * n, 15 * n));
    assert_eq!(m.sources.values().sum::<usize>(), 15 * n);
    assert_eq!(read_triplets(&path).unwrap(), c.examples);
    let again = export(&c.examples, "r", &path).unwrap();
    assert_eq!(again.sha256, m.sha256);
    let first_line = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&first_line).unwrap();
    let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["negs", "pos", "query", "tags"]);
    assert!(manifest_path(&path).is_file());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rows_mode_cardinality(w in world(), pick in prop::sample::subsequence(SELECTORS.to_vec(), 1..=4)) {
        let c = compose(&Recipe::rows("r", pick.clone()), &w.pairs, &sources(&w)).unwrap();
        let want: usize = w
            .pairs
            .iter()
            .filter(|p| covered(&w, &pick, &p.query_id))
            .map(|p| pick.iter().filter(|sel| usable(&w, sel, &p.query_id)).count())
            .sum();
        prop_assert_eq!(c.examples.len(), want);
        let skipped = w.pairs.iter().filter(|p| !covered(&w, &pick, &p.query_id)).count();
        prop_assert_eq!(c.skipped.len(), skipped);
    }

    #[test]
    fn merged_mode_has_no_repeats(w in world(), pick in prop::sample::subsequence(SELECTORS.to_vec(), 1..=4)) {
        let recipe = Recipe { mode: MixMode::Merged, ..Recipe::rows("r", pick) };
        let c = compose(&recipe, &w.pairs, &sources(&w)).unwrap();
        for e in &c.examples {
            let norm: HashSet<String> = e.negatives.iter().map(|n| normalize_text(n)).collect();
            prop_assert_eq!(norm.len(), e.negatives.len());
            prop_assert_eq!(e.negatives.len(), e.source_tags.len());
        }
    }

    #[test]
    fn no_positive_leaks(w in world(), pick in prop::sample::subsequence(SELECTORS.to_vec(), 1..=4), merged in any::<bool>()) {
        let mode = if merged { MixMode::Merged } else { MixMode::Rows };
        let recipe = Recipe { mode, ..Recipe::rows("r", pick) };
        for e in compose(&recipe, &w.pairs, &sources(&w)).unwrap().examples {
            prop_assert!(!e.negatives.is_empty());
            let pos = normalize_text(&e.positive);
            prop_assert!(e.negatives.iter().all(|n| normalize_text(n) != pos));
        }
    }

    #[test]
    fn source_order_does_not_change_row_multiset(w in world(), pick in prop::sample::subsequence(SELECTORS.to_vec(), 2..=4)) {
        let s = sources(&w);
        let a = compose(&Recipe::rows("r", pick.clone()), &w.pairs, &s).unwrap();
        let rev: Vec<&str> = pick.iter().rev().copied().collect();
        let b = compose(&Recipe::rows("r", rev), &w.pairs, &s).unwrap();
        let count = |xs: &[TrainingExample]| {
            let mut m: BTreeMap<String, usize> = BTreeMap::new();
            for e in xs {
                *m.entry(key(e)).or_default() += 1;
            }
            m
        };
        prop_assert_eq!(count(&a.examples), count(&b.examples));
    }
}

#[test]
fn unknown_selector_is_rejected() {
    let w = World { pairs: vec![], sets: vec![] };
    assert!(compose(&Recipe::rows("r", ["bm25"]), &w.pairs, &sources(&w)).is_err());
}
