mod common;

use common::{brute_force_top_k, random_corpus, rng, Bm25Oracle};
use hardneg::bm25::{build_index, idf_value, mine_bm25, Bm25Params};
use hardneg::datamodel::{Passage, PassageCorpus, QueryPositivePair};
use hardneg::tokenizer::tokenize;
use proptest::prelude::*;

fn texts(corpus: &PassageCorpus) -> Vec<&str> {
    corpus.passages().iter().map(|p| p.text.as_str()).collect()
}

fn ids(set: &hardneg::datamodel::HardNegativeSet) -> Vec<(String, f64)> {
    set.negatives
        .iter()
        .map(|n| (n.passage.doc_id.clone(), n.score.unwrap()))
        .collect()
}

#[test]
fn two_hundred_docs_match_brute_force() {
    let mut r = rng(200);
    let mut checked = 0;
    while checked < 5 {
        let (corpus, pair) = random_corpus(&mut r, 400, 150);
        if corpus.len() < 200 {
            continue;
        }
        let index = build_index(&corpus, Bm25Params::default()).unwrap();
        let got = mine_bm25(&index, &corpus, &pair, 5).unwrap();
        let scores = Bm25Oracle::default().scores(&texts(&corpus), &pair.query);
        assert_eq!(ids(&got), brute_force_top_k(&corpus, &pair, &scores, 5));
        checked += 1;
    }
}

#[test]
fn every_cell_matches_oracle_on_toy_corpus() {
    let docs = ["apple banana apple", "banana cherry", "cherry date elder fig", "apple"];
    let corpus = PassageCorpus::from_passages(
        docs.iter().enumerate().map(|(i, t)| Passage::new(format!("d{i}"), "", *t)),
    )
    .unwrap();
    let index = build_index(&corpus, Bm25Params::default()).unwrap();
    for q in ["apple", "banana cherry", "fig apple apple", "zzz", "date"] {
        let want = Bm25Oracle::default().scores(&docs, q);
        for (i, w) in want.iter().enumerate() {
            let got = index.score(&tokenize(q), &format!("d{i}")).unwrap();
            assert!((got - w).abs() < 1e-9, "{q} d{i}: {got} vs {w}");
        }
    }
    assert!(index.score(&tokenize("apple"), "nope").is_err());
}

#[test]
fn idf_never_floored_by_the_plus_one_form() {
    for n in 1..60 {
        for df in 1..=n {
            assert!(idf_value(n, df) > 0.0);
        }
    }
    assert!((idf_value(3, 3) - (0.5f64 / 3.5 + 1.0).ln()).abs() < 1e-12);
}

#[test]
fn k_beyond_corpus_returns_all_candidates() {
    let corpus = PassageCorpus::from_passages([
        Passage::new("a", "", "x y"),
        Passage::new("b", "", "x"),
        Passage::new("c", "", "y z"),
    ])
    .unwrap();
    let pair = QueryPositivePair {
        query_id: "q".into(),
        query: "x".into(),
        positive: Passage::new("b", "", "x"),
        alternates: vec![],
    };
    let index = build_index(&corpus, Bm25Params::default()).unwrap();
    let got = mine_bm25(&index, &corpus, &pair, 10).unwrap();
    let ids: Vec<_> = got.negatives.iter().map(|n| n.passage.doc_id.as_str()).collect();
    assert_eq!(ids, ["a", "c"]);
}

#[test]
fn positive_matched_by_text_only_is_excluded() {
    let corpus = PassageCorpus::from_passages([
        Passage::new("a", "", "tides moon"),
        Passage::new("b", "", "tides"),
    ])
    .unwrap();
    let pair = QueryPositivePair {
        query_id: "q".into(),
        query: "tides moon".into(),
        positive: Passage::new("other-id", "", "  tides   moon "),
        alternates: vec![],
    };
    let index = build_index(&corpus, Bm25Params::default()).unwrap();
    let got = mine_bm25(&index, &corpus, &pair, 5).unwrap();
    assert_eq!(got.negatives.len(), 1);
    assert_eq!(got.negatives[0].passage.doc_id, "b");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mining_equals_brute_force(seed in any::<u64>(), k in 1usize..12) {
        let (corpus, pair) = random_corpus(&mut rng(seed), 120, 40);
        let index = build_index(&corpus, Bm25Params::default()).unwrap();
        let got = mine_bm25(&index, &corpus, &pair, k).unwrap();
        let scores = Bm25Oracle::default().scores(&texts(&corpus), &pair.query);
        prop_assert_eq!(ids(&got), brute_force_top_k(&corpus, &pair, &scores, k));
        prop_assert!(got.negatives.iter().all(|n| n.passage.doc_id != pair.positive.doc_id));
    }

    #[test]
    fn scores_are_finite_and_nonnegative(seed in any::<u64>()) {
        let (corpus, pair) = random_corpus(&mut rng(seed), 60, 30);
        let index = build_index(&corpus, Bm25Params::default()).unwrap();
        for s in index.score_all(&tokenize(&pair.query)) {
            prop_assert!(s.is_finite() && s >= 0.0);
        }
    }

    #[test]
    fn extra_occurrence_never_lowers_score(seed in any::<u64>(), k1 in 0.01f64..3.0, b in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let (corpus, _) = random_corpus(&mut r, 40, 20);
        let params = Bm25Params { k1, b, epsilon: 0.25 };
        let target = common::below(&mut r, corpus.len());
        let doc = &corpus.passages()[target];
        let words: Vec<&str> = doc.text.split_whitespace().collect();
        let term = words[common::below(&mut r, words.len())].to_string();
        let bumped: Vec<Passage> = corpus
            .passages()
            .iter()
            .map(|p| if p.doc_id == doc.doc_id { Passage::new(p.doc_id.clone(), "", format!("{} {term}", p.text)) } else { p.clone() })
            .collect();
        let bumped = PassageCorpus::from_passages(bumped).unwrap();
        // the longer text may now duplicate another document
        prop_assume!(bumped.len() == corpus.len());
        let q = vec![term];
        let before = build_index(&corpus, params).unwrap().score(&q, &doc.doc_id).unwrap();
        let after = build_index(&bumped, params).unwrap().score(&q, &doc.doc_id).unwrap();
        prop_assert!(after >= before - 1e-12, "{} -> {}", before, after);
    }

    #[test]
    fn scores_ignore_insertion_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (corpus, pair) = random_corpus(&mut r, 60, 25);
        let mut shuffled: Vec<Passage> = corpus.passages().to_vec();
        for i in (1..shuffled.len()).rev() {
            let j = common::below(&mut r, i + 1);
            shuffled.swap(i, j);
        }
        let other = PassageCorpus::from_passages(shuffled).unwrap();
        let a = build_index(&corpus, Bm25Params::default()).unwrap();
        let b = build_index(&other, Bm25Params::default()).unwrap();
        let q = tokenize(&pair.query).into_inner();
        for p in corpus.passages() {
            let (x, y) = (a.score(&q, &p.doc_id).unwrap(), b.score(&q, &p.doc_id).unwrap());
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        prop_assert_eq!(
            ids(&mine_bm25(&a, &corpus, &pair, 5).unwrap()).into_iter().map(|x| x.0).collect::<Vec<_>>(),
            ids(&mine_bm25(&b, &other, &pair, 5).unwrap()).into_iter().map(|x| x.0).collect::<Vec<_>>()
        );
    }
}
