use std::time::Duration;

use hardneg::datamodel::{Passage, QueryPositivePair};
use hardneg::llm::{
    generate_hard_negatives, generate_many, render_prompt, GenerationConfig, LengthPolicy, OpenAiChatClient,
};
use hardneg::mock::{canonical_answer, Fallback, MockReply, MockServer};
use hardneg::Error;
use serde_json::json;

const SYSTEM: &str = include_str!("fixtures/system_prompt.txt");
const USER_FRANCE: &str = include_str!("fixtures/user_prompt_capital_of_france.txt");

fn france() -> QueryPositivePair {
    QueryPositivePair {
        query_id: "fr".into(),
        query: "capital of France".into(),
        positive: Passage::new("d1", "", "Paris is the capital and largest city of France."),
        alternates: vec![],
    }
}

fn config(model: &str) -> GenerationConfig {
    GenerationConfig {
        initial_backoff_ms: 1,
        max_backoff_ms: 4,
        ..GenerationConfig::new(model)
    }
}

fn client(server: &MockServer) -> OpenAiChatClient {
    OpenAiChatClient::new(&server.url(), Duration::from_secs(10), None).unwrap()
}

fn passages(words: usize, n: usize) -> String {
    (1..=n)
        .map(|i| format!("Passage {i}: {}", vec![format!("w{i}"); words].join(" ")))
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[test]
fn rendered_prompt_matches_fixture_bytes() {
    let p = render_prompt(&france()).unwrap();
    assert_eq!(p.system, SYSTEM);
    assert_eq!(p.user, USER_FRANCE);
    assert!(p.flags.is_empty());
}

#[tokio::test]
async fn request_body_carries_sampling_parameters_and_messages() {
    let server = MockServer::start().await.unwrap();
    let (set, record) = generate_hard_negatives(&client(&server), &france(), &config("qwen3-4b")).await.unwrap();
    assert_eq!(record.attempts, 1);
    assert_eq!(set.negatives.len(), 5);
    assert_eq!(set.source.to_string(), "llm:qwen3-4b");
    assert!(set.negatives.iter().all(|n| n.score.is_none()));
    let reqs = server.chat_requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(
        reqs[0],
        json!({
            "model": "qwen3-4b",
            "messages": [
                {"role": "system", "content": SYSTEM},
                {"role": "user", "content": USER_FRANCE}
            ],
            "temperature": 0.6,
            "top_p": 0.95,
            "top_k": 20,
            "min_p": 0.0,
            "max_tokens": 1024
        })
    );
}

#[tokio::test]
async fn min_p_can_be_left_out() {
    let server = MockServer::start().await.unwrap();
    let c = GenerationConfig { send_min_p: false, ..config("m") };
    generate_hard_negatives(&client(&server), &france(), &c).await.unwrap();
    assert!(server.chat_requests()[0].get("min_p").is_none());
}

#[tokio::test]
async fn garbage_then_valid_takes_two_attempts() {
    let server = MockServer::with_script(vec![MockReply::Content("I cannot help with that.".into())], Fallback::Canonical)
        .await
        .unwrap();
    let (set, record) = generate_hard_negatives(&client(&server), &france(), &config("m")).await.unwrap();
    assert_eq!(record.attempts, 2);
    assert_eq!(set.attempts, Some(2));
    assert_eq!(server.chat_requests().len(), 2);
    // the retry is the identical request
    assert_eq!(server.chat_requests()[0], server.chat_requests()[1]);
}

#[tokio::test]
async fn four_passages_forever_exhausts_retries() {
    let four = passages(80, 4);
    let server = MockServer::with_script(vec![], Fallback::Reply(MockReply::Content(four.clone())))
        .await
        .unwrap();
    let c = config("m");
    let err = generate_hard_negatives(&client(&server), &france(), &c).await.unwrap_err();
    match err {
        Error::GenerationExhausted { attempts, last_raw, reason, .. } => {
            assert_eq!(attempts, c.max_retries + 1);
            assert_eq!(last_raw.as_deref(), Some(four.as_str()));
            assert!(reason.contains("missing Passage 5"), "{reason}");
        }
        other => panic!("unexpected {other}"),
    }
    assert_eq!(server.chat_requests().len() as u32, c.max_retries + 1);
}

#[tokio::test]
async fn server_errors_are_retried_then_surface_as_transport() {
    let server = MockServer::with_script(vec![MockReply::Status(503), MockReply::Status(500)], Fallback::Canonical)
        .await
        .unwrap();
    let (_, record) = generate_hard_negatives(&client(&server), &france(), &config("m")).await.unwrap();
    assert_eq!(record.attempts, 3);
    assert_eq!(server.chat_requests().len(), 3);

    let down = MockServer::with_script(vec![], Fallback::Reply(MockReply::Status(500))).await.unwrap();
    let c = GenerationConfig { max_retries: 2, ..config("m") };
    let err = generate_hard_negatives(&client(&down), &france(), &c).await.unwrap_err();
    assert!(matches!(err, Error::Transport { .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert_eq!(down.chat_requests().len(), 3);
}

#[tokio::test]
async fn response_without_content_is_a_transport_failure() {
    let server = MockServer::with_script(vec![MockReply::Body(json!({"choices": []}))], Fallback::Canonical)
        .await
        .unwrap();
    let (_, record) = generate_hard_negatives(&client(&server), &france(), &config("m")).await.unwrap();
    assert_eq!(record.attempts, 2);
}

#[tokio::test]
async fn length_policy_flags_or_regenerates() {
    let short = passages(40, 5);
    let server = MockServer::with_script(vec![MockReply::Content(short.clone())], Fallback::Canonical)
        .await
        .unwrap();
    let (set, record) = generate_hard_negatives(&client(&server), &france(), &config("m")).await.unwrap();
    assert_eq!(record.attempts, 1);
    assert_eq!(record.word_counts, vec![40; 5]);
    assert!(set.negatives.iter().all(|n| n.flags == ["too_short"]));
    assert_eq!(record.violations[0], "1:too_short");

    server.push_reply(MockReply::Content(short));
    let strict = GenerationConfig { length_policy: LengthPolicy::Strict, ..config("m") };
    let (set, record) = generate_hard_negatives(&client(&server), &france(), &strict).await.unwrap();
    assert_eq!(record.attempts, 2);
    assert!(set.negatives.iter().all(|n| n.flags.is_empty()));
}

#[tokio::test]
async fn many_pairs_keep_input_order() {
    let server = MockServer::start().await.unwrap();
    let pairs: Vec<QueryPositivePair> = (0..20)
        .map(|i| QueryPositivePair {
            query_id: format!("q{i}"),
            query: format!("question number {i}"),
            positive: Passage::new(format!("d{i}"), "", format!("answer {i}")),
            alternates: vec![],
        })
        .collect();
    let results = generate_many(&client(&server), &pairs, &config("m"), 6).await;
    assert_eq!(results.len(), 20);
    for (pair, r) in pairs.iter().zip(results) {
        let (set, record) = r.unwrap();
        assert_eq!(set.query_id, pair.query_id);
        assert_eq!(record.query_id, pair.query_id);
        let expect = hardneg::llm::parse_passages(&canonical_answer(&render_prompt(pair).unwrap().user)).unwrap();
        assert_eq!(record.parsed, expect);
    }
    assert_eq!(server.chat_requests().len(), 20);
}

#[tokio::test]
async fn marker_in_input_is_flagged_not_rejected() {
    let server = MockServer::start().await.unwrap();
    let mut pair = france();
    pair.positive.text = "Passage 1: Paris.".into();
    let (_, record) = generate_hard_negatives(&client(&server), &pair, &config("m")).await.unwrap();
    assert_eq!(record.prompt_flags, ["marker_in_input"]);
}
