//! Deterministic in-process server speaking the chat-completions and
//! embedding protocols, for tests, examples and offline pipeline runs.
//!
//! Chat replies are taken from a script, in order; once the script is
//! exhausted the fallback answers. The canonical fallback derives five
//! 80-word passages from the query in the prompt, so identical prompts get
//! identical answers. Every chat request body is captured.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::embed::{fnv1a, HashingProvider};
use crate::tokenizer::tokenize;

#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    /// 200 with this text as `choices[0].message.content`.
    Content(String),
    /// Error status with a plain-text body.
    Status(u16),
    /// 200 with an arbitrary JSON body.
    Body(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fallback {
    Canonical,
    Reply(MockReply),
}

struct Shared {
    script: Mutex<VecDeque<MockReply>>,
    fallback: Fallback,
    chat_requests: Mutex<Vec<Value>>,
    embed_requests: Mutex<usize>,
    embedder: HashingProvider,
}

pub struct MockServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

const FILLER: &[&str] = &[
    "although", "records", "suggest", "several", "related", "factors", "the", "region", "historians",
    "often", "describe", "a", "different", "period", "when", "local", "authorities", "introduced",
    "new", "rules", "that", "affected", "trade", "and", "daily", "life", "experts", "note", "this",
    "detail", "is", "commonly", "confused", "with", "another", "event", "in", "nearby", "areas",
    "while", "some", "sources", "emphasize", "economic", "effects", "others", "focus", "on",
    "cultural", "changes", "over", "time",
];

/// Five deterministic 80-word passages about the query in `user_prompt`.
pub fn canonical_answer(user_prompt: &str) -> String {
    let query = user_prompt
        .split_once("Query: ")
        .map(|(_, rest)| rest.split("\n\nPositive Passage").next().unwrap_or(rest))
        .unwrap_or(user_prompt);
    let topic: Vec<String> = tokenize(query).into_inner();
    let mut out = String::new();
    for i in 1..=5 {
        let mut words: Vec<String> = Vec::with_capacity(80);
        words.push(format!("variant{i}"));
        words.extend(topic.iter().take(10).cloned());
        let mut j = 0u64;
        while words.len() < 80 {
            let h = fnv1a(format!("{query}\u{0}{i}\u{0}{j}").as_bytes());
            words.push(FILLER[(h % FILLER.len() as u64) as usize].to_string());
            j += 1;
        }
        if i > 1 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("Passage {i}: {}", words.join(" ")));
    }
    out
}

fn completion_body(content: &str, model: &str) -> Value {
    json!({
        "id": "chatcmpl-mock",
        "object": "chat.completion",
        "created": 0,
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    })
}

async fn chat(State(shared): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    let model = body.get("model").and_then(Value::as_str).unwrap_or("mock").to_string();
    let user = body
        .pointer("/messages/1/content")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    shared.chat_requests.lock().expect("poisoned").push(body);
    let scripted = shared.script.lock().expect("poisoned").pop_front();
    let reply = match scripted {
        Some(r) => r,
        None => match &shared.fallback {
            Fallback::Canonical => MockReply::Content(canonical_answer(&user)),
            Fallback::Reply(r) => r.clone(),
        },
    };
    match reply {
        MockReply::Content(text) => Json(completion_body(&text, &model)).into_response(),
        MockReply::Body(v) => Json(v).into_response(),
        MockReply::Status(code) => {
            let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, format!("mock status {code}")).into_response()
        }
    }
}

async fn embed(State(shared): State<Arc<Shared>>, Json(body): Json<Value>) -> Response {
    *shared.embed_requests.lock().expect("poisoned") += 1;
    let Some(inputs) = body.get("input").and_then(Value::as_array) else {
        return (StatusCode::BAD_REQUEST, "missing input").into_response();
    };
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(index, text)| {
            let v = shared.embedder.embed_text(text.as_str().unwrap_or(""));
            json!({"index": index, "embedding": v.values()})
        })
        .collect();
    Json(json!({"data": data, "dim": crate::embed::EmbeddingProvider::dimension(&shared.embedder)}))
        .into_response()
}

impl MockServer {
    /// Canonical answers, no script, on an ephemeral localhost port.
    pub async fn start() -> std::io::Result<Self> {
        Self::with_script(Vec::new(), Fallback::Canonical).await
    }

    pub async fn with_script(script: Vec<MockReply>, fallback: Fallback) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0".parse().expect("literal addr"), script, fallback).await
    }

    pub async fn bind(addr: SocketAddr, script: Vec<MockReply>, fallback: Fallback) -> std::io::Result<Self> {
        let shared = Arc::new(Shared {
            script: Mutex::new(script.into()),
            fallback,
            chat_requests: Mutex::new(Vec::new()),
            embed_requests: Mutex::new(0),
            embedder: HashingProvider::default(),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(chat))
            .route("/embed", post(embed))
            .with_state(shared.clone());
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = serve.await {
                log::error!("mock server stopped: {e}");
            }
        });
        Ok(MockServer {
            addr,
            shared,
            shutdown: Some(tx),
            task: Some(task),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Bodies of all chat requests received so far, in arrival order.
    pub fn chat_requests(&self) -> Vec<Value> {
        self.shared.chat_requests.lock().expect("poisoned").clone()
    }

    pub fn embed_requests(&self) -> usize {
        *self.shared.embed_requests.lock().expect("poisoned")
    }

    pub fn push_reply(&self, reply: MockReply) {
        self.shared.script.lock().expect("poisoned").push_back(reply);
    }

    /// Runs until the process is interrupted.
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}
