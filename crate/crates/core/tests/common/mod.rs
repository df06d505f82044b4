#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub enum MockReply {
    Text(String),
    Status(u16),
    Stall(Duration),
}

#[derive(Clone)]
struct MockState {
    reply: MockReply,
    seen: Arc<Mutex<Vec<Value>>>,
}

pub struct MockServer {
    pub url: String,
    pub seen: Arc<Mutex<Vec<Value>>>,
}

async fn generate(
    State(state): State<MockState>,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    state.seen.lock().unwrap().push(body);
    match state.reply {
        MockReply::Text(text) => (
            StatusCode::OK,
            Json(json!({ "response": text, "done": true })),
        ),
        MockReply::Status(code) => (
            StatusCode::from_u16(code).unwrap(),
            Json(json!({ "error": "mock" })),
        ),
        MockReply::Stall(d) => {
            tokio::time::sleep(d).await;
            (StatusCode::OK, Json(json!({ "response": "too late" })))
        }
    }
}

/// Spawns a fake `/api/generate` server on its own thread and runtime.
pub fn spawn_generator(reply: MockReply) -> MockServer {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let state = MockState {
        reply,
        seen: seen.clone(),
    };
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new()
                .route("/api/generate", post(generate))
                .with_state(state);
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    MockServer {
        url: format!("http://{addr}"),
        seen,
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EmbedMock {
    /// Answers with the offline hashing embedding of the prompt.
    Hashing(usize),
    /// Returns a vector one longer on every call.
    GrowingDim,
    Status(u16),
}

#[derive(Clone)]
struct EmbedState {
    mock: EmbedMock,
    calls: Arc<Mutex<usize>>,
}

async fn embeddings(
    State(state): State<EmbedState>,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let n = {
        let mut calls = state.calls.lock().unwrap();
        *calls += 1;
        *calls
    };
    let prompt = body["prompt"].as_str().unwrap_or_default();
    match state.mock {
        EmbedMock::Hashing(dim) => {
            let v = pragya::embedding::HashingEmbedder::new(dim)
                .unwrap()
                .embed(prompt)
                .unwrap();
            (StatusCode::OK, Json(json!({ "embedding": v.values() })))
        }
        EmbedMock::GrowingDim => (
            StatusCode::OK,
            Json(json!({ "embedding": vec![1.0; n + 1] })),
        ),
        EmbedMock::Status(code) => (StatusCode::from_u16(code).unwrap(), Json(json!({}))),
    }
}

pub struct EmbedServer {
    pub url: String,
    pub calls: Arc<Mutex<usize>>,
}

/// Spawns a fake `/api/embeddings` server.
pub fn spawn_embedder(mock: EmbedMock) -> EmbedServer {
    let calls = Arc::new(Mutex::new(0));
    let state = EmbedState {
        mock,
        calls: calls.clone(),
    };
    let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new()
                .route("/api/embeddings", post(embeddings))
                .with_state(state);
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    EmbedServer {
        url: format!("http://{addr}"),
        calls,
    }
}
