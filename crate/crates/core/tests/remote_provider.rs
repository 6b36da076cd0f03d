use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use persona_feedback_core::persona::Persona;
use persona_feedback_core::prompt::assemble;
use persona_feedback_core::provider::{
    CompletionProvider, GenerationParams, ProviderError, RemoteProvider,
};
use serde_json::{json, Value};

#[derive(Clone, Default)]
struct Seen {
    body: Arc<Mutex<Option<Value>>>,
    auth: Arc<Mutex<Option<String>>>,
}

async fn serve(router: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}/v1")
}

fn bundle() -> persona_feedback_core::PromptBundle {
    assemble("Lorem ipsum", &Persona::new("p").snapshot(), &[]).unwrap()
}

#[tokio::test]
async fn sends_chat_completion_request_and_reads_reply() {
    let seen = Seen::default();
    let app = Router::new()
        .route(
            "/v1/chat/completions",
            post(|State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>| async move {
                *seen.body.lock().unwrap() = Some(body);
                *seen.auth.lock().unwrap() = headers
                    .get("authorization")
                    .map(|v| v.to_str().unwrap().to_string());
                Json(json!({
                    "id": "cmpl-1",
                    "object": "chat.completion",
                    "choices": [{ "index": 0, "message": { "role": "assistant", "content": "As a reader, nice." }, "finish_reason": "stop" }]
                }))
            }),
        )
        .with_state(seen.clone());
    let base = serve(app).await;

    let provider = RemoteProvider::new(&base, Some("sk-test".into()));
    let params = GenerationParams::default();
    let reply = provider.complete(&bundle(), &params).await.unwrap();
    assert_eq!(reply, "As a reader, nice.");

    let body = seen.body.lock().unwrap().clone().unwrap();
    assert_eq!(body["model"], "gpt-3.5-turbo");
    assert_eq!(body["max_tokens"], 512);
    assert!((body["temperature"].as_f64().unwrap() - 0.7).abs() < 1e-6);
    let messages = body["messages"].as_array().unwrap();
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[0]["role"], "system");
    assert_eq!(messages[1]["role"], "user");
    assert_eq!(messages[1]["content"], bundle().messages[1].content);
    assert_eq!(seen.auth.lock().unwrap().as_deref(), Some("Bearer sk-test"));
}

async fn status_error(code: StatusCode) -> ProviderError {
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move || async move { (code, "nope") }),
    );
    let base = serve(app).await;
    RemoteProvider::new(&base, None)
        .complete(&bundle(), &GenerationParams::default())
        .await
        .unwrap_err()
}

#[tokio::test]
async fn maps_http_errors() {
    assert!(matches!(
        status_error(StatusCode::UNAUTHORIZED).await,
        ProviderError::Auth(_)
    ));
    assert!(matches!(
        status_error(StatusCode::TOO_MANY_REQUESTS).await,
        ProviderError::RateLimited(_)
    ));
    assert!(matches!(
        status_error(StatusCode::INTERNAL_SERVER_ERROR).await,
        ProviderError::Status { status: 500, .. }
    ));
}

#[tokio::test]
async fn empty_choices_are_invalid() {
    let app = Router::new().route(
        "/v1/chat/completions",
        post(|| async { Json(json!({ "choices": [] })) }),
    );
    let base = serve(app).await;
    let err = RemoteProvider::new(&base, None)
        .complete(&bundle(), &GenerationParams::default())
        .await
        .unwrap_err();
    assert!(matches!(err, ProviderError::InvalidResponse(_)));
}

#[tokio::test]
async fn slow_endpoint_times_out() {
    let app = Router::new().route(
        "/v1/chat/completions",
        post(|| async {
            tokio::time::sleep(Duration::from_secs(5)).await;
            Json(json!({}))
        }),
    );
    let base = serve(app).await;
    let params = GenerationParams {
        request_timeout: Duration::from_millis(100),
        ..GenerationParams::default()
    };
    let err = RemoteProvider::new(&base, None)
        .complete(&bundle(), &params)
        .await
        .unwrap_err();
    assert_eq!(err, ProviderError::Timeout(Duration::from_millis(100)));
}
