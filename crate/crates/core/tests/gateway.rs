use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use hdlscale_core::gateway::http::ChatCompletionsProvider;
use hdlscale_core::gateway::{Gateway, GenerationRequest, ProviderProfile};
use hdlscale_core::types::GenerationParams;

#[derive(Clone, Copy)]
enum Script {
    Ok,
    /// 429 on the first call, success afterwards.
    RateLimitOnce,
    Always500,
    BadRequest,
}

struct Server {
    script: Script,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    bodies: std::sync::Mutex<Vec<Value>>,
    auth: std::sync::Mutex<Vec<Option<String>>>,
}

async fn handler(State(s): State<Arc<Server>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let call = s.calls.fetch_add(1, Ordering::SeqCst);
    let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    s.peak.fetch_max(now, Ordering::SeqCst);
    s.bodies.lock().unwrap().push(body);
    s.auth
        .lock()
        .unwrap()
        .push(headers.get("authorization").map(|v| v.to_str().unwrap().to_string()));
    tokio::time::sleep(Duration::from_millis(30)).await;
    s.in_flight.fetch_sub(1, Ordering::SeqCst);
    let ok = (
        StatusCode::OK,
        Json(json!({
            "choices": [{"message": {"role": "assistant", "content": "```verilog\nmodule m; endmodule\n```"}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 7},
        })),
    );
    match s.script {
        Script::Ok => ok,
        Script::RateLimitOnce if call == 0 => (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"}))),
        Script::RateLimitOnce => ok,
        Script::Always500 => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": "boom"}))),
        Script::BadRequest => (StatusCode::BAD_REQUEST, Json(json!({"error": "bad"}))),
    }
}

async fn serve(script: Script) -> (Arc<Server>, String) {
    let state = Arc::new(Server {
        script,
        calls: AtomicUsize::new(0),
        in_flight: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
        bodies: Default::default(),
        auth: Default::default(),
    });
    let app = Router::new().route("/v1/chat/completions", post(handler)).with_state(Arc::clone(&state));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (state, format!("http://{addr}/v1"))
}

fn profile(base_url: &str, max_retries: u32) -> ProviderProfile {
    let mut p = ProviderProfile::local("test");
    p.base_url = base_url.to_string();
    p.max_retries = max_retries;
    p.retry_base_delay_ms = 5;
    p.request_timeout_s = 5;
    p
}

fn gateway(p: &ProviderProfile, cap: usize) -> Arc<Gateway> {
    Arc::new(Gateway::new(Arc::new(ChatCompletionsProvider::new(p).unwrap()), p.retry_policy(), cap))
}

fn request(i: u32) -> GenerationRequest {
    let params = GenerationParams { model_id: "m".into(), temperature: 0.7, ..Default::default() };
    GenerationRequest::new("p", i, format!("prompt {i}"), params)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn in_flight_never_exceeds_cap() {
    let (server, url) = serve(Script::Ok).await;
    let cap = 4;
    let gw = gateway(&profile(&url, 0), cap);
    let mut rx = gw.generate_batch((0..24).map(request).collect());
    let mut seen = Vec::new();
    while let Some(r) = rx.recv().await {
        assert!(r.outcome.is_ok(), "{:?}", r.outcome);
        assert_eq!((r.usage.input_tokens, r.usage.output_tokens), (11, 7));
        seen.push(r.index);
    }
    seen.sort_unstable();
    assert_eq!(seen, (0..24).collect::<Vec<_>>());
    assert_eq!(server.calls.load(Ordering::SeqCst), 24);
    let peak = server.peak.load(Ordering::SeqCst);
    assert!(peak <= cap, "peak {peak} exceeds cap {cap}");
    assert!(peak >= 2, "requests never overlapped");
}

#[tokio::test]
async fn rate_limit_then_success_retries_once() {
    let (server, url) = serve(Script::RateLimitOnce).await;
    let r = gateway(&profile(&url, 3), 1).generate(&request(0)).await;
    assert!(r.outcome.is_ok());
    assert_eq!(r.attempts, 2);
    assert_eq!(server.calls.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn persistent_server_error_exhausts_retries() {
    let (server, url) = serve(Script::Always500).await;
    let max_retries = 3;
    let r = gateway(&profile(&url, max_retries), 1).generate(&request(0)).await;
    let err = r.outcome.unwrap_err();
    assert!(err.transient);
    assert_eq!(err.attempts, max_retries + 1);
    assert_eq!(r.attempts, max_retries + 1);
    assert_eq!(server.calls.load(Ordering::SeqCst), (max_retries + 1) as usize);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let (server, url) = serve(Script::BadRequest).await;
    let r = gateway(&profile(&url, 3), 1).generate(&request(0)).await;
    let err = r.outcome.unwrap_err();
    assert!(!err.transient);
    assert_eq!(err.attempts, 1);
    assert_eq!(server.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn request_body_and_bearer_token() {
    let (server, url) = serve(Script::Ok).await;
    let var = "HDLSCALE_TEST_GATEWAY_TOKEN";
    std::env::set_var(var, "sekrit");
    let mut p = profile(&url, 0);
    p.auth_env_var = Some(var.into());
    p.extra_body = Some(json!({"seed": 9}));
    gateway(&p, 1).generate(&request(3)).await.outcome.unwrap();
    let body = server.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["model"], "m");
    assert_eq!(body["n"], 1);
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["seed"], 9);
    assert_eq!(body["messages"][0]["content"], "prompt 3");
    assert_eq!(server.auth.lock().unwrap()[0].as_deref(), Some("Bearer sekrit"));

    p.auth_env_var = Some("HDLSCALE_TEST_UNSET_TOKEN".into());
    assert!(ChatCompletionsProvider::new(&p).is_err());
}
