//! HTTP backend contract, exercised against a local stub endpoint:
//! request/response field mapping, bearer auth, retry-on-5xx with backoff,
//! and timeout classification.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::Ordering;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use coherent_core::backend::{
    BackendError, ChatMessage, CompletionParams, HttpBackend, HttpConfig, TextBackend,
};

#[derive(Clone)]
struct StubResponse {
    status: u16,
    body: String,
    delay: Duration,
}

impl StubResponse {
    fn ok(content: &str) -> Self {
        StubResponse {
            status: 200,
            body: format!(
                r#"{{"choices":[{{"message":{{"role":"assistant","content":"{content}"}}}}]}}"#
            ),
            delay: Duration::ZERO,
        }
    }

    fn status(status: u16) -> Self {
        StubResponse {
            status,
            body: r#"{"error":"stub"}"#.to_string(),
            delay: Duration::ZERO,
        }
    }
}

#[derive(Debug, Default, Clone)]
struct SeenRequest {
    path: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Minimal one-connection-at-a-time HTTP/1.1 stub. Scripted responses are
/// served in order; the last one repeats.
fn spawn_stub(responses: Vec<StubResponse>) -> (SocketAddr, Arc<Mutex<Vec<SeenRequest>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
    let addr = listener.local_addr().expect("stub addr");
    let seen: Arc<Mutex<Vec<SeenRequest>>> = Arc::new(Mutex::new(Vec::new()));
    let seen_clone = seen.clone();
    std::thread::spawn(move || {
        let mut served = 0usize;
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let mut reader = BufReader::new(stream);

            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            let path = request_line
                .split_whitespace()
                .nth(1)
                .unwrap_or("")
                .to_string();
            let mut authorization = None;
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_lowercase();
                if let Some(value) = lower.strip_prefix("authorization:") {
                    authorization = Some(value.trim().to_string());
                }
                if let Some(value) = lower.strip_prefix("content-length:") {
                    content_length = value.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; content_length];
            let _ = reader.read_exact(&mut body);
            seen_clone.lock().expect("seen lock").push(SeenRequest {
                path,
                authorization,
                body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
            });

            let response = responses
                .get(served.min(responses.len().saturating_sub(1)))
                .cloned()
                .unwrap_or(StubResponse::status(500));
            served += 1;
            if !response.delay.is_zero() {
                std::thread::sleep(response.delay);
            }
            let payload = format!(
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                response.status,
                response.body.len(),
                response.body
            );
            let _ = reader.get_mut().write_all(payload.as_bytes());
        }
    });
    (addr, seen)
}

fn config(addr: SocketAddr) -> HttpConfig {
    let mut config = HttpConfig::new(format!("http://{addr}"), "stub-model");
    config.api_key = Some("test-key-123".to_string());
    config.max_retries = 3;
    config.initial_backoff = Duration::from_millis(5);
    config.timeout = Duration::from_secs(5);
    config
}

fn messages() -> Vec<ChatMessage> {
    vec![
        ChatMessage::system("you are a stub exercise"),
        ChatMessage::user("say hi"),
    ]
}

#[test]
fn request_and_response_field_mapping() {
    let (addr, seen) = spawn_stub(vec![StubResponse::ok("hello from the stub")]);
    let backend = HttpBackend::new(config(addr));
    let params = CompletionParams {
        temperature: 0.25,
        max_tokens: None,
        seed: Some(7),
    };
    let reply = backend.complete(&messages(), &params).expect("completes");
    assert_eq!(reply, "hello from the stub");

    let seen = seen.lock().expect("seen lock");
    assert_eq!(seen.len(), 1);
    let request = &seen[0];
    assert_eq!(request.path, "/chat/completions");
    assert_eq!(request.authorization.as_deref(), Some("bearer test-key-123"));
    assert_eq!(request.body["model"], "stub-model");
    assert_eq!(request.body["temperature"], 0.25);
    assert_eq!(request.body["seed"], 7);
    assert_eq!(request.body["messages"][0]["role"], "system");
    assert_eq!(request.body["messages"][1]["content"], "say hi");
}

#[test]
fn retries_transient_failures_with_backoff() {
    let (addr, seen) = spawn_stub(vec![
        StubResponse::status(500),
        StubResponse::status(500),
        StubResponse::ok("recovered"),
    ]);
    let backend = HttpBackend::new(config(addr));
    let reply = backend
        .complete(&messages(), &CompletionParams::default())
        .expect("succeeds after retries");
    assert_eq!(reply, "recovered");
    assert_eq!(backend.telemetry().retries.load(Ordering::SeqCst), 2);
    assert_eq!(backend.telemetry().requests.load(Ordering::SeqCst), 3);
    assert_eq!(seen.lock().expect("seen lock").len(), 3);
}

#[test]
fn non_retryable_status_fails_immediately() {
    let (addr, seen) = spawn_stub(vec![StubResponse::status(400)]);
    let backend = HttpBackend::new(config(addr));
    let err = backend
        .complete(&messages(), &CompletionParams::default())
        .expect_err("400 is terminal");
    assert!(matches!(err, BackendError::Endpoint { status: 400, .. }), "{err:?}");
    assert_eq!(backend.telemetry().retries.load(Ordering::SeqCst), 0);
    assert_eq!(seen.lock().expect("seen lock").len(), 1);
}

#[test]
fn slow_endpoint_times_out() {
    let (addr, _seen) = spawn_stub(vec![StubResponse {
        status: 200,
        body: StubResponse::ok("too late").body,
        delay: Duration::from_millis(400),
    }]);
    let mut config = config(addr);
    config.timeout = Duration::from_millis(50);
    config.max_retries = 0;
    let backend = HttpBackend::new(config);
    let err = backend
        .complete(&messages(), &CompletionParams::default())
        .expect_err("times out");
    assert!(matches!(err, BackendError::Timeout(_)), "{err:?}");
}

#[test]
fn exhausted_retries_surface_the_last_error() {
    let (addr, _seen) = spawn_stub(vec![StubResponse::status(503)]);
    let mut config = config(addr);
    config.max_retries = 2;
    let backend = HttpBackend::new(config);
    let err = backend
        .complete(&messages(), &CompletionParams::default())
        .expect_err("stays down");
    assert!(matches!(err, BackendError::Endpoint { status: 503, .. }), "{err:?}");
    assert_eq!(backend.telemetry().requests.load(Ordering::SeqCst), 3);
}
