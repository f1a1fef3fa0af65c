use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use socpath_core::llm::{
    BackendDescriptor, BackendError, BackendKind, CompletionBackend, CompletionRequest, HttpBackend,
};

struct Captured {
    auth: Option<String>,
    body: String,
}

/// Serves the scripted `(status, body)` responses, one per connection, and
/// records each request.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut auth = None;
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Captured {
                auth,
                body: String::from_utf8(buf).unwrap(),
            });
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (format!("http://{addr}/v1/chat/completions"), seen)
}

fn descriptor(endpoint: &str, var: &str) -> BackendDescriptor {
    BackendDescriptor {
        kind: BackendKind::Http,
        model_name: "test-model".into(),
        endpoint: Some(endpoint.into()),
        credentials_env_var: Some(var.into()),
        max_attempts: 3,
        initial_backoff_ms: 1,
        timeout_secs: 5,
        ..BackendDescriptor::default()
    }
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
        .to_string()
}

#[test]
fn success_sends_bearer_token_and_model() {
    std::env::set_var("SOCPATH_TEST_KEY_OK", "secret-1");
    let (url, seen) = serve(vec![(200, ok_body("T1; Baristas:35-3023.01; N; N"))]);
    let b = HttpBackend::new(&descriptor(&url, "SOCPATH_TEST_KEY_OK")).unwrap();
    let out = b
        .complete(&CompletionRequest::new("hello").unwrap())
        .unwrap();
    assert_eq!(out, "T1; Baristas:35-3023.01; N; N");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer secret-1"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
}

#[test]
fn retries_server_errors_then_succeeds() {
    std::env::set_var("SOCPATH_TEST_KEY_RETRY", "k");
    let (url, seen) = serve(vec![
        (503, "busy".into()),
        (429, "slow down".into()),
        (200, ok_body("done")),
    ]);
    let b = HttpBackend::new(&descriptor(&url, "SOCPATH_TEST_KEY_RETRY")).unwrap();
    assert_eq!(
        b.complete(&CompletionRequest::new("x").unwrap()).unwrap(),
        "done"
    );
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_max_attempts() {
    std::env::set_var("SOCPATH_TEST_KEY_EXHAUST", "k");
    let (url, _) = serve(vec![
        (500, "a".into()),
        (500, "b".into()),
        (500, "c".into()),
    ]);
    let b = HttpBackend::new(&descriptor(&url, "SOCPATH_TEST_KEY_EXHAUST")).unwrap();
    let err = b
        .complete(&CompletionRequest::new("x").unwrap())
        .unwrap_err();
    assert!(
        matches!(err, BackendError::RetriesExhausted { attempts: 3, .. }),
        "{err}"
    );
}

#[test]
fn auth_failure_is_not_retried() {
    std::env::set_var("SOCPATH_TEST_KEY_AUTH", "wrong");
    let (url, seen) = serve(vec![(401, "no".into()), (200, ok_body("unused"))]);
    let b = HttpBackend::new(&descriptor(&url, "SOCPATH_TEST_KEY_AUTH")).unwrap();
    let err = b
        .complete(&CompletionRequest::new("x").unwrap())
        .unwrap_err();
    assert!(matches!(err, BackendError::Auth(401)));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_reported() {
    std::env::set_var("SOCPATH_TEST_KEY_MALFORMED", "k");
    let (url, _) = serve(vec![(200, "{\"choices\": []}".into())]);
    let b = HttpBackend::new(&descriptor(&url, "SOCPATH_TEST_KEY_MALFORMED")).unwrap();
    assert!(matches!(
        b.complete(&CompletionRequest::new("x").unwrap()),
        Err(BackendError::Malformed(_))
    ));
}

#[test]
fn missing_credentials_fail_at_construction() {
    std::env::remove_var("SOCPATH_TEST_KEY_ABSENT");
    let err = HttpBackend::new(&descriptor(
        "http://127.0.0.1:9/",
        "SOCPATH_TEST_KEY_ABSENT",
    ))
    .err()
    .unwrap();
    assert!(matches!(err, BackendError::Config(m) if m.contains("SOCPATH_TEST_KEY_ABSENT")));
}
