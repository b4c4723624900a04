//! The HTTP backend against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use factorcast::gateway::{BackendConfig, Gateway, GatewayError, GatewayOptions, GenRequest};

/// Serves the given `(status, body)` replies in order and records request bodies.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0usize;
            let mut head = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock()
                .unwrap()
                .push(format!("{head}\n{}", String::from_utf8(buf).unwrap()));
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn request() -> GenRequest {
    GenRequest {
        system_text: "be brief".into(),
        user_text: "score these".into(),
        temperature: 0.2,
        max_tokens: 64,
        trial_index: 0,
    }
}

fn config(url: &str, key_var: &str) -> BackendConfig {
    let mut cfg = BackendConfig::remote(url, "test-model", key_var);
    cfg.retry_base_ms = 1;
    cfg
}

#[test]
fn retries_server_errors_then_caches() {
    std::env::set_var("FACTORCAST_TEST_KEY_A", "secret-a");
    let (url, seen) = serve(vec![(503, "busy".into()), (200, completion("hello"))]);
    let cache = tempfile::tempdir().unwrap();
    let gw = Gateway::new(
        config(&url, "FACTORCAST_TEST_KEY_A"),
        Some(cache.path()),
        GatewayOptions::default(),
    )
    .unwrap();
    let r = gw.generate(&request()).unwrap();
    assert_eq!((r.text.as_str(), r.cached), ("hello", false));
    let again = gw.generate(&request()).unwrap();
    assert!(again.cached);

    let log = seen.lock().unwrap();
    assert_eq!(log.len(), 2);
    assert!(log[0].contains("POST /v1/chat/completions"));
    assert!(log[0].to_ascii_lowercase().contains("authorization: bearer secret-a"));
    let body: serde_json::Value = serde_json::from_str(log[1].split("\n\n").last().unwrap()).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "score these");
    assert_eq!(body["max_tokens"], 64);
}

#[test]
fn client_errors_are_not_retried() {
    std::env::set_var("FACTORCAST_TEST_KEY_B", "secret-b");
    let (url, seen) = serve(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let gw = Gateway::new(config(&url, "FACTORCAST_TEST_KEY_B"), None, GatewayOptions::default()).unwrap();
    let err = gw.generate(&request()).unwrap_err();
    assert!(
        matches!(err, GatewayError::BackendRejected { status: 401, .. }),
        "{err}"
    );
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn gives_up_after_max_attempts() {
    std::env::set_var("FACTORCAST_TEST_KEY_C", "secret-c");
    let (url, seen) = serve(vec![(500, "x".into()), (429, "slow down".into()), (502, "y".into())]);
    let gw = Gateway::new(config(&url, "FACTORCAST_TEST_KEY_C"), None, GatewayOptions::default()).unwrap();
    let err = gw.generate(&request()).unwrap_err();
    assert!(
        matches!(err, GatewayError::BackendRejected { status: 502, .. }),
        "{err}"
    );
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn empty_completion_is_an_error() {
    std::env::set_var("FACTORCAST_TEST_KEY_D", "secret-d");
    let (url, _) = serve(vec![(200, completion("  "))]);
    let cache = tempfile::tempdir().unwrap();
    let gw = Gateway::new(
        config(&url, "FACTORCAST_TEST_KEY_D"),
        Some(cache.path()),
        GatewayOptions::default(),
    )
    .unwrap();
    assert!(matches!(gw.generate(&request()), Err(GatewayError::EmptyResponse)));
}

#[test]
fn unreachable_backend() {
    std::env::set_var("FACTORCAST_TEST_KEY_E", "secret-e");
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let gw = Gateway::new(
        config(&format!("http://127.0.0.1:{port}"), "FACTORCAST_TEST_KEY_E"),
        None,
        GatewayOptions::default(),
    )
    .unwrap();
    assert!(matches!(
        gw.generate(&request()),
        Err(GatewayError::BackendUnreachable(_))
    ));
}
