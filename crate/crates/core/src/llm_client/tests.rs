use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use super::*;

/// Serves one canned HTTP response per connection, in order, and records
/// each request body.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut headers = String::new();
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock()
                .unwrap()
                .push(format!("{headers}\n{}", String::from_utf8_lossy(&buf)));
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (url, seen)
}

fn chat_body(content: &str, finish: &str) -> String {
    serde_json::json!({
        "model": "deepseek-coder",
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": finish}]
    })
    .to_string()
}

fn live_config(url: &str, env_var: &str) -> LlmConfig {
    LlmConfig {
        endpoint_url: url.to_string(),
        api_key_env_var: env_var.to_string(),
        request_timeout_s: 5.0,
        max_retries: 2,
        retry_base_delay_s: 0.01,
        backend: Backend::Live,
        ..LlmConfig::default()
    }
}

#[test]
fn default_model_name() {
    assert_eq!(LlmConfig::default().model_name, "deepseek-coder");
}

#[test]
fn canned_sequence_then_error() {
    let client = LlmClient::new(LlmConfig {
        backend: Backend::Canned {
            responses: vec!["r1".into(), "r2".into()],
        },
        ..LlmConfig::default()
    })
    .unwrap();
    assert_eq!(client.complete("p", 0.2).unwrap().text, "r1");
    let second = client.complete("p", 0.2).unwrap();
    assert_eq!(second.text, "r2");
    assert_eq!(second.prompt_hash, request_hash("p", 0.2, "deepseek-coder"));
    assert!(matches!(client.complete("p", 0.2), Err(LlmError::CannedExhausted(2))));
    assert_eq!(client.calls(), 3);
}

#[test]
fn request_hash_covers_every_input() {
    let base = request_hash("p", 0.2, "m");
    assert_eq!(base, request_hash("p", 0.2, "m"));
    assert_ne!(base, request_hash("q", 0.2, "m"));
    assert_ne!(base, request_hash("p", 0.3, "m"));
    assert_ne!(base, request_hash("p", 0.2, "n"));
}

#[test]
fn replay_hits_are_stable_and_misses_name_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let hash = request_hash("prompt", 0.7, "deepseek-coder");
    write_recording(
        dir.path(),
        &Recording {
            prompt_hash: hash.clone(),
            model_name: "deepseek-coder".into(),
            temperature: 0.7,
            responses: vec![RecordedText {
                text: "```\ncode\n```".into(),
                finish_reason: FinishReason::Stop,
            }],
        },
    )
    .unwrap();
    let client = LlmClient::new(LlmConfig {
        backend: Backend::Replay {
            dir: dir.path().to_owned(),
        },
        ..LlmConfig::default()
    })
    .unwrap();
    let a = client.complete("prompt", 0.7).unwrap();
    let b = client.complete("prompt", 0.7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.prompt_hash, hash);
    let missing = request_hash("other", 0.7, "deepseek-coder");
    match client.complete("other", 0.7) {
        Err(LlmError::ReplayMiss(h)) => assert_eq!(h, missing),
        other => panic!("expected a replay miss, got {other:?}"),
    }
}

#[test]
fn missing_key_is_a_config_error() {
    let cfg = live_config("http://127.0.0.1:9/", "SOLSEARCH_TEST_UNSET_KEY");
    assert!(matches!(LlmClient::new(cfg), Err(LlmError::MissingApiKey(v)) if v == "SOLSEARCH_TEST_UNSET_KEY"));
    let replay = LlmConfig {
        backend: Backend::Replay {
            dir: "/nonexistent/recordings".into(),
        },
        ..LlmConfig::default()
    };
    assert!(matches!(LlmClient::new(replay), Err(LlmError::MissingDir(_))));
}

#[test]
fn live_request_shape_and_retry_on_server_error() {
    std::env::set_var("SOLSEARCH_TEST_KEY_LIVE", "sk-live-test");
    let (url, seen) = serve(vec![
        (503, "{}".into()),
        (200, chat_body("```rust\nfn f() {}\n```", "stop")),
    ]);
    let client = LlmClient::new(live_config(&url, "SOLSEARCH_TEST_KEY_LIVE")).unwrap();
    let resp = client.complete("optimize it", 0.8).unwrap();
    assert_eq!(resp.text, "```rust\nfn f() {}\n```");
    assert_eq!(resp.finish_reason, FinishReason::Stop);
    let requests = seen.lock().unwrap();
    assert_eq!(requests.len(), 2);
    let last = &requests[1];
    assert!(last.to_ascii_lowercase().contains("authorization: bearer sk-live-test"));
    let body: serde_json::Value = serde_json::from_str(last.split("\n\n").last().unwrap()).unwrap();
    assert_eq!(body["messages"][1]["content"], "optimize it");
    assert_eq!(body["messages"][0]["content"], PREAMBLE);
    assert_eq!(body["temperature"], 0.8);
    assert_eq!(body["model"], "deepseek-coder");
}

#[test]
fn client_errors_are_not_retried_and_retries_run_out() {
    std::env::set_var("SOLSEARCH_TEST_KEY_ERR", "sk-err");
    let (url, seen) = serve(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let client = LlmClient::new(live_config(&url, "SOLSEARCH_TEST_KEY_ERR")).unwrap();
    assert!(matches!(
        client.complete("p", 0.1),
        Err(LlmError::Rejected { status: 401, .. })
    ));
    assert_eq!(seen.lock().unwrap().len(), 1);

    let (url, _) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let client = LlmClient::new(live_config(&url, "SOLSEARCH_TEST_KEY_ERR")).unwrap();
    assert!(matches!(
        client.complete("p", 0.1),
        Err(LlmError::RetriesExhausted { attempts: 3, .. })
    ));
}

#[test]
fn record_mode_persists_without_the_key() {
    std::env::set_var("SOLSEARCH_TEST_KEY_REC", "sk-secret-record");
    let (url, _) = serve(vec![(200, chat_body("partial", "length"))]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = LlmConfig {
        backend: Backend::Record {
            dir: dir.path().to_owned(),
        },
        ..live_config(&url, "SOLSEARCH_TEST_KEY_REC")
    };
    let client = LlmClient::new(cfg).unwrap();
    let resp = client.complete("p", 1.0).unwrap();
    assert_eq!(resp.finish_reason, FinishReason::Length);
    let rec = read_recording(dir.path(), &resp.prompt_hash).unwrap().unwrap();
    assert_eq!(rec.responses[0].text, "partial");
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(!text.contains("sk-secret-record"));
    }
    // The recording replays without the network.
    let replay = LlmClient::new(LlmConfig {
        backend: Backend::Replay {
            dir: dir.path().to_owned(),
        },
        ..LlmConfig::default()
    })
    .unwrap();
    assert_eq!(replay.complete("p", 1.0).unwrap().text, "partial");
}

#[test]
fn preloaded_responses_are_served_first() {
    let client = LlmClient::new(LlmConfig {
        backend: Backend::Canned {
            responses: vec!["from backend".into()],
        },
        ..LlmConfig::default()
    })
    .unwrap();
    let hash = request_hash("p", 0.5, "deepseek-coder");
    client.preload(LlmResponse {
        text: "from ledger".into(),
        model_name: "deepseek-coder".into(),
        finish_reason: FinishReason::Stop,
        prompt_hash: hash,
    });
    assert_eq!(client.complete("p", 0.5).unwrap().text, "from ledger");
    assert_eq!(client.calls(), 0);
    assert_eq!(client.complete("p", 0.5).unwrap().text, "from backend");
}

#[test]
fn chat_response_parsing() {
    assert!(parse_chat_response("{}", "m", "h").is_err());
    assert!(parse_chat_response("not json", "m", "h").is_err());
    let r = parse_chat_response(&chat_body("x", "content_filter"), "m", "h").unwrap();
    assert_eq!(r.finish_reason, FinishReason::Error);
}

#[test]
fn repeated_requests_replay_in_recorded_order() {
    let canned = LlmClient::new(LlmConfig {
        backend: Backend::Canned {
            responses: vec!["a".into(), "b".into()],
        },
        ..LlmConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let canned = canned.with_mirror(dir.path()).unwrap();
    canned.complete("same", 0.2).unwrap();
    canned.complete("same", 0.2).unwrap();
    let replay = LlmClient::new(LlmConfig {
        backend: Backend::Replay {
            dir: dir.path().to_owned(),
        },
        ..LlmConfig::default()
    })
    .unwrap();
    let got: Vec<String> = (0..3).map(|_| replay.complete("same", 0.2).unwrap().text).collect();
    assert_eq!(got, ["a", "b", "b"]);
}
