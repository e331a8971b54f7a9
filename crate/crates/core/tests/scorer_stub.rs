use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use grantscope::corpus::PermissionRecord;
use grantscope::scorer::{
    score_batch, score_permission, BatchOptions, HttpChatEndpoint, PromptVersion, RiskCache,
    SamplingParams, ScorerError, ScoringJob,
};
use serde_json::{json, Value};

/// Chat-completions stub: replies from `script` in order, then repeats the last.
fn stub(script: Vec<&'static str>) -> (String, Arc<AtomicUsize>, Arc<std::sync::Mutex<Vec<Value>>>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", server.server_addr().to_ip().unwrap());
    let calls = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(std::sync::Mutex::new(Vec::new()));
    let (c, b) = (calls.clone(), bodies.clone());
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let n = c.fetch_add(1, Ordering::SeqCst);
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            b.lock().unwrap().push(serde_json::from_str(&body).unwrap());
            let content = script[n.min(script.len() - 1)];
            let reply = json!({"choices": [{"message": {"role": "assistant", "content": content}}]});
            let _ = req.respond(tiny_http::Response::from_string(reply.to_string()));
        }
    });
    (url, calls, bodies)
}

fn rec(name: &str) -> PermissionRecord {
    let mut r = PermissionRecord::new(name);
    r.application_guid = Some("810c84a8-4a9e-49e6-bf7d-12d183f40d01".into());
    r
}

#[test]
fn http_endpoint_sends_deterministic_requests() {
    let (url, calls, bodies) = stub(vec![r#"{"risk_score": 4, "reasoning": "reads every mailbox"}"#]);
    let ep = HttpChatEndpoint::new(&url, Some("k".into()), SamplingParams::default()).unwrap();
    let cache = RiskCache::open_in_memory().unwrap();
    let job = ScoringJob::new("stub-model", PromptVersion::V0);
    let entry = score_permission(&rec("Mail.Read"), &job, &ep, &cache).unwrap();
    assert_eq!(entry.risk_score, 4);
    assert!(entry.created_at.is_some());
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    let body = &bodies.lock().unwrap()[0];
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["temperature"], 0.0);
    assert!(body["max_tokens"].as_u64().is_some());
    assert!(body["messages"][0]["content"].as_str().unwrap().ends_with('}'));
}

#[test]
fn http_garbage_three_times_is_discarded() {
    let (url, calls, _) = stub(vec!["I'd rather not."]);
    let ep = HttpChatEndpoint::new(&url, None, SamplingParams::default()).unwrap();
    let cache = RiskCache::open_in_memory().unwrap();
    let job = ScoringJob::new("m", PromptVersion::V0);
    let err = score_permission(&rec("Odd.Perm"), &job, &ep, &cache).unwrap_err();
    assert!(matches!(err, ScorerError::ScoringFailed { attempts: 3, .. }));
    assert_eq!(calls.load(Ordering::SeqCst), 3);
    assert_eq!(cache.skips("m").unwrap().len(), 1);
}

#[test]
fn http_batch_converges() {
    let (url, calls, _) = stub(vec![r#"{"risk_score": 2, "reasoning": "narrow"}"#]);
    let ep = HttpChatEndpoint::new(&url, None, SamplingParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = RiskCache::open(&dir.path().join("cache.db")).unwrap();
    let job = ScoringJob::new("m", PromptVersion::V1);
    let records: Vec<_> = ["A.Read", "B.Read", "C.Read", "D.Read"].map(rec).to_vec();
    let first = score_batch(&records, &job, &ep, &cache, &BatchOptions::default()).unwrap();
    assert_eq!(first.scored, 4);
    let before = calls.load(Ordering::SeqCst);
    let second = score_batch(&records, &job, &ep, &cache, &BatchOptions::default()).unwrap();
    assert_eq!(second.endpoint_calls, 0);
    assert_eq!(calls.load(Ordering::SeqCst), before);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let ep = HttpChatEndpoint::new("http://127.0.0.1:9", None, SamplingParams::default()).unwrap();
    let cache = RiskCache::open_in_memory().unwrap();
    let err = score_permission(&rec("A.Read"), &ScoringJob::new("m", PromptVersion::V0), &ep, &cache).unwrap_err();
    assert!(matches!(err, ScorerError::Transport(_)));
}
