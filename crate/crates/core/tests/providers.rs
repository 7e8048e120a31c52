use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use relpipe::corpus::{Language, Task};
use relpipe::providers::http::{HttpEmbedder, HttpEndpoints, HttpScorer, HttpTranslator, RetryPolicy};
use relpipe::providers::mock::MockEmbedder;
use relpipe::providers::{Embedder, ProviderError, RelevanceScorer, ScoreRequest, TranslationRequest, Translator};
use unicode_normalization::UnicodeNormalization;

// ---- independent re-implementation of the trigram-hash mock embedder ----

fn oracle_fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn oracle_embed(text: &str) -> Vec<f64> {
    let padded: Vec<char> = std::iter::once('\u{2402}')
        .chain(text.nfc().collect::<String>().to_lowercase().chars())
        .chain(std::iter::once('\u{2403}'))
        .collect();
    let mut v = vec![0.0f64; 64];
    for i in 0..padded.len() - 2 {
        let tri: String = padded[i..i + 3].iter().collect();
        v[(oracle_fnv(tri.as_bytes()) % 64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn mock_embedder_matches_reference_implementation() {
    let e = MockEmbedder::default();
    let out = e.embed(&["abc", "xyz"]).unwrap();
    let expected = oracle_cosine(&oracle_embed("abc"), &oracle_embed("xyz"));
    assert!((out[0].cosine(&out[1]) - expected).abs() < 1e-12);
    for text in ["Wireless Headphones", "Électronique > Audio", "무선 이어폰", "a"] {
        let got = e.embed_one(text).unwrap();
        for (g, w) in got.values().iter().zip(oracle_embed(text)) {
            assert!((g - w).abs() < 1e-12, "{text}");
        }
    }
}

#[test]
fn mock_embedder_thousand_rows_are_unit_length() {
    let texts: Vec<String> = (0..1000).map(|i| format!("entry number {i} > leaf {}", i * 7)).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    for v in MockEmbedder::default().embed(&refs).unwrap() {
        let norm = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-9);
    }
}

// ---- scripted HTTP server ----

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    headers: Vec<(String, String)>,
    body: String,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

fn read_request(stream: &mut TcpStream) -> Option<Seen> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        headers.push((k.trim().to_string(), v.trim().to_string()));
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Seen { path, headers, body: String::from_utf8_lossy(&body).into_owned() })
}

/// Serves `responses` in order, one per connection, and records requests.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    let handle = std::thread::spawn(move || {
        for (status, body) in responses {
            let (mut stream, _) = listener.accept().unwrap();
            if let Some(req) = read_request(&mut stream) {
                log.lock().unwrap().push(req);
            }
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (base, seen, handle)
}

fn endpoints() -> HttpEndpoints {
    let mut e = HttpEndpoints::new();
    e.retry = RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(5) };
    e.timeout = Duration::from_secs(5);
    e.token = Some("secret-token".into());
    e
}

fn lang(c: &str) -> Language {
    Language::new(c).unwrap()
}

fn score_request() -> ScoreRequest {
    ScoreRequest { task: Task::Qi, query: "red shoes".into(), candidate: "Red Shoe X1".into(), language: lang("en") }
}

#[test]
fn score_wire_format_and_auth() {
    let (base, seen, h) = serve(vec![(200, r#"{"logp_yes":-0.1,"logp_no":-2.5}"#.into())]);
    let mut e = endpoints();
    e.score = Some(format!("{base}/score"));
    let pair = HttpScorer::new(e).score(&score_request()).unwrap();
    h.join().unwrap();
    assert_eq!((pair.logp_yes, pair.logp_no), (-0.1, -2.5));
    let req = &seen.lock().unwrap()[0];
    assert_eq!(req.path, "/score");
    assert_eq!(req.header("authorization"), Some("Bearer secret-token"));
    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(
        body,
        serde_json::json!({"task":"qi","query":"red shoes","candidate":"Red Shoe X1","language":"en"})
    );
}

#[test]
fn transient_errors_are_retried_with_one_idempotency_key() {
    let (base, seen, h) = serve(vec![
        (503, "{}".into()),
        (429, "{}".into()),
        (200, r#"{"text":"kabellose Kopfhörer"}"#.into()),
    ]);
    let mut e = endpoints();
    e.translate = Some(format!("{base}/translate"));
    let out = HttpTranslator::new(e)
        .translate(&TranslationRequest::new("wireless headphones", lang("en"), lang("de")))
        .unwrap();
    h.join().unwrap();
    assert_eq!(out.text, "kabellose Kopfhörer");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    let keys: Vec<_> = seen.iter().map(|s| s.header("idempotency-key").unwrap().to_string()).collect();
    assert!(keys.iter().all(|k| k == &keys[0]));
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body, serde_json::json!({"text":"wireless headphones","source_lang":"en","target_lang":"de"}));
}

#[test]
fn client_errors_are_not_retried() {
    let (base, seen, h) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let mut e = endpoints();
    e.score = Some(format!("{base}/score"));
    let err = HttpScorer::new(e).score(&score_request()).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, ProviderError::Status { status: 400, .. }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn retries_exhausted_report_unreachable() {
    let (base, seen, h) = serve(vec![(500, "{}".into()), (502, "{}".into()), (503, "{}".into())]);
    let mut e = endpoints();
    e.score = Some(format!("{base}/score"));
    let err = HttpScorer::new(e).score(&score_request()).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, ProviderError::Unreachable { attempts: 3, .. }));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn closed_port_is_unreachable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut e = endpoints();
    e.score = Some(format!("http://127.0.0.1:{port}/score"));
    let err = HttpScorer::new(e).score(&score_request()).unwrap_err();
    assert!(matches!(err, ProviderError::Unreachable { attempts: 3, .. }), "{err:?}");
}

#[test]
fn malformed_and_non_finite_replies_are_errors() {
    let (base, _, h) = serve(vec![(200, "not json".into()), (200, r#"{"logp_yes":1e999,"logp_no":0}"#.into())]);
    let mut e = endpoints();
    e.score = Some(format!("{base}/score"));
    let scorer = HttpScorer::new(e);
    assert!(matches!(scorer.score(&score_request()), Err(ProviderError::InvalidResponse { .. })));
    let second = scorer.score(&score_request());
    h.join().unwrap();
    assert!(second.is_err());
}

#[test]
fn embed_batches_and_checks_shape() {
    let (base, seen, h) = serve(vec![
        (200, r#"{"vectors":[[3,4],[1,0]]}"#.into()),
        (200, r#"{"vectors":[[0,2]]}"#.into()),
    ]);
    let mut e = endpoints();
    e.embed = Some(format!("{base}/embed"));
    let out = HttpEmbedder::new(e, 2).embed(&["a", "b", "c"]).unwrap();
    h.join().unwrap();
    assert_eq!(out[0].values(), &[0.6, 0.8]);
    assert_eq!(out[2].values(), &[0.0, 1.0]);
    let bodies: Vec<String> = seen.lock().unwrap().iter().map(|s| s.body.clone()).collect();
    assert_eq!(bodies, [r#"{"texts":["a","b"]}"#, r#"{"texts":["c"]}"#]);

    let (base, _, h) = serve(vec![(200, r#"{"vectors":[[1,0],[1,0,0]]}"#.into())]);
    let mut e = endpoints();
    e.embed = Some(format!("{base}/embed"));
    let err = HttpEmbedder::new(e, 8).embed(&["a", "b"]).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, ProviderError::DimensionMismatch { .. }));
}
