use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;

use coevo_core::grammar::parse_grammar;
use coevo_core::llm::{
    build_prompt, run_once, ExtractContext, MockProvider, PromptBundle, ProviderConfig, ProviderError, RunFailure,
};

/// Serves one canned HTTP response and returns the request it received.
fn serve_once(status: &str, body: &str) -> (String, thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let response = format!(
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let handle = thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut request = Vec::new();
        let mut buf = [0u8; 4096];
        loop {
            let n = stream.read(&mut buf).unwrap();
            request.extend_from_slice(&buf[..n]);
            let text = String::from_utf8_lossy(&request);
            if let Some(head_end) = text.find("\r\n\r\n") {
                let length = text[..head_end]
                    .lines()
                    .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                    .unwrap_or(0);
                if request.len() >= head_end + 4 + length {
                    break;
                }
            }
            if n == 0 {
                break;
            }
        }
        stream.write_all(response.as_bytes()).unwrap();
        String::from_utf8(request).unwrap()
    });
    (url, handle)
}

#[test]
fn http_success_returns_first_message() {
    std::env::set_var("COEVO_TEST_KEY_OK", "secret-token");
    let (url, server) = serve_once("200 OK", r#"{"choices":[{"message":{"role":"assistant","content":"datatype String;"}}]}"#);
    let provider = ProviderConfig::http(url, "some-model", "COEVO_TEST_KEY_OK").build().unwrap();
    assert_eq!(provider.complete("hello").unwrap(), "datatype String;");
    let request = server.join().unwrap();
    assert!(request.starts_with("POST /v1/chat/completions"));
    assert!(request.to_ascii_lowercase().contains("authorization: bearer secret-token"));
    let body: serde_json::Value = serde_json::from_str(&request[request.find("\r\n\r\n").unwrap() + 4..]).unwrap();
    assert_eq!(body["model"], "some-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello");
}

#[test]
fn http_rate_limit_is_provider_error() {
    std::env::set_var("COEVO_TEST_KEY_429", "k");
    let (url, server) = serve_once("429 Too Many Requests", r#"{"error":"slow down"}"#);
    let provider = ProviderConfig::http(url, "m", "COEVO_TEST_KEY_429").build().unwrap();
    let err = provider.complete("p").unwrap_err();
    assert!(matches!(err, ProviderError::Status { status: 429, .. }));
    assert!(err.to_string().starts_with("429 "));
    server.join().unwrap();
}

#[test]
fn http_timeout() {
    std::env::set_var("COEVO_TEST_KEY_TIMEOUT", "k");
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let hold = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        thread::sleep(std::time::Duration::from_secs(2));
        drop(stream);
    });
    let mut config = ProviderConfig::http(url, "m", "COEVO_TEST_KEY_TIMEOUT");
    config.timeout_secs = 1;
    assert_eq!(config.build().unwrap().complete("p"), Err(ProviderError::Timeout));
    hold.join().unwrap();
}

#[test]
fn mock_script_directory_in_order() {
    let dir = std::env::temp_dir().join(format!("coevo-mock-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("run-02.txt"), "second").unwrap();
    std::fs::write(dir.join("run-01.txt"), "first").unwrap();
    let provider = ProviderConfig::mock(&dir).build().unwrap();
    let got: Vec<_> = (0..3).map(|_| provider.complete("p").unwrap()).collect();
    assert_eq!(got, ["first", "second", "first"]);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn run_record_exactly_one_outcome() {
    let grammar = parse_grammar("M: (xs+=X)*; X: 'x' name=ID;").unwrap();
    let original = "x a\n";
    let context = ExtractContext { original, grammar: &grammar };
    let prompt = build_prompt(&PromptBundle::new("G1", "G2", original)).unwrap();
    let mock = MockProvider::new(vec!["```\nx a\n```".into(), "Just rename things.".into()]);
    let ok = run_once(&mock, &prompt, &context, 1);
    assert_eq!(ok.extracted.as_deref(), Some("x a\n"));
    assert!(ok.failure.is_none());
    let prose = run_once(&mock, &prompt, &context, 2);
    assert_eq!(prose.extracted, None);
    assert_eq!(prose.failure, Some(RunFailure::NoInstanceFound));
}
