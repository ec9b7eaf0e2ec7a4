//! Deterministic local completion endpoint for offline runs and tests.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use decompeval_core::inference::language_display_name;
use decompeval_core::FunctionRecord;
use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

/// What the stub answers with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubReply {
    /// The source of the record whose assembly appears in the prompt, in a
    /// language-tagged fence.
    EchoReference(Vec<FunctionRecord>),
    /// The same text for every request.
    Canned(String),
    /// A syntactically broken Dart snippet.
    Invalid,
    /// A 200 response whose body lacks the completion field.
    Malformed,
}

pub const INVALID_SNIPPET: &str = "```dart\nint broken(int a, {\n```";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubConfig {
    pub reply: StubReply,
    /// Answer the first n requests with HTTP 503.
    pub fail_first: usize,
    /// Refuse requests that ask for beam search.
    pub reject_beam: bool,
    /// Require this bearer token.
    pub api_key: Option<String>,
}

impl StubConfig {
    pub fn new(reply: StubReply) -> Self {
        StubConfig { reply, fail_first: 0, reject_beam: false, api_key: None }
    }
}

/// A running stub. Stops when dropped.
pub struct StubServer {
    addr: SocketAddr,
    server: Arc<Server>,
    handle: Option<JoinHandle<()>>,
    requests: Arc<Mutex<Vec<Value>>>,
}

impl StubServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves in the
    /// background.
    pub fn start(addr: &str, config: StubConfig) -> std::io::Result<Self> {
        let server = Arc::new(Server::http(addr).map_err(std::io::Error::other)?);
        let addr =
            server.server_addr().to_ip().ok_or_else(|| std::io::Error::other("stub bound to a non-IP address"))?;
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handle = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            thread::spawn(move || serve(&server, &config, &requests))
        };
        Ok(StubServer { addr, server, handle: Some(handle), requests })
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Bodies of every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().expect("request log").clone()
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(server: &Server, config: &StubConfig, log: &Mutex<Vec<Value>>) {
    let seen = AtomicUsize::new(0);
    let json_header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    for mut request in server.incoming_requests() {
        let mut body = String::new();
        let _ = request.as_reader().read_to_string(&mut body);
        let parsed: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
        log.lock().expect("request log").push(parsed.clone());
        let n = seen.fetch_add(1, Ordering::SeqCst);

        let authorized = match &config.api_key {
            None => true,
            Some(key) => request
                .headers()
                .iter()
                .any(|h| h.field.equiv("Authorization") && h.value.as_str() == format!("Bearer {key}")),
        };
        let (status, payload) = if !authorized {
            (401, json!({"error": {"message": "invalid api key"}}).to_string())
        } else if n < config.fail_first {
            (503, json!({"error": {"message": "temporarily unavailable"}}).to_string())
        } else if parsed.is_null() {
            (400, json!({"error": {"message": "body is not JSON"}}).to_string())
        } else if config.reject_beam && parsed.get("beam_width").is_some() {
            (400, json!({"error": {"message": "unsupported parameter: beam_width"}}).to_string())
        } else {
            (200, reply_for(&config.reply, &parsed))
        };
        let response = Response::from_string(payload).with_status_code(status).with_header(json_header.clone());
        let _ = request.respond(response);
    }
}

fn prompt_of(body: &Value) -> &str {
    body.pointer("/messages/0/content").and_then(Value::as_str).unwrap_or("")
}

fn completion(content: &str) -> String {
    json!({
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

fn reply_for(reply: &StubReply, body: &Value) -> String {
    match reply {
        StubReply::Canned(text) => completion(text),
        StubReply::Invalid => completion(INVALID_SNIPPET),
        StubReply::Malformed => json!({"object": "chat.completion", "choices": [{"index": 0}]}).to_string(),
        StubReply::EchoReference(records) => {
            let prompt = prompt_of(body);
            // Longest match, so a record whose assembly is a prefix of
            // another's cannot shadow it.
            let hit = records
                .iter()
                .filter(|r| !r.assembly.is_empty() && prompt.contains(&r.assembly))
                .max_by_key(|r| r.assembly.len());
            match hit {
                Some(r) => completion(&format!(
                    "```{}\n{}\n```",
                    language_display_name(r.language).to_lowercase(),
                    r.source.trim_end()
                )),
                None => completion("no matching record"),
            }
        }
    }
}
