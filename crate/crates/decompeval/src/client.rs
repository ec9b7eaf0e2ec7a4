//! HTTP client for a chat-completion style generation endpoint.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use decompeval_core::inference::{DecodingPolicy, Hypothesis, PolicyError, ReasoningMarkers};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full URL of the completion route.
    pub url: String,
    pub model: String,
    /// Environment variable holding the bearer token. No header is sent
    /// when unset.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Pacing for request starts; unlimited when absent.
    #[serde(default)]
    pub requests_per_second: Option<f64>,
}

fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            model: model.into(),
            api_key_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            requests_per_second: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("endpoint rejected credentials (HTTP {status}): {excerpt}")]
    Auth { status: u16, excerpt: String },
    #[error("endpoint returned HTTP {status}: {excerpt}")]
    Protocol { status: u16, excerpt: String },
    #[error("malformed response: field `{field}` {problem}")]
    Malformed { field: String, problem: String },
    #[error("giving up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("request rate must be positive, got {0}")]
    BadRate(f64),
    #[error("could not build a worker pool: {0}")]
    Pool(String),
    #[error("{item_id} attempt {attempt}: {source}")]
    Item {
        item_id: String,
        attempt: u32,
        #[source]
        source: Box<ClientError>,
    },
}

/// Raw completion text plus whether beam search had to be dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub raw: String,
    pub beam_fallback: bool,
}

/// Token bucket: capacity `burst`, refilled at `rate` per second.
#[derive(Debug)]
struct Pacer {
    rate: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl Pacer {
    fn new(rate: f64, burst: usize) -> Self {
        let burst = burst.max(1) as f64;
        Pacer { rate, burst, state: Mutex::new((burst, Instant::now())) }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut s = self.state.lock().expect("pacer lock");
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.rate).min(self.burst);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / self.rate
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug)]
pub struct Client {
    endpoint: EndpointConfig,
    agent: ureq::Agent,
    token: Option<String>,
    pacer: Option<Pacer>,
}

enum Failure {
    Transient(String),
    BeamRejected,
    Terminal(ClientError),
}

impl Client {
    /// `burst` bounds how many requests may start back to back; use the
    /// number of workers.
    pub fn new(endpoint: EndpointConfig, burst: usize) -> Result<Self, ClientError> {
        let token = match &endpoint.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .ok()
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| ClientError::MissingCredential(var.clone()))?,
            ),
            None => None,
        };
        let pacer = match endpoint.requests_per_second {
            Some(r) if r > 0.0 && r.is_finite() => Some(Pacer::new(r, burst)),
            Some(r) => return Err(ClientError::BadRate(r)),
            None => None,
        };
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(endpoint.timeout_secs.max(1))).build();
        Ok(Client { endpoint, agent, token, pacer })
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    /// Request body for one completion.
    pub fn request_body(&self, prompt: &str, policy: &DecodingPolicy, with_beam: bool, seed: Option<u64>) -> Value {
        let mut body = json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": policy.temperature,
            "top_p": policy.top_p,
            "max_tokens": policy.max_tokens,
        });
        if with_beam && policy.beam > 1 {
            body["beam_width"] = json!(policy.beam);
        }
        if let Some(seed) = seed {
            body["seed"] = json!(seed);
        }
        body
    }

    /// One completion. Beam widths the endpoint refuses are replaced by
    /// plain sampling under `fallback_seed`.
    pub fn generate(
        &self,
        prompt: &str,
        policy: &DecodingPolicy,
        fallback_seed: u64,
    ) -> Result<Generation, ClientError> {
        policy.validate()?;
        match self.with_retries(&self.request_body(prompt, policy, true, policy.seed)) {
            Ok(raw) => Ok(Generation { raw, beam_fallback: false }),
            Err(Failure::BeamRejected) if policy.beam > 1 => {
                let body = self.request_body(prompt, policy, false, Some(fallback_seed));
                match self.with_retries(&body) {
                    Ok(raw) => Ok(Generation { raw, beam_fallback: true }),
                    Err(f) => Err(self.failure_error(f)),
                }
            }
            Err(f) => Err(self.failure_error(f)),
        }
    }

    fn failure_error(&self, f: Failure) -> ClientError {
        match f {
            Failure::Terminal(e) => e,
            Failure::Transient(last) => ClientError::RetriesExhausted { attempts: self.endpoint.max_retries + 1, last },
            Failure::BeamRejected => ClientError::Protocol { status: 400, excerpt: "beam search rejected".into() },
        }
    }

    fn with_retries(&self, body: &Value) -> Result<String, Failure> {
        let mut attempt = 0;
        loop {
            match self.send(body) {
                Err(Failure::Transient(_)) if attempt < self.endpoint.max_retries => {
                    let delay = self.endpoint.backoff_ms.saturating_mul(1 << attempt.min(16));
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn send(&self, body: &Value) -> Result<String, Failure> {
        if let Some(p) = &self.pacer {
            p.acquire();
        }
        let mut req = self.agent.post(&self.endpoint.url).set("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        match req.send_json(body) {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| Failure::Transient(format!("reading body: {e}")))?;
                parse_completion(&text).map_err(Failure::Terminal)
            }
            Err(ureq::Error::Status(status, resp)) => {
                let excerpt = excerpt(&resp.into_string().unwrap_or_default());
                Err(match status {
                    401 | 403 => Failure::Terminal(ClientError::Auth { status, excerpt }),
                    429 | 500..=599 => Failure::Transient(format!("HTTP {status}: {excerpt}")),
                    400 | 422 if body.get("beam_width").is_some() && excerpt.contains("beam") => Failure::BeamRejected,
                    _ => Failure::Terminal(ClientError::Protocol { status, excerpt }),
                })
            }
            Err(ureq::Error::Transport(t)) => Err(Failure::Transient(t.to_string())),
        }
    }
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(300).collect();
    if s.len() < body.len() {
        s.push('…');
    }
    s
}

/// Pulls `choices[0].message.content` out of a response body.
pub fn parse_completion(body: &str) -> Result<String, ClientError> {
    let malformed =
        |field: &str, problem: &str| ClientError::Malformed { field: field.into(), problem: problem.into() };
    let v: Value = serde_json::from_str(body).map_err(|e| malformed("<body>", &format!("is not JSON: {e}")))?;
    let choices = v.get("choices").ok_or_else(|| malformed("choices", "is missing"))?;
    let first = choices
        .as_array()
        .ok_or_else(|| malformed("choices", "is not an array"))?
        .first()
        .ok_or_else(|| malformed("choices", "is empty"))?;
    let message = first.get("message").ok_or_else(|| malformed("choices[0].message", "is missing"))?;
    match message.get("content") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(malformed("choices[0].message.content", "is not a string")),
        None => Err(malformed("choices[0].message.content", "is missing")),
    }
}

/// One generation job.
#[derive(Debug, Clone, PartialEq)]
pub struct GenRequest {
    pub item_id: String,
    pub attempt_index: u32,
    pub prompt: String,
    pub policy: DecodingPolicy,
    pub fallback_seed: u64,
}

/// Runs every request on at most `jobs` concurrent connections. Output is
/// ordered by item id, then attempt index.
pub fn generate_all(
    client: &Client,
    requests: &[GenRequest],
    jobs: usize,
    markers: &ReasoningMarkers,
) -> Result<Vec<Hypothesis>, ClientError> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ClientError::Pool(e.to_string()))?;
    let mut out: Vec<Hypothesis> = pool.install(|| {
        requests
            .par_iter()
            .map(|r| {
                let g = client.generate(&r.prompt, &r.policy, r.fallback_seed).map_err(|e| ClientError::Item {
                    item_id: r.item_id.clone(),
                    attempt: r.attempt_index,
                    source: Box::new(e),
                })?;
                let mut policy = r.policy;
                if g.beam_fallback {
                    policy.seed = Some(r.fallback_seed);
                }
                let mut h = Hypothesis::new(&r.item_id, r.attempt_index, policy, g.raw, markers);
                h.beam_fallback = g.beam_fallback;
                Ok(h)
            })
            .collect::<Result<_, ClientError>>()
    })?;
    out.sort_by(|a, b| (&a.item_id, a.attempt_index).cmp(&(&b.item_id, b.attempt_index)));
    Ok(out)
}

#[derive(Debug, Error)]
pub enum HypothesisFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Invalid { path: PathBuf, line: usize, message: String },
}

pub fn write_hypotheses(path: &Path, hypotheses: &[Hypothesis]) -> Result<(), HypothesisFileError> {
    let io = |source| HypothesisFileError::Io { path: path.to_owned(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    for h in hypotheses {
        writeln!(f, "{}", serde_json::to_string(h).expect("hypotheses serialize")).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Reads a hypothesis file, rejecting lines whose `code` is not the
/// extraction of their `raw` text.
pub fn read_hypotheses(path: &Path, markers: &ReasoningMarkers) -> Result<Vec<Hypothesis>, HypothesisFileError> {
    let io = |source| HypothesisFileError::Io { path: path.to_owned(), source };
    let f = fs::File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| HypothesisFileError::Invalid { path: path.to_owned(), line: i + 1, message };
        let h: Hypothesis = serde_json::from_str(&line).map_err(|e| invalid(e.to_string()))?;
        if !h.is_consistent(markers) {
            return Err(invalid(format!(
                "code of {} attempt {} does not match its raw output",
                h.item_id, h.attempt_index
            )));
        }
        out.push(h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_parsing_names_the_field() {
        assert_eq!(parse_completion(r#"{"choices":[{"message":{"content":"x"}}]}"#).unwrap(), "x");
        for (body, field) in [
            ("{}", "`choices`"),
            (r#"{"choices":[]}"#, "`choices`"),
            (r#"{"choices":[{}]}"#, "`choices[0].message`"),
            (r#"{"choices":[{"message":{"content":3}}]}"#, "`choices[0].message.content`"),
            ("nope", "`<body>`"),
        ] {
            let e = parse_completion(body).unwrap_err().to_string();
            assert!(e.contains(field), "{body}: {e}");
        }
    }

    #[test]
    fn body_carries_policy() {
        let c = Client::new(EndpointConfig::new("http://127.0.0.1:9/v1", "m"), 1).unwrap();
        let b = c.request_body("p", &DecodingPolicy::parity().with_beam(2), true, Some(7));
        assert_eq!(b["temperature"], json!(0.2));
        assert_eq!(b["top_p"], json!(0.99));
        assert_eq!(b["beam_width"], json!(2));
        assert_eq!(b["seed"], json!(7));
        let b = c.request_body("p", &DecodingPolicy::parity(), true, None);
        assert!(b.get("beam_width").is_none() && b.get("seed").is_none());
    }

    #[test]
    fn missing_credential_is_reported() {
        let mut e = EndpointConfig::new("http://x", "m");
        e.api_key_env = Some("DECOMPEVAL_TEST_UNSET_KEY_VAR".into());
        assert!(matches!(Client::new(e, 1), Err(ClientError::MissingCredential(_))));
    }

    #[test]
    fn pacer_limits_rate() {
        let p = Pacer::new(50.0, 1);
        let t = Instant::now();
        for _ in 0..6 {
            p.acquire();
        }
        assert!(t.elapsed() >= Duration::from_millis(80));
    }

    #[test]
    fn hypothesis_files_revalidate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.jsonl");
        let m = ReasoningMarkers::default();
        let h =
            Hypothesis::new("a", 0, DecodingPolicy::parity(), "<think>x</think>```dart\nint f() => 1;\n```".into(), &m);
        write_hypotheses(&p, std::slice::from_ref(&h)).unwrap();
        assert_eq!(read_hypotheses(&p, &m).unwrap(), vec![h.clone()]);
        let mut bad = h;
        bad.code = "tampered".into();
        write_hypotheses(&p, &[bad]).unwrap();
        assert!(read_hypotheses(&p, &m).unwrap_err().to_string().contains(":1:"));
    }
}
