use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Response(String),
    #[error("empty caption")]
    EmptyCaption,
}

/// Encoded media attached to a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaPart {
    pub mime: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRequest {
    pub system_prompt: String,
    /// Question text, including any retry prefix.
    pub prompt: String,
    pub media: Vec<MediaPart>,
}

impl CaptionRequest {
    /// Chat-completions body with one user message holding the text and
    /// the media as base64 data URLs.
    pub fn to_chat_body(&self, model: &str) -> Value {
        let text = if self.system_prompt.is_empty() {
            self.prompt.clone()
        } else {
            format!("{}\n\n{}", self.system_prompt, self.prompt)
        };
        let mut content = vec![json!({"type": "text", "text": text})];
        for m in &self.media {
            let url = format!("data:{};base64,{}", m.mime, STANDARD.encode(&m.bytes));
            content.push(json!({"type": "image_url", "image_url": {"url": url}}));
        }
        json!({
            "model": model,
            "messages": [{"role": "user", "content": content}],
        })
    }
}

/// Anything that turns a request into caption text.
pub trait CaptionClient: Send + Sync {
    fn caption(&self, request: &CaptionRequest) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpClientConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Extra attempts after a transport error, timeout, 429 or 5xx.
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for HttpClientConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "caption-model".into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retries: 2,
            backoff: Duration::from_millis(500),
        }
    }
}

impl HttpClientConfig {
    /// Defaults overridden by `CAPTION_ENDPOINT`, `CAPTION_MODEL` and
    /// `CAPTION_API_KEY` when set.
    pub fn from_env() -> Self {
        let mut c = Self::default();
        if let Ok(v) = std::env::var("CAPTION_ENDPOINT") {
            c.endpoint = v;
        }
        if let Ok(v) = std::env::var("CAPTION_MODEL") {
            c.model = v;
        }
        c.api_key = std::env::var("CAPTION_API_KEY").ok().filter(|k| !k.is_empty());
        c
    }
}

pub struct HttpCaptionClient {
    config: HttpClientConfig,
    agent: ureq::Agent,
}

impl HttpCaptionClient {
    pub fn new(config: HttpClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &HttpClientConfig {
        &self.config
    }

    fn attempt(&self, body: &Value) -> Result<String, ClientError> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ClientError::Timeout,
            other => ClientError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Status { status, body: text });
        }
        extract_caption(&text)
    }
}

/// Text of the first choice's message.
pub(crate) fn extract_caption(body: &str) -> Result<String, ClientError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ClientError::Response(e.to_string()))?;
    let content = &v["choices"][0]["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        // some servers return content parts
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => return Err(ClientError::Response("no choices[0].message.content".into())),
    };
    let text = text.trim().to_string();
    if text.is_empty() {
        Err(ClientError::EmptyCaption)
    } else {
        Ok(text)
    }
}

fn retryable(e: &ClientError) -> bool {
    match e {
        ClientError::Transport(_) | ClientError::Timeout => true,
        ClientError::Status { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl CaptionClient for HttpCaptionClient {
    fn caption(&self, request: &CaptionRequest) -> Result<String, ClientError> {
        let body = request.to_chat_body(&self.config.model);
        let mut delay = self.config.backoff;
        let mut tries = 0;
        loop {
            match self.attempt(&body) {
                Err(e) if retryable(&e) && tries < self.config.retries => {
                    tries += 1;
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                other => return other,
            }
        }
    }
}

/// One entry of a [`ScriptedClient`] schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedReply {
    Caption(String),
    Fail,
    Timeout,
    Empty,
}

/// Deterministic stand-in for a caption service. Call `k` (counting from
/// zero across all threads) answers with `schedule[k % schedule.len()]`.
pub struct ScriptedClient {
    schedule: Vec<ScriptedReply>,
    delay: Duration,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    log: Mutex<Vec<CaptionRequest>>,
}

impl ScriptedClient {
    pub fn new(schedule: Vec<ScriptedReply>) -> Self {
        assert!(!schedule.is_empty(), "schedule must not be empty");
        Self {
            schedule,
            delay: Duration::ZERO,
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn always(caption: &str) -> Self {
        Self::new(vec![ScriptedReply::Caption(caption.into())])
    }

    /// Fails calls 0, n, 2n, ... and answers `caption` otherwise.
    pub fn fail_every(n: usize, caption: &str) -> Self {
        assert!(n >= 1);
        let mut s = vec![ScriptedReply::Caption(caption.into()); n];
        s[0] = ScriptedReply::Fail;
        Self::new(s)
    }

    /// Sleep this long inside every call.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Highest number of calls observed running at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<CaptionRequest> {
        self.log.lock().expect("log lock").clone()
    }
}

impl CaptionClient for ScriptedClient {
    fn caption(&self, request: &CaptionRequest) -> Result<String, ClientError> {
        let k = self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.log.lock().expect("log lock").push(request.clone());
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        match &self.schedule[k % self.schedule.len()] {
            ScriptedReply::Caption(c) => Ok(c.clone()),
            ScriptedReply::Fail => Err(ClientError::Transport("scripted failure".into())),
            ScriptedReply::Timeout => Err(ClientError::Timeout),
            ScriptedReply::Empty => Ok(String::new()),
        }
    }
}
