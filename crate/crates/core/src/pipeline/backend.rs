//! LLM backends.
//!
//! `Echo` answers with the marked word (an identity normalizer for offline
//! runs), `Http` speaks the chat-completion protocol, and `Replay` serves
//! responses from a prompt cache only.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};

pub const ENV_API_BASE: &str = "LEXNORM_API_BASE";
pub const ENV_API_KEY: &str = "LEXNORM_API_KEY";
pub const ENV_MODEL: &str = "LEXNORM_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Echo,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmBackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
    /// USD per million input tokens.
    pub input_price: f64,
    /// USD per million output tokens.
    pub output_price: f64,
}

impl Default for LlmBackendConfig {
    fn default() -> Self {
        LlmBackendConfig {
            kind: BackendKind::Echo,
            endpoint: None,
            model_name: None,
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            temperature: 0.0,
            input_price: 2.50,
            output_price: 10.00,
        }
    }
}

impl LlmBackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind == BackendKind::Http && (self.endpoint.is_none() || self.model_name.is_none())
        {
            return Err(Error::Domain(format!(
                "the http backend needs an endpoint and a model name (--endpoint/{ENV_API_BASE}, --model/{ENV_MODEL})"
            )));
        }
        if !(self.input_price >= 0.0 && self.output_price >= 0.0) {
            return Err(Error::Domain("token prices must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub prompt_hash: &'a str,
    /// The marked word, unmarked.
    pub target: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Backend-reported usage, if any.
    pub usage: Option<Usage>,
    pub cached: bool,
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion>;
}

pub struct EchoBackend;

impl LlmBackend for EchoBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion> {
        Ok(Completion {
            text: request.target.to_string(),
            usage: None,
            cached: false,
        })
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    temperature: f64,
    max_retries: u32,
    requests: AtomicUsize,
}

impl HttpBackend {
    pub fn new(cfg: &LlmBackendConfig) -> Result<Self> {
        cfg.validate()?;
        let endpoint = cfg.endpoint.as_deref().unwrap_or_default();
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        Ok(HttpBackend {
            client,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model: cfg.model_name.clone().unwrap_or_default(),
            api_key: cfg.api_key.clone(),
            temperature: cfg.temperature,
            max_retries: cfg.max_retries,
            requests: AtomicUsize::new(0),
        })
    }

    /// Number of HTTP requests sent, retries included.
    pub fn requests_sent(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    fn attempt(
        &self,
        body: &serde_json::Value,
    ) -> std::result::Result<ChatResponse, (bool, String)> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retry = status.is_server_error() || status.as_u16() == 429;
            let text = resp.text().unwrap_or_default();
            return Err((retry, format!("HTTP {status}: {}", text.trim())));
        }
        resp.json::<ChatResponse>()
            .map_err(|e| (false, format!("malformed chat-completion response: {e}")))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl LlmBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<Completion> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": self.temperature,
        });
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(resp) => {
                    let text = resp
                        .choices
                        .into_iter()
                        .next()
                        .and_then(|c| c.message.content)
                        .unwrap_or_default();
                    return Ok(Completion {
                        text,
                        usage: resp.usage.map(|u| Usage {
                            input_tokens: u.prompt_tokens,
                            output_tokens: u.completion_tokens,
                        }),
                        cached: false,
                    });
                }
                Err((retry, message)) if retry && attempt < self.max_retries => {
                    attempt += 1;
                    let backoff = Duration::from_millis(200 * (1 << attempt.min(6)));
                    warn!(
                        "request for {} failed ({message}); retry {attempt} in {backoff:?}",
                        request.prompt_hash
                    );
                    thread::sleep(backoff);
                }
                Err((_, message)) => {
                    debug!(
                        "giving up on {} after {} attempts",
                        request.prompt_hash,
                        attempt + 1
                    );
                    return Err(Error::Backend(format!(
                        "{} after {} attempt(s): {message}",
                        self.url,
                        attempt + 1
                    )));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_returns_target() {
        let c = EchoBackend
            .complete(&CompletionRequest {
                prompt: "p",
                prompt_hash: "h",
                target: "u",
            })
            .unwrap();
        assert_eq!(c.text, "u");
        assert!(c.usage.is_none());
    }

    #[test]
    fn http_config_validation() {
        let mut cfg = LlmBackendConfig {
            kind: BackendKind::Http,
            ..LlmBackendConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.endpoint = Some("http://localhost:1".into());
        cfg.model_name = Some("m".into());
        assert!(cfg.validate().is_ok());
        cfg.input_price = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unreachable_endpoint_fails_after_retries() {
        let cfg = LlmBackendConfig {
            kind: BackendKind::Http,
            endpoint: Some("http://127.0.0.1:9".into()),
            model_name: Some("m".into()),
            max_retries: 1,
            timeout: Duration::from_secs(2),
            ..LlmBackendConfig::default()
        };
        let backend = HttpBackend::new(&cfg).unwrap();
        let err = backend
            .complete(&CompletionRequest {
                prompt: "p",
                prompt_hash: "h",
                target: "u",
            })
            .unwrap_err();
        assert!(matches!(err, Error::Backend(_)));
        assert_eq!(backend.requests_sent(), 2);
    }
}
