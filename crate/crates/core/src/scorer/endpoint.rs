use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

/// Network, auth or protocol failure talking to the model endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("model endpoint: {0}")]
pub struct TransportError(pub String);

/// Anything that can turn a prompt into a completion.
pub trait ChatEndpoint: Send + Sync {
    fn complete(&self, model: &str, prompt: &str) -> Result<String, TransportError>;
}

impl<F> ChatEndpoint for F
where
    F: Fn(&str, &str) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, model: &str, prompt: &str) -> Result<String, TransportError> {
        self(model, prompt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// OpenAI-style `/chat/completions` client.
pub struct HttpChatEndpoint {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
    sampling: SamplingParams,
}

impl HttpChatEndpoint {
    pub const BASE_ENV: &'static str = "LLM_API_BASE";
    pub const KEY_ENV: &'static str = "LLM_API_KEY";

    pub fn new(base_url: &str, api_key: Option<String>, sampling: SamplingParams) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        let base = base_url.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(Self {
            client,
            url,
            api_key,
            sampling,
        })
    }

    pub fn from_env(sampling: SamplingParams) -> Result<Self, TransportError> {
        let base = std::env::var(Self::BASE_ENV)
            .map_err(|_| TransportError(format!("{} is not set", Self::BASE_ENV)))?;
        let key = std::env::var(Self::KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(&base, key, sampling)
    }
}

impl ChatEndpoint for HttpChatEndpoint {
    fn complete(&self, model: &str, prompt: &str) -> Result<String, TransportError> {
        let body = json!({
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.sampling.temperature,
            "max_tokens": self.sampling.max_tokens,
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError(e.to_string()))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(200).collect();
            return Err(TransportError(format!("HTTP {status}: {snippet}")));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| TransportError(format!("response is not JSON: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError("response has no choices[0].message.content".into()))
    }
}
