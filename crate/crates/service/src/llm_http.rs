//! Blocking chat-completions transport over HTTP.

use std::time::Duration;

use opinion_core::llm::{ChatRequest, ChatResponse, ChatTransport, TransportError};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

/// Posts [`ChatRequest`] bodies to an OpenAI-compatible
/// `/chat/completions` endpoint.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport").field("url", &self.url).finish()
    }
}

impl HttpTransport {
    /// `endpoint` is the API base (for example `https://host/v1`) or the full
    /// completions URL.
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let endpoint = endpoint.trim_end_matches('/');
        let url = if endpoint.ends_with("/chat/completions") {
            endpoint.to_string()
        } else {
            format!("{endpoint}/chat/completions")
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent, url, api_key }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

/// Pulls the first choice's message text out of a completions body.
pub fn parse_completion(body: &str) -> Result<String, TransportError> {
    let c: Completion =
        serde_json::from_str(body).map_err(|e| TransportError::Decode(e.to_string()))?;
    c.choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| TransportError::Decode("no message content in first choice".into()))
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let mut req = self.agent.post(&self.url).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let body = serde_json::to_string(request).map_err(|e| TransportError::Decode(e.to_string()))?;
        let mut resp = req
            .send(body.as_str())
            .map_err(|e| TransportError::Request(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Request(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body: text });
        }
        parse_completion(&text).map(|content| ChatResponse { content })
    }
}
