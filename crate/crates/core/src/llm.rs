//! Chat-completions message contract and the transport abstraction shared by
//! LLM agents and the LLM stance annotator.
//!
//! Transports are injectable: the service crate provides an HTTP transport,
//! tests use [`FnTransport`] or [`QueueTransport`], and [`CountingTransport`]
//! wraps any transport to count calls.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Request body in the chat-completions shape: model, messages, temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

impl<T: ChatTransport + ?Sized> ChatTransport for Arc<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        (**self).complete(request)
    }
}

/// Transport backed by a closure.
pub struct FnTransport<F>(pub F);

impl<F> ChatTransport for FnTransport<F>
where
    F: Fn(&ChatRequest) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        (self.0)(request).map(|content| ChatResponse { content })
    }
}

/// Replays a fixed list of replies in order; errors once exhausted.
#[derive(Debug, Default)]
pub struct QueueTransport {
    replies: Mutex<VecDeque<Result<String, TransportError>>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl QueueTransport {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        QueueTransport {
            replies: Mutex::new(replies.into_iter().map(|s| Ok(s.into())).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn push_error(&self, err: TransportError) {
        self.replies.lock().unwrap().push_back(Err(err));
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl ChatTransport for QueueTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.seen.lock().unwrap().push(request.clone());
        match self.replies.lock().unwrap().pop_front() {
            Some(r) => r.map(|content| ChatResponse { content }),
            None => Err(TransportError::Request("no scripted reply left".into())),
        }
    }
}

/// Counts calls forwarded to an inner transport.
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T: ChatTransport> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: ChatTransport> ChatTransport for CountingTransport<T> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}
