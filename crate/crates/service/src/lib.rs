//! Participant-facing HTTP service, file-backed run storage, an HTTP
//! chat-completions transport, exports and the `hybrid-opinion` CLI.

pub mod api;
pub mod cli;
pub mod export;
pub mod llm_http;
pub mod persist;
pub mod plot;
pub mod service;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

pub use service::{Service, ServiceConfig, ServiceError};

/// Serves the API until ctrl-c, sweeping expired sessions every `sweep`.
pub async fn serve(service: Arc<Service>, addr: SocketAddr, sweep: Duration) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    let sweeper = {
        let service = service.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(sweep);
            loop {
                tick.tick().await;
                let s = service.clone();
                let _ = tokio::task::spawn_blocking(move || s.sweep()).await;
            }
        })
    };
    let result = axum::serve(listener, api::router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    sweeper.abort();
    result
}
