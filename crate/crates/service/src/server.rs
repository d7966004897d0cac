use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use dialschema::session::{Clock, SystemClock};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use tokio::sync::mpsc::{unbounded_channel, UnboundedSender};
use tokio::task::JoinHandle;

use crate::protocol::{ErrorCode, WireMessage};
use crate::{Registry, ServiceConfig, ServiceError};

type Subscribers = Arc<Mutex<HashMap<String, Vec<UnboundedSender<WireMessage>>>>>;

#[derive(Clone)]
struct AppState {
    registry: Arc<Registry>,
    subscribers: Subscribers,
}

impl AppState {
    fn publish(&self, messages: Vec<WireMessage>) {
        let mut subs = self.subscribers.lock().expect("subscribers");
        for m in messages {
            if let Some(list) = m.session().and_then(|s| subs.get_mut(s)) {
                list.retain(|tx| tx.send(m.clone()).is_ok());
            }
        }
        subs.retain(|_, list| !list.is_empty());
    }
}

pub struct RunningService {
    pub addr: SocketAddr,
    pub registry: Arc<Registry>,
    server: JoinHandle<()>,
    ticker: JoinHandle<()>,
}

impl RunningService {
    /// Stops accepting connections and drops open ones.
    pub fn shutdown(self) {
        self.ticker.abort();
        self.server.abort();
    }
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/ws", get(ws_upgrade))
        .route("/sessions/{id}/transcript", get(export))
        .with_state(state)
}

/// Binds the listener and runs the service in the background.
pub async fn start(config: ServiceConfig, clock: Option<Arc<dyn Clock>>) -> Result<RunningService, ServiceError> {
    let clock = clock.unwrap_or_else(|| Arc::new(SystemClock::default()));
    let tick = Duration::from_millis(config.tick_ms);
    let listen = config.listen.clone();
    let registry = Arc::new(Registry::new(config, clock)?);
    let listener = tokio::net::TcpListener::bind(&listen).await.map_err(|e| ServiceError::Bind(format!("{listen}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Bind(e.to_string()))?;
    let state = AppState { registry: registry.clone(), subscribers: Arc::default() };

    let ticking = state.clone();
    let ticker = tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick);
        loop {
            interval.tick().await;
            let reg = ticking.registry.clone();
            let Ok((messages, evicted)) = tokio::task::spawn_blocking(move || (reg.tick_all(), reg.evict_idle())).await
            else {
                continue;
            };
            for id in evicted {
                tracing::info!(session = %id, "evicted idle session");
            }
            ticking.publish(messages);
        }
    });
    let app = router(state);
    let server = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(RunningService { addr, registry, server, ticker })
}

/// Runs until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let running = start(config, None).await?;
    tracing::info!(addr = %running.addr, "listening");
    let _ = tokio::signal::ctrl_c().await;
    running.shutdown();
    Ok(())
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = unbounded_channel::<WireMessage>();
    let writer = tokio::spawn(async move {
        while let Some(m) = rx.recv().await {
            if sink.send(Message::Text(m.to_json().into())).await.is_err() {
                break;
            }
        }
    });
    let mut joined: Vec<String> = Vec::new();
    while let Some(Ok(frame)) = stream.next().await {
        let text = match frame {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let replies = match WireMessage::from_json(&text) {
            Err(e) => vec![WireMessage::error(None, ErrorCode::BadMessage, e.to_string())],
            Ok(msg) => {
                let reg = state.registry.clone();
                match tokio::task::spawn_blocking(move || reg.handle(msg)).await {
                    Ok(r) => r,
                    Err(e) => vec![WireMessage::error(None, ErrorCode::Internal, e.to_string())],
                }
            }
        };
        for m in &replies {
            if let (false, Some(session)) = (matches!(m, WireMessage::Error { .. }), m.session()) {
                subscribe(&state, session, &tx, &mut joined);
            }
        }
        for m in replies {
            if tx.send(m).is_err() {
                break;
            }
        }
    }
    drop(tx);
    let _ = writer.await;
}

fn subscribe(state: &AppState, session: &str, tx: &UnboundedSender<WireMessage>, joined: &mut Vec<String>) {
    if joined.iter().any(|s| s == session) {
        return;
    }
    joined.push(session.to_string());
    state.subscribers.lock().expect("subscribers").entry(session.to_string()).or_default().push(tx.clone());
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

async fn export(Path(id): Path<String>, Query(q): Query<TokenQuery>, State(state): State<AppState>) -> Response {
    if state.registry.config().token.is_some() && q.token != state.registry.config().token {
        return (StatusCode::UNAUTHORIZED, "bad token").into_response();
    }
    let reg = state.registry.clone();
    match tokio::task::spawn_blocking(move || reg.export_transcript(&id)).await {
        Ok(Ok(doc)) => ([("content-type", "application/x-ndjson")], doc).into_response(),
        Ok(Err(e @ ServiceError::UnknownSession(_))) => (StatusCode::NOT_FOUND, e.to_string()).into_response(),
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}
