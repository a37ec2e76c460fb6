//! Live painting service: one stepping loop per WebSocket connection,
//! streaming state frames and persisting finished sessions.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use acord_core::acord_trainer::PolicySnapshot;
use acord_core::envs::Shape;
use acord_core::session::{
    ClientMessage, Condition, ControlCell, ControlValue, ServerMessage, Session, SessionConfig, SessionStore,
    StateFrame, TICK_HZ,
};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;

/// Outbound frames buffered per connection before the oldest are dropped.
pub const FRAME_QUEUE: usize = 64;

pub struct AppState {
    pub shapes: Vec<Shape>,
    pub session: SessionConfig,
    pub policy: Option<PolicySnapshot>,
    pub store: SessionStore,
    pub tick_hz: u32,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(shapes: Vec<Shape>, session: SessionConfig, policy: Option<PolicySnapshot>, store: SessionStore) -> Self {
        Self {
            shapes,
            session,
            policy,
            store,
            tick_hz: TICK_HZ,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn with_tick_hz(mut self, hz: u32) -> Self {
        self.tick_hz = hz.max(1);
        self
    }

    fn shape(&self, name: &str) -> Option<&Shape> {
        self.shapes.iter().find(|s| s.name == name)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/shapes", get(list_shapes))
        .route("/styles", get(list_styles))
        .route("/sessions/{id}", get(get_session))
        .route("/ws", get(ws_upgrade))
        .with_state(state)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    serve_on(listener, state).await
}

pub async fn serve_on(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn list_shapes(State(st): State<Arc<AppState>>) -> Json<Vec<Shape>> {
    Json(st.shapes.clone())
}

async fn list_styles(State(st): State<Arc<AppState>>) -> Response {
    Json(&st.session.library).into_response()
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match st.store.load(&id) {
        Ok(rec) => Json(rec).into_response(),
        Err(e) => (StatusCode::NOT_FOUND, Json(ErrorBody { error: e.to_string() })).into_response(),
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(st): State<Arc<AppState>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, st))
}

/// An episode whose stepping loop is live or has ended.
struct Running {
    id: String,
    control: Arc<ControlCell>,
    stop: watch::Sender<bool>,
    task: JoinHandle<Session>,
}

/// Steps `session` at `hz` until stopped or terminated. Frames go to a
/// broadcast channel, which never blocks and drops the oldest for slow
/// readers.
fn spawn_loop(
    mut session: Session,
    hz: u32,
    frames: broadcast::Sender<StateFrame>,
    mut stop: watch::Receiver<bool>,
) -> JoinHandle<Session> {
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(Duration::from_secs_f64(1.0 / hz as f64));
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        loop {
            tokio::select! {
                _ = ticker.tick() => {}
                _ = stop.changed() => break,
            }
            match session.tick() {
                Ok(frame) => {
                    let done = frame.terminated;
                    let _ = frames.send(frame);
                    if done {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
        session
    })
}

async fn connection(socket: WebSocket, st: Arc<AppState>) {
    let (mut sink, mut stream) = socket.split();
    let (frames_tx, mut frames_rx) = broadcast::channel::<StateFrame>(FRAME_QUEUE);
    let (reply_tx, mut reply_rx) = mpsc::channel::<ServerMessage>(32);

    let writer = tokio::spawn(async move {
        loop {
            let msg = tokio::select! {
                r = reply_rx.recv() => match r {
                    Some(m) => m,
                    None => break,
                },
                f = frames_rx.recv() => match f {
                    Ok(frame) => ServerMessage::State(frame),
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            let text = serde_json::to_string(&msg).expect("server messages serialize");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    let mut running: Option<Running> = None;
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<ClientMessage>(&text) {
            Ok(m) => handle(&st, m, &mut running, &frames_tx).await,
            Err(e) => ServerMessage::error(format!("bad message: {e}")),
        };
        if reply_tx.send(reply).await.is_err() {
            break;
        }
    }
    if let Some(r) = running.take() {
        let _ = r.stop.send(true);
        let _ = r.task.await;
    }
    drop(reply_tx);
    drop(frames_tx);
    let _ = writer.await;
}

async fn handle(
    st: &AppState,
    msg: ClientMessage,
    running: &mut Option<Running>,
    frames: &broadcast::Sender<StateFrame>,
) -> ServerMessage {
    match msg {
        ClientMessage::Start { condition, shape, seed } => {
            if let Some(r) = running {
                return ServerMessage::error(format!("episode {} is already running on this connection", r.id));
            }
            let Some(shape) = st.shape(&shape).cloned() else {
                return ServerMessage::error(format!("unknown shape {shape:?}"));
            };
            let n = st.next_id.fetch_add(1, Ordering::Relaxed);
            let seed = seed.unwrap_or(n);
            let id = format!("{}-{}-{n}", condition.as_str(), shape.name);
            let policy = if condition == Condition::Acord { st.policy.clone() } else { None };
            match Session::start(id.clone(), condition, shape, seed, st.session.clone(), policy) {
                Ok(session) => {
                    let control = session.control();
                    let (stop, stop_rx) = watch::channel(false);
                    let task = spawn_loop(session, st.tick_hz, frames.clone(), stop_rx);
                    *running = Some(Running { id: id.clone(), control, stop, task });
                    let mut ack = ServerMessage::ack("start");
                    if let ServerMessage::Ack { session, .. } = &mut ack {
                        *session = Some(id);
                    }
                    ack
                }
                Err(e) => ServerMessage::error(e.to_string()),
            }
        }
        ClientMessage::Finish => {
            let Some(r) = running.take() else {
                return ServerMessage::error("no episode is running");
            };
            let _ = r.stop.send(true);
            let session = match r.task.await {
                Ok(s) => s,
                Err(e) => return ServerMessage::error(format!("stepping loop failed: {e}")),
            };
            let saved = session.finish().and_then(|(mut rec, raster)| {
                // One retry for transient I/O failures.
                if st.store.save(&mut rec, &raster).is_err() {
                    st.store.save(&mut rec, &raster)?;
                }
                Ok(rec)
            });
            match saved {
                Ok(rec) => ServerMessage::Ack {
                    of: "finish".into(),
                    session: Some(rec.id),
                    k: None,
                    index: None,
                    u: None,
                    scores: rec.scores,
                },
                Err(e) => ServerMessage::error(e.to_string()),
            }
        }
        control => {
            let Some(r) = running else {
                return ServerMessage::error(format!("{} before start", control.kind()));
            };
            match r.control.apply(&control) {
                Ok(value) => {
                    let mut ack = ServerMessage::ack(control.kind());
                    if let ServerMessage::Ack { session, k, index, u, .. } = &mut ack {
                        *session = Some(r.id.clone());
                        match value {
                            ControlValue::K(v) => *k = Some(v),
                            ControlValue::Style(i) => *index = Some(i),
                            ControlValue::U(v) => *u = Some(v),
                        }
                    }
                    ack
                }
                Err(e) => ServerMessage::error(e.to_string()),
            }
        }
    }
}
