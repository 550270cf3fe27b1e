use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::stream::SplitSink;
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::Notify;
use tokio::time::{Instant, MissedTickBehavior};

use crate::protocol::{ClientMsg, ErrorCode, ServerMsg};
use crate::routes::RouteRegistry;
use crate::session::Session;
use crate::{ServiceConfig, ServiceError};

/// Ticks queued for a slow client before older ones are dropped: one second.
const TICK_BACKLOG: usize = 20;
/// Ticks simulated per turn of the loop when running unpaced.
const UNPACED_BATCH: usize = 250;
const PACE_PERIOD: Duration = Duration::from_millis(10);

type Shared<T> = Arc<Mutex<T>>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

struct Slot {
    session: Shared<Session>,
    attached: bool,
    generation: u64,
}

struct Inner {
    routes: RouteRegistry,
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Slot>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(routes: RouteRegistry, config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        Ok(Self {
            inner: Arc::new(Inner { routes, config, sessions: Mutex::new(HashMap::new()), next_id: AtomicU64::new(1) }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    /// Reattaches to a detached session with id `resume`, or opens a new one.
    fn attach(&self, resume: Option<&str>) -> (String, Shared<Session>, u64, bool) {
        let mut sessions = lock(&self.inner.sessions);
        if let Some(id) = resume {
            if let Some(slot) = sessions.get_mut(id).filter(|s| !s.attached) {
                slot.attached = true;
                slot.generation += 1;
                return (id.to_string(), slot.session.clone(), slot.generation, true);
            }
        }
        let id = format!("s{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed));
        let session = Arc::new(Mutex::new(Session::new(id.clone(), self.inner.config.params)));
        sessions.insert(id.clone(), Slot { session: session.clone(), attached: true, generation: 0 });
        (id, session, 0, false)
    }

    /// Marks the session detached and forgets it unless a client reattaches
    /// within the resume timeout.
    fn detach(&self, id: String, generation: u64) {
        if let Some(slot) = lock(&self.inner.sessions).get_mut(&id) {
            if slot.generation == generation {
                slot.attached = false;
            }
        }
        let app = self.clone();
        tokio::spawn(async move {
            tokio::time::sleep(app.inner.config.resume_timeout).await;
            let mut sessions = lock(&app.inner.sessions);
            if sessions.get(&id).is_some_and(|s| !s.attached && s.generation == generation) {
                sessions.remove(&id);
            }
        });
    }

    fn find(&self, id: Option<&str>) -> Result<Shared<Session>, (StatusCode, String)> {
        let sessions = lock(&self.inner.sessions);
        match id {
            Some(id) => sessions
                .get(id)
                .map(|s| s.session.clone())
                .ok_or((StatusCode::NOT_FOUND, format!("no session {id:?}"))),
            None if sessions.len() == 1 => Ok(sessions.values().next().expect("one session").session.clone()),
            None => Err((StatusCode::BAD_REQUEST, "several or no sessions; pass ?session=<id>".into())),
        }
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = lock(&self.inner.sessions).keys().cloned().collect();
        ids.sort();
        ids
    }
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/routes", get(list_routes))
        .route("/profile/{iteration}", get(get_profile))
        .route("/history", get(get_history))
        .route("/log/{lap_id}", get(get_log))
        .route("/session", get(open_session))
        .with_state(app)
}

pub async fn serve(listener: TcpListener, app: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(app)).await
}

#[derive(Debug, Serialize)]
struct RouteInfo {
    name: String,
    length_m: f64,
    zones: usize,
}

async fn list_routes(State(app): State<AppState>) -> Json<Vec<RouteInfo>> {
    Json(
        app.inner
            .routes
            .iter()
            .map(|r| RouteInfo { name: r.name().to_string(), length_m: r.length(), zones: r.zones().len() })
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

async fn get_profile(
    State(app): State<AppState>,
    Path(iteration): Path<u32>,
    Query(q): Query<SessionQuery>,
) -> Result<Response, (StatusCode, String)> {
    let session = app.find(q.session.as_deref())?;
    let csv = lock(&session).profile_csv(iteration);
    csv.map(|csv| ([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
        .ok_or((StatusCode::NOT_FOUND, format!("no profile for iteration {iteration}")))
}

async fn get_history(
    State(app): State<AppState>,
    Query(q): Query<SessionQuery>,
) -> Result<Response, (StatusCode, String)> {
    let session = app.find(q.session.as_deref())?;
    let manifest = lock(&session).history();
    Ok(Json(manifest).into_response())
}

async fn get_log(
    State(app): State<AppState>,
    Path(lap_id): Path<String>,
    Query(q): Query<SessionQuery>,
) -> Result<Response, (StatusCode, String)> {
    let session = app.find(q.session.as_deref())?;
    let json = lock(&session).lap(&lap_id).map(|l| l.log.to_json(false));
    json.map(|j| ([(header::CONTENT_TYPE, "application/json")], j).into_response())
        .ok_or((StatusCode::NOT_FOUND, format!("no lap {lap_id:?}")))
}

#[derive(Debug, Deserialize)]
struct ConnectQuery {
    resume: Option<String>,
}

async fn open_session(
    State(app): State<AppState>,
    Query(q): Query<ConnectQuery>,
    ws: WebSocketUpgrade,
) -> Response {
    ws.on_upgrade(move |socket| run_connection(app, socket, q.resume))
}

/// Outgoing messages of one connection. Ticks beyond one second of backlog
/// are dropped oldest first; nothing else is ever dropped.
#[derive(Default)]
struct Outbox {
    queue: Mutex<VecDeque<ServerMsg>>,
    notify: Notify,
    closed: AtomicBool,
}

impl Outbox {
    fn push(&self, msg: ServerMsg) {
        let mut queue = lock(&self.queue);
        if msg.is_tick() && queue.iter().filter(|m| m.is_tick()).count() >= TICK_BACKLOG {
            if let Some(oldest) = queue.iter().position(ServerMsg::is_tick) {
                queue.remove(oldest);
            }
        }
        queue.push_back(msg);
        drop(queue);
        self.notify.notify_one();
    }

    fn extend(&self, msgs: impl IntoIterator<Item = ServerMsg>) {
        for m in msgs {
            self.push(m);
        }
    }

    fn close(&self) {
        self.closed.store(true, Ordering::Release);
        self.notify.notify_one();
    }
}

async fn write_loop(mut sink: SplitSink<WebSocket, Message>, outbox: Arc<Outbox>) {
    loop {
        let batch: Vec<ServerMsg> = lock(&outbox.queue).drain(..).collect();
        if batch.is_empty() {
            if outbox.closed.load(Ordering::Acquire) {
                break;
            }
            outbox.notify.notified().await;
            continue;
        }
        for msg in batch {
            let text = serde_json::to_string(&msg).expect("server messages serialize");
            if sink.send(Message::Text(text.into())).await.is_err() {
                return;
            }
        }
    }
    let _ = sink.close().await;
}

fn handle_text(app: &AppState, session: &Mutex<Session>, text: &str) -> Vec<ServerMsg> {
    match serde_json::from_str::<ClientMsg>(text) {
        Ok(msg) => lock(session).handle(msg, &app.inner.routes),
        Err(e) => vec![ServerMsg::error(ErrorCode::BadMsg, e.to_string())],
    }
}

async fn run_connection(app: AppState, socket: WebSocket, resume: Option<String>) {
    let (id, session, generation, resumed) = app.attach(resume.as_deref());
    tracing::info!(session = %id, resumed, "client attached");
    let (sink, mut stream) = socket.split();
    let outbox = Arc::new(Outbox::default());
    let writer = tokio::spawn(write_loop(sink, outbox.clone()));
    {
        let s = lock(&session);
        outbox.push(s.welcome(resumed));
        if resumed {
            outbox.extend(s.profile_msg());
        }
    }

    let pace = app.inner.config.pace;
    let mut ticker = tokio::time::interval(PACE_PERIOD);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    // wall-clock instant and simulated time at which pacing started
    let mut clock: Option<(Instant, f64)> = None;
    loop {
        let running = lock(&session).lap_running();
        if !running {
            clock = None;
        }
        tokio::select! {
            biased;
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => outbox.extend(handle_text(&app, &session, text.as_str())),
                Some(Ok(Message::Binary(_))) => {
                    outbox.push(ServerMsg::error(ErrorCode::BadMsg, "messages are JSON text frames"));
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
            _ = ticker.tick(), if running && pace.is_some() => {
                let mut s = lock(&session);
                let Some(now_t) = s.lap_time() else { continue };
                let (start, t0) = *clock.get_or_insert((Instant::now(), now_t));
                let until = t0 + pace.unwrap_or(1.0) * start.elapsed().as_secs_f64();
                outbox.extend(s.advance(until, usize::MAX));
            }
            _ = std::future::ready(()), if running && pace.is_none() => {
                let msgs = lock(&session).advance(f64::INFINITY, UNPACED_BATCH);
                outbox.extend(msgs);
                tokio::task::yield_now().await;
            }
        }
    }

    if lock(&session).abort_lap() {
        tracing::info!(session = %id, "lap aborted by disconnect");
    }
    tracing::info!(session = %id, "client detached");
    app.detach(id, generation);
    outbox.close();
    let _ = writer.await;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tick(t: f64) -> ServerMsg {
        ServerMsg::Tick {
            t,
            d_m: 0.0,
            v_kmh: 0.0,
            target_kmh: 0.0,
            limit_kmh: 0.0,
            offset_kmh: 0.0,
            pldf_active: true,
            intervening: false,
        }
    }

    #[test]
    fn lagging_client_keeps_latest_ticks_and_every_other_message() {
        let outbox = Outbox::default();
        outbox.push(ServerMsg::Ack { of: "start_lap".into() });
        for k in 0..100 {
            outbox.push(tick(k as f64));
        }
        outbox.push(ServerMsg::error(ErrorCode::NoLap, "x"));
        let queue = lock(&outbox.queue);
        assert_eq!(queue.len(), TICK_BACKLOG + 2);
        assert!(matches!(queue[0], ServerMsg::Ack { .. }));
        let times: Vec<f64> = queue.iter().filter_map(|m| if let ServerMsg::Tick { t, .. } = m { Some(*t) } else { None }).collect();
        assert_eq!(times, (80..100).map(f64::from).collect::<Vec<_>>());
        assert!(matches!(queue.back(), Some(ServerMsg::Error { .. })));
    }
}
