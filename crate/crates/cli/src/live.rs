//! `serve`: a live session paced to the wall clock, steered over a websocket.
//!
//! The session loop runs on its own thread and talks to the network side only through
//! two drop-oldest mailboxes, so it never blocks on I/O. It starts paused, pauses when
//! the client disconnects and resumes when a client reconnects.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use drillshare_core::config::SessionConfig;
use drillshare_core::mailbox::Mailbox;
use drillshare_core::operator::LiveOperator;
use drillshare_core::session::{Finish, Session};
use drillshare_core::telemetry::{Control, Decimator, Decoder, Encoder, Message, OperatorInput, Status, TickState};
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::watch;

const INBOX_CAPACITY: usize = 256;
const OUTBOX_CAPACITY: usize = 1024;
/// Fall-behind beyond this re-anchors the pacing clock instead of bursting to catch up.
const MAX_LAG: f64 = 0.25;
const STATUS_PERIOD: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy)]
pub enum Inbound {
    Input(OperatorInput),
    Control(Control),
}

struct Shared {
    inbox: Mailbox<Inbound>,
    outbox: Mailbox<String>,
    connected: AtomicBool,
    stop: AtomicBool,
    decode_errors: AtomicU64,
    status: Mutex<Status>,
}

impl Shared {
    fn status(&self) -> Status {
        self.status.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

pub struct LiveServer {
    pub addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: watch::Sender<bool>,
    session_loop: Option<JoinHandle<()>>,
    http: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl LiveServer {
    /// Binds `addr` and starts the session loop and the websocket endpoint (`/ws`).
    /// `/status` serves the latest status snapshot as JSON.
    pub async fn start(config: SessionConfig, addr: SocketAddr) -> anyhow::Result<Self> {
        let session = Session::with_operator(config.clone(), LiveOperator::default(), None)?;
        let shared = Arc::new(Shared {
            inbox: Mailbox::new(INBOX_CAPACITY),
            outbox: Mailbox::new(OUTBOX_CAPACITY),
            connected: AtomicBool::new(false),
            stop: AtomicBool::new(false),
            decode_errors: AtomicU64::new(0),
            status: Mutex::new(Status {
                running: false,
                mode: config.mode,
                t: 0.0,
                decode_errors: 0,
                dropped: 0,
                finished: None,
            }),
        });
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;

        let loop_shared = Arc::clone(&shared);
        let session_loop = thread::Builder::new()
            .name("session-loop".into())
            .spawn(move || SessionLoop::new(config, session, loop_shared).run())?;

        let app = Router::new()
            .route("/ws", get(ws_handler))
            .route("/status", get(status_handler))
            .with_state(Arc::clone(&shared));
        let (shutdown, mut rx) = watch::channel(false);
        let http = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = rx.wait_for(|stop| *stop).await;
                })
                .await
        });
        Ok(Self { addr, shared, shutdown, session_loop: Some(session_loop), http })
    }

    pub fn status(&self) -> Status {
        self.shared.status()
    }

    pub async fn shutdown(mut self) -> anyhow::Result<()> {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = self.shutdown.send(true);
        // an open websocket would hold graceful shutdown forever
        self.http.abort();
        let _ = (&mut self.http).await;
        if let Some(h) = self.session_loop.take() {
            tokio::task::spawn_blocking(move || h.join())
                .await?
                .map_err(|_| anyhow::anyhow!("session loop panicked"))?;
        }
        Ok(())
    }
}

impl Drop for LiveServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.http.abort();
    }
}

struct SessionLoop {
    config: SessionConfig,
    session: Session<LiveOperator>,
    shared: Arc<Shared>,
    encoder: Encoder,
    decimator: Decimator,
    running: bool,
    resume_on_connect: bool,
    was_connected: bool,
    anchor: Option<(Instant, f64)>,
}

impl SessionLoop {
    fn new(config: SessionConfig, session: Session<LiveOperator>, shared: Arc<Shared>) -> Self {
        let decimator = Decimator::new(config.telemetry_rate);
        Self {
            config,
            session,
            shared,
            encoder: Encoder::default(),
            decimator,
            running: false,
            resume_on_connect: false,
            was_connected: false,
            anchor: None,
        }
    }

    fn run(mut self) {
        tracing::info!("session loop idle, waiting for a client to start it");
        let mut last_status = Instant::now();
        while !self.shared.stop.load(Ordering::SeqCst) {
            let mut changed = self.track_connection();
            for msg in self.shared.inbox.drain() {
                changed |= self.apply(msg);
            }
            if self.running {
                changed |= self.advance();
            }
            if changed || last_status.elapsed() >= STATUS_PERIOD {
                self.publish_status();
                last_status = Instant::now();
            }
            thread::sleep(Duration::from_millis(if self.running { 1 } else { 5 }));
        }
    }

    fn track_connection(&mut self) -> bool {
        let connected = self.shared.connected.load(Ordering::SeqCst);
        if connected == self.was_connected {
            return false;
        }
        self.was_connected = connected;
        if connected {
            tracing::info!("client connected");
            self.shared.outbox.drain();
            if self.resume_on_connect {
                self.resume_on_connect = false;
                self.resume();
            }
        } else {
            tracing::info!(t = self.session.time(), "client disconnected");
            if self.running {
                self.running = false;
                self.resume_on_connect = true;
            }
            self.session.operator_mut().clear();
        }
        true
    }

    fn resume(&mut self) {
        if self.session.finished().is_none() {
            self.running = true;
            self.anchor = None;
        }
    }

    fn apply(&mut self, msg: Inbound) -> bool {
        match msg {
            Inbound::Input(input) => {
                let now = self.session.time();
                self.session.operator_mut().push(input.into(), now);
                false
            }
            Inbound::Control(Control::Start) => {
                self.resume();
                true
            }
            Inbound::Control(Control::Pause) => {
                self.running = false;
                self.resume_on_connect = false;
                true
            }
            Inbound::Control(Control::Reset) => {
                let cfg = self.session.config().clone();
                match Session::with_operator(cfg, LiveOperator::default(), None) {
                    Ok(s) => self.session = s,
                    Err(e) => tracing::error!("reset failed: {e}"),
                }
                self.running = false;
                self.resume_on_connect = false;
                self.decimator = Decimator::new(self.config.telemetry_rate);
                true
            }
            Inbound::Control(Control::SetMode { mode }) => {
                self.session.set_mode(mode);
                true
            }
        }
    }

    /// Steps the session up to the wall-clock target. Returns true when it finished.
    fn advance(&mut self) -> bool {
        let dt = self.config.dt;
        let (wall0, sim0) = *self.anchor.get_or_insert((Instant::now(), self.session.time()));
        let mut target = sim0 + wall0.elapsed().as_secs_f64();
        if target - self.session.time() > MAX_LAG {
            tracing::warn!(lag = target - self.session.time(), "session loop fell behind, re-anchoring");
            self.anchor = Some((Instant::now(), self.session.time()));
            target = self.session.time() + dt;
        }
        let mode = self.session.config().mode;
        let target_depth = self.config.bone.target_depth;
        while self.session.time() + 0.5 * dt <= target {
            let Some(r) = self.session.step() else { break };
            let done = self.session.finished().is_some();
            if self.decimator.due(r.t) || done {
                let frame = self.encoder.encode(Message::TickState(TickState::from_record(&r, mode, target_depth)));
                self.shared.outbox.push(frame);
            }
            if done {
                self.running = false;
                tracing::info!(t = r.t, finish = ?self.session.finished(), "session finished");
                return true;
            }
        }
        false
    }

    fn publish_status(&mut self) {
        let status = Status {
            running: self.running,
            mode: self.session.config().mode,
            t: self.session.time(),
            decode_errors: self.shared.decode_errors.load(Ordering::Relaxed),
            dropped: self.shared.inbox.dropped() + self.shared.outbox.dropped(),
            finished: self.session.finished().map(finish_label),
        };
        *self.shared.status.lock().unwrap_or_else(|e| e.into_inner()) = status.clone();
        if self.was_connected {
            let frame = self.encoder.encode(Message::Status(status));
            self.shared.outbox.push(frame);
        }
    }
}

pub fn finish_label(f: &Finish) -> String {
    match f {
        Finish::Complete => "complete".into(),
        Finish::Timeout => "timeout".into(),
        Finish::Fault(reason) => format!("fault: {reason}"),
    }
}

async fn status_handler(State(shared): State<Arc<Shared>>) -> Json<Status> {
    Json(shared.status())
}

async fn ws_handler(State(shared): State<Arc<Shared>>, ws: WebSocketUpgrade) -> Response {
    if shared.connected.load(Ordering::SeqCst) {
        return (StatusCode::CONFLICT, "a client is already connected").into_response();
    }
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(socket: WebSocket, shared: Arc<Shared>) {
    // frames queued for a previous client are stale; the loop publishes nothing while
    // disconnected, so nothing new can arrive before the swap below
    shared.outbox.drain();
    if shared.connected.swap(true, Ordering::SeqCst) {
        return;
    }
    let (mut tx, mut rx) = socket.split();
    let outbox = shared.outbox.clone();
    let sender = tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_millis(4));
        loop {
            tick.tick().await;
            for frame in outbox.drain() {
                if tx.send(WsMessage::Text(frame.into())).await.is_err() {
                    return;
                }
            }
        }
    });
    let mut decoder = Decoder::default();
    while let Some(Ok(msg)) = rx.next().await {
        let text = match msg {
            WsMessage::Text(t) => t,
            WsMessage::Close(_) => break,
            WsMessage::Binary(_) => {
                shared.decode_errors.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            _ => continue,
        };
        let before = decoder.errors;
        match decoder.decode(text.as_str()).map(|env| env.message) {
            Some(Message::OperatorInput(input)) => shared.inbox.push(Inbound::Input(input)),
            Some(Message::Control(c)) => shared.inbox.push(Inbound::Control(c)),
            Some(_) => {
                tracing::debug!("ignoring server-bound message of a server-side type");
            }
            None => {
                if decoder.errors > before {
                    shared.decode_errors.fetch_add(1, Ordering::Relaxed);
                    tracing::debug!("dropped malformed frame");
                }
            }
        }
    }
    sender.abort();
    shared.connected.store(false, Ordering::SeqCst);
}
