//! `replay`: re-emits a stored trace over the telemetry protocol so the console can
//! render it. Each connection gets its own stream, decimated to `rate` and paced at
//! `speed` times real time. `start`, `pause` and `reset` are honoured; `set_mode` is not.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use drillshare_core::telemetry::{Control, Decimator, Decoder, Encoder, Message, Status, TickState};
use drillshare_core::trace::{TraceHeader, TraceRecord};
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::time::Instant;

pub struct Replay {
    header: TraceHeader,
    frames: Vec<TickState>,
    speed: f64,
}

impl Replay {
    pub fn new(header: TraceHeader, records: &[TraceRecord], rate: f64, speed: f64) -> anyhow::Result<Self> {
        anyhow::ensure!(speed.is_finite() && speed > 0.0, "speed must be positive, got {speed}");
        anyhow::ensure!(rate.is_finite() && rate > 0.0, "rate must be positive, got {rate}");
        let mut decimator = Decimator::new(rate);
        let last = records.len().saturating_sub(1);
        let frames = records
            .iter()
            .enumerate()
            .filter(|(i, r)| decimator.due(r.t) || *i == last)
            .map(|(_, r)| TickState::from_record(r, header.mode, header.target_depth))
            .collect();
        Ok(Self { header, frames, speed })
    }

    pub fn frames(&self) -> &[TickState] {
        &self.frames
    }
}

/// Serves `/ws` until the returned handle is aborted.
pub async fn serve(
    replay: Replay,
    addr: SocketAddr,
) -> anyhow::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let app = Router::new().route("/ws", get(ws_handler)).with_state(Arc::new(replay));
    let handle = tokio::spawn(async move { axum::serve(listener, app).await });
    Ok((addr, handle))
}

async fn ws_handler(State(replay): State<Arc<Replay>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| stream(socket, replay))
}

async fn stream(socket: WebSocket, replay: Arc<Replay>) {
    let (mut tx, mut rx) = socket.split();
    let mut encoder = Encoder::default();
    let mut decoder = Decoder::default();
    let t0 = replay.frames.first().map_or(0.0, |f| f.t);
    let mut next = 0usize;
    let mut running = true;
    // replay clock: wall instant that corresponds to trace time t0
    let mut origin = Instant::now();
    let mut paused_at: Option<f64> = None;
    let mut announced_end = false;

    let status = |encoder: &mut Encoder, running: bool, t: f64, errors: u64, end: bool| {
        encoder.encode(Message::Status(Status {
            running,
            mode: replay.header.mode,
            t,
            decode_errors: errors,
            dropped: 0,
            finished: end.then(|| "end of trace".to_string()),
        }))
    };
    if tx.send(WsMessage::Text(status(&mut encoder, true, t0, 0, false).into())).await.is_err() {
        return;
    }

    loop {
        let due = replay
            .frames
            .get(next)
            .filter(|_| running)
            .map(|f| origin + Duration::from_secs_f64((f.t - t0) / replay.speed));
        let sleep = async {
            match due {
                Some(at) => tokio::time::sleep_until(at).await,
                None => std::future::pending().await,
            }
        };
        tokio::select! {
            _ = sleep => {
                let frame = encoder.encode(Message::TickState(replay.frames[next].clone()));
                if tx.send(WsMessage::Text(frame.into())).await.is_err() {
                    return;
                }
                next += 1;
                if next == replay.frames.len() && !announced_end {
                    announced_end = true;
                    let t = replay.frames[next - 1].t;
                    if tx.send(WsMessage::Text(status(&mut encoder, false, t, decoder.errors, true).into())).await.is_err() {
                        return;
                    }
                }
            }
            msg = rx.next() => {
                let Some(Ok(msg)) = msg else { return };
                let WsMessage::Text(text) = msg else {
                    if matches!(msg, WsMessage::Close(_)) { return; }
                    continue;
                };
                let Some(env) = decoder.decode(text.as_str()) else { continue };
                let Message::Control(control) = env.message else { continue };
                let now_t = replay.frames.get(next.saturating_sub(1)).map_or(t0, |f| f.t);
                match control {
                    Control::Pause if running => {
                        running = false;
                        paused_at = Some((Instant::now() - origin).as_secs_f64());
                    }
                    Control::Start if !running => {
                        running = true;
                        if let Some(p) = paused_at.take() {
                            origin = Instant::now() - Duration::from_secs_f64(p);
                        }
                    }
                    Control::Reset => {
                        next = 0;
                        announced_end = false;
                        origin = Instant::now();
                        paused_at = (!running).then_some(0.0);
                    }
                    _ => {}
                }
                let end = next == replay.frames.len();
                if tx.send(WsMessage::Text(status(&mut encoder, running && !end, now_t, decoder.errors, end).into())).await.is_err() {
                    return;
                }
            }
        }
    }
}
