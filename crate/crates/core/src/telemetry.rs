//! Telemetry protocol between a live session and its console: JSON text frames, one
//! message per frame, each carrying a schema version and a sequence number.
//! Documented in `docs/telemetry-protocol.md`.

use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::geometry::Vec3;
use crate::operator::{LiveInput, PhaseKind};
use crate::scene::ObjectLabel;
use crate::trace::TraceRecord;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    #[serde(flatten)]
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    TickState(TickState),
    OperatorInput(OperatorInput),
    Control(Control),
    Status(Status),
}

/// Server → client, decimated to the telemetry rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickState {
    pub t: f64,
    pub mode: Mode,
    pub w: f64,
    pub alpha_bar: f64,
    pub alpha: f64,
    pub depth: f64,
    pub max_depth: f64,
    pub target_depth: f64,
    pub haptic_x: Vec3,
    pub robot_x: Vec3,
    pub tip: Vec3,
    pub f_sensor: Vec3,
    pub f_fdbk: Vec3,
    pub f_operator: Vec3,
    pub gaze_point: Option<Vec3>,
    pub gaze_object: Option<ObjectLabel>,
    pub phase: PhaseKind,
    pub complete: bool,
}

impl TickState {
    pub fn from_record(r: &TraceRecord, mode: Mode, target_depth: f64) -> Self {
        Self {
            t: r.t,
            mode,
            w: r.w,
            alpha_bar: r.alpha_bar,
            alpha: r.alpha,
            depth: r.depth,
            max_depth: r.max_depth,
            target_depth,
            haptic_x: r.haptic_x,
            robot_x: r.robot_x,
            tip: r.tip,
            f_sensor: r.f_sensor,
            f_fdbk: r.f_fdbk,
            f_operator: r.f_operator,
            gaze_point: r.gaze_point,
            gaze_object: r.gaze_object,
            phase: r.phase,
            complete: r.max_depth >= target_depth,
        }
    }
}

/// Client → server: hand force (task frame, N) and a world-frame gaze ray.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorInput {
    pub hand_force: Vec3,
    pub gaze_origin: Vec3,
    pub gaze_direction: Vec3,
    pub client_time: f64,
}

impl From<OperatorInput> for LiveInput {
    fn from(m: OperatorInput) -> Self {
        LiveInput {
            hand_force: m.hand_force,
            gaze_origin: m.gaze_origin,
            gaze_direction: m.gaze_direction,
            client_time: m.client_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Control {
    Start,
    Pause,
    Reset,
    SetMode { mode: Mode },
}

/// Server → client lifecycle and health report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub running: bool,
    pub mode: Mode,
    pub t: f64,
    pub decode_errors: u64,
    pub dropped: u64,
    pub finished: Option<String>,
}

/// Stamps outbound messages with the schema version and a strictly increasing sequence.
#[derive(Debug, Clone, Default)]
pub struct Encoder {
    next_seq: u64,
}

impl Encoder {
    pub fn encode(&mut self, message: Message) -> String {
        let env = Envelope { v: SCHEMA_VERSION, seq: self.next_seq, message };
        self.next_seq += 1;
        encode(&env)
    }
}

pub fn encode(env: &Envelope) -> String {
    serde_json::to_string(env).expect("telemetry messages serialise")
}

/// Strict single-frame decode.
pub fn decode(frame: &str) -> Result<Envelope, String> {
    let env: Envelope = serde_json::from_str(frame).map_err(|e| e.to_string())?;
    if env.v != SCHEMA_VERSION {
        return Err(format!("unsupported schema version {}", env.v));
    }
    Ok(env)
}

/// Per-connection inbound decoder: malformed frames are dropped and counted, and frames
/// whose sequence number does not increase are discarded.
#[derive(Debug, Clone, Default)]
pub struct Decoder {
    pub errors: u64,
    pub out_of_order: u64,
    last_seq: Option<u64>,
}

impl Decoder {
    pub fn decode(&mut self, frame: &str) -> Option<Envelope> {
        match decode(frame) {
            Ok(env) => {
                if self.last_seq.is_some_and(|s| env.seq <= s) {
                    self.out_of_order += 1;
                    return None;
                }
                self.last_seq = Some(env.seq);
                Some(env)
            }
            Err(_) => {
                self.errors += 1;
                None
            }
        }
    }

    /// Forgets the sequence history, e.g. when a new client connects.
    pub fn reset_sequence(&mut self) {
        self.last_seq = None;
    }
}

/// Passes at most one event per `1/rate` of simulated time.
#[derive(Debug, Clone)]
pub struct Decimator {
    interval: f64,
    next: Option<f64>,
}

impl Decimator {
    pub fn new(rate: f64) -> Self {
        assert!(rate > 0.0);
        Self { interval: 1.0 / rate, next: None }
    }

    pub fn due(&mut self, t: f64) -> bool {
        match self.next {
            Some(n) if t + 1e-9 < n => false,
            _ => {
                // stay on a fixed grid so the rate does not drift with tick jitter
                let base = self.next.unwrap_or(t);
                let mut n = base + self.interval;
                while n <= t + 1e-9 {
                    n += self.interval;
                }
                self.next = Some(n);
                true
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tick() -> TickState {
        TickState {
            t: 1.234,
            mode: Mode::Shared,
            w: 0.5,
            alpha_bar: 0.5,
            alpha: 0.55,
            depth: 0.0123,
            max_depth: 0.0123,
            target_depth: 0.03,
            haptic_x: Vec3::new(1e-4, 0.0, 0.0123),
            robot_x: Vec3::new(0.45, 0.0, 0.2),
            tip: Vec3::new(0.0, 0.0, 0.0123),
            f_sensor: Vec3::new(0.0, 0.0, -0.0015),
            f_fdbk: Vec3::new(0.0, 0.0, -0.001125),
            f_operator: Vec3::zeros(),
            gaze_point: None,
            gaze_object: Some(ObjectLabel::Drill),
            phase: PhaseKind::Focus,
            complete: false,
        }
    }

    #[test]
    fn round_trip_every_kind() {
        let mut enc = Encoder::default();
        let messages = vec![
            Message::TickState(tick()),
            Message::OperatorInput(OperatorInput {
                hand_force: Vec3::new(0.0, 0.0, 5.0),
                gaze_origin: Vec3::zeros(),
                gaze_direction: Vec3::new(0.0, 0.1, 1.0),
                client_time: 12.5,
            }),
            Message::Control(Control::Start),
            Message::Control(Control::SetMode { mode: Mode::FullHuman }),
            Message::Status(Status {
                running: false,
                mode: Mode::Shared,
                t: 0.0,
                decode_errors: 2,
                dropped: 0,
                finished: None,
            }),
        ];
        for (i, m) in messages.into_iter().enumerate() {
            let text = enc.encode(m.clone());
            let env = decode(&text).unwrap();
            assert_eq!(env.seq, i as u64);
            assert_eq!(env.message, m);
        }
    }

    #[test]
    fn wire_shape() {
        let text = Encoder::default().encode(Message::Control(Control::SetMode { mode: Mode::FullRobot }));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["v"], 1);
        assert_eq!(v["seq"], 0);
        assert_eq!(v["type"], "control");
        assert_eq!(v["action"], "set_mode");
        assert_eq!(v["mode"], "full_robot");
    }

    #[test]
    fn unknown_fields_ignored() {
        let frame = r#"{"v":1,"seq":4,"type":"control","action":"pause","extra":{"x":1}}"#;
        assert_eq!(decode(frame).unwrap().message, Message::Control(Control::Pause));
    }

    #[test]
    fn truncated_frame_counted() {
        let mut dec = Decoder::default();
        assert!(dec.decode(r#"{"v":1,"seq":0,"type":"contr"#).is_none());
        assert_eq!(dec.errors, 1);
        assert!(dec.decode(r#"{"v":1,"seq":1,"type":"control","action":"start"}"#).is_some());
    }

    #[test]
    fn stale_sequence_discarded() {
        let mut dec = Decoder::default();
        let f = |s: u64| format!(r#"{{"v":1,"seq":{s},"type":"control","action":"start"}}"#);
        assert!(dec.decode(&f(3)).is_some());
        assert!(dec.decode(&f(3)).is_none());
        assert!(dec.decode(&f(2)).is_none());
        assert_eq!(dec.out_of_order, 2);
        dec.reset_sequence();
        assert!(dec.decode(&f(0)).is_some());
    }

    #[test]
    fn decimator_rate() {
        let mut d = Decimator::new(60.0);
        let n = (1..=1000).filter(|&k| d.due(k as f64 * 0.001)).count();
        assert_eq!(n, 60);
    }
}
