//! Per-tick session trace and its newline-delimited JSON encoding.
//!
//! A trace file is one header line followed by one record per tick. Field meanings are
//! documented in `docs/trace-format.md`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::config::Mode;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::operator::PhaseKind;
use crate::scene::{GazeKind, ObjectLabel};

pub const TRACE_FORMAT: &str = "drillshare-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub dt: f64,
    pub target_depth: f64,
    /// Scripted distraction phase `[start, end]`, seconds.
    pub distraction: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// A gaze sample was taken on this tick.
    Gaze,
    /// A robot joint hit its limit and was clamped.
    JointLimit,
    /// The robot Jacobian was numerically rank-deficient.
    Singular,
    /// The robot target was pulled back onto the planned axis.
    AxisClamp,
    /// Target depth reached; `overshoot` is depth beyond target, metres.
    Complete {
        overshoot: f64,
    },
    Fault {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub w: f64,
    pub alpha_bar: f64,
    pub alpha: f64,
    pub haptic_x: Vec3,
    pub haptic_v: Vec3,
    /// Robot tip in the robot base frame.
    pub robot_x: Vec3,
    /// Robot tip mapped back to the task frame.
    pub tip: Vec3,
    pub depth: f64,
    pub max_depth: f64,
    pub f_sensor: Vec3,
    pub f_fdbk: Vec3,
    pub f_operator: Vec3,
    /// Most recent projected gaze point (world frame), once any gaze has been sampled.
    pub gaze_point: Option<Vec3>,
    pub gaze_object: Option<ObjectLabel>,
    pub gaze_kind: Option<GazeKind>,
    pub phase: PhaseKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
}

impl TraceRecord {
    pub fn has_event(&self, pred: impl Fn(&Event) -> bool) -> bool {
        self.events.iter().any(pred)
    }
}

pub fn write_trace<W: Write>(mut out: W, header: &TraceHeader, records: &[TraceRecord]) -> Result<()> {
    write_line(&mut out, header)?;
    for r in records {
        write_line(&mut out, r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Error::Trace(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> Result<(TraceHeader, Vec<TraceRecord>)> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| Error::Trace("empty trace file".into()))?;
    let header: TraceHeader =
        serde_json::from_str(&first?).map_err(|e| Error::Trace(format!("line 1: bad header: {e}")))?;
    if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
        return Err(Error::Trace(format!(
            "unsupported trace {} v{} (expected {TRACE_FORMAT} v{TRACE_VERSION})",
            header.format, header.version
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let r: TraceRecord = serde_json::from_str(&line?).map_err(|e| Error::Trace(format!("line {}: {e}", i + 1)))?;
        records.push(r);
    }
    Ok((header, records))
}
