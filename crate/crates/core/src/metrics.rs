//! The evaluation metrics: drill movement and position spread during the distraction,
//! operator impulse, completion time and overshoot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::trace::{Event, TraceHeader, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Tip path length during the distraction, m.
    pub distraction_movement: f64,
    /// RMS over axes of the tip position standard deviation during the distraction, m.
    pub distraction_position_std: f64,
    /// ∫‖f_operator‖ dt over the whole session, N·s.
    pub operator_impulse: f64,
    /// Time the target depth was reached; `None` if it never was.
    pub completion_time: Option<f64>,
    /// Deepest point beyond the target depth, m.
    pub max_overshoot: f64,
}

pub fn path_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|p| (p[1] - p[0]).norm()).fold(0.0, |a, b| a + b)
}

/// Population standard deviation per axis, combined as the RMS of the three.
pub fn position_std(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let n = points.len() as f64;
    // shifted by the first point so a constant series gives exactly zero
    let d: Vec<Vec3> = points.iter().map(|p| p - points[0]).collect();
    let mean = d.iter().sum::<Vec3>() / n;
    let var = d.iter().map(|p| (p - mean).component_mul(&(p - mean))).sum::<Vec3>() / n;
    ((var.x + var.y + var.z) / 3.0).sqrt()
}

/// Trapezoidal integral of `values` over `times`.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times.windows(2).zip(values.windows(2)).map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0])).fold(0.0, |a, b| a + b)
}

/// Metrics over `records`. Distraction metrics use the records with `t` in `interval`;
/// with no interval they are zero.
pub fn compute_metrics(records: &[TraceRecord], interval: Option<(f64, f64)>, target_depth: f64) -> Result<Metrics> {
    let (movement, spread) = match interval {
        Some((t0, t1)) => {
            let tips: Vec<Vec3> = records.iter().filter(|r| r.t >= t0 && r.t <= t1).map(|r| r.tip).collect();
            if tips.is_empty() {
                return Err(Error::EmptyInterval(t0, t1));
            }
            (path_length(&tips), position_std(&tips))
        }
        None => (0.0, 0.0),
    };
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let forces: Vec<f64> = records.iter().map(|r| r.f_operator.norm()).collect();
    let completion_time = records.iter().find(|r| r.has_event(|e| matches!(e, Event::Complete { .. }))).map(|r| r.t);
    let deepest = records.iter().map(|r| r.max_depth).fold(f64::NEG_INFINITY, f64::max);
    Ok(Metrics {
        distraction_movement: movement,
        distraction_position_std: spread,
        operator_impulse: trapezoid(&times, &forces),
        completion_time,
        max_overshoot: (deepest - target_depth).max(0.0),
    })
}

pub const METRICS_FORMAT: &str = "drillshare-metrics";
pub const METRICS_VERSION: u32 = 1;

/// The metrics file: one JSON document per session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub format: String,
    pub version: u32,
    pub mode: crate::config::Mode,
    pub seed: u64,
    pub metrics: Metrics,
}

impl MetricsDocument {
    pub fn new(header: &TraceHeader, metrics: Metrics) -> Self {
        Self { format: METRICS_FORMAT.into(), version: METRICS_VERSION, mode: header.mode, seed: header.seed, metrics }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialise");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::Trace(format!("metrics file: {e}")))?;
        if doc.format != METRICS_FORMAT || doc.version != METRICS_VERSION {
            return Err(Error::Trace(format!("unsupported metrics document {} v{}", doc.format, doc.version)));
        }
        Ok(doc)
    }
}

pub fn metrics_for_trace(header: &TraceHeader, records: &[TraceRecord]) -> Result<Metrics> {
    compute_metrics(records, header.distraction, header.target_depth)
}
