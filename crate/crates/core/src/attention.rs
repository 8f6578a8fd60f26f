//! Windowed attention level, its EMA filter, and the piecewise-linear allocation weight.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{GazeKind, GazePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationParams {
    pub alpha0: f64,
    pub alpha1: f64,
}

impl Default for AllocationParams {
    fn default() -> Self {
        Self { alpha0: 0.1, alpha1: 0.9 }
    }
}

impl AllocationParams {
    pub fn new(alpha0: f64, alpha1: f64) -> Result<Self> {
        let p = Self { alpha0, alpha1 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha0) || !(0.0..=1.0).contains(&self.alpha1) {
            return Err(Error::Config(format!(
                "attention thresholds must lie in [0, 1], got alpha0 = {}, alpha1 = {}",
                self.alpha0, self.alpha1
            )));
        }
        if self.alpha0 >= self.alpha1 {
            return Err(Error::Config(format!(
                "alpha0 ({}) must be strictly below alpha1 ({})",
                self.alpha0, self.alpha1
            )));
        }
        Ok(())
    }
}

/// 0 below `alpha0`, 1 above `alpha1`, linear in between.
pub fn allocation_weight(abar: f64, params: &AllocationParams) -> f64 {
    let AllocationParams { alpha0, alpha1 } = *params;
    if abar <= alpha0 {
        0.0
    } else if abar >= alpha1 {
        1.0
    } else {
        ((abar - alpha0) / (alpha1 - alpha0)).clamp(0.0, 1.0)
    }
}

/// First-order discrete low-pass filter with gain `1 - exp(-dt / tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ema {
    time_constant: f64,
    value: Option<f64>,
}

impl Ema {
    pub fn new(time_constant: f64) -> Self {
        Self { time_constant, value: None }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    /// The first input initialises the filter.
    pub fn update(&mut self, x: f64, dt: f64) -> f64 {
        let next = match self.value {
            None => x,
            Some(v) => v + (1.0 - (-dt / self.time_constant).exp()) * (x - v),
        };
        self.value = Some(next);
        next
    }
}

/// Sliding-window fixation bookkeeping plus the filtered attention level.
#[derive(Debug, Clone)]
pub struct AttentionState {
    window: VecDeque<GazePoint>,
    window_len: f64,
    ema: Ema,
    alpha: f64,
    alpha_filtered: f64,
    last_now: Option<f64>,
}

impl AttentionState {
    pub fn new(window_len: f64, ema_time_constant: f64) -> Self {
        assert!(window_len > 0.0 && ema_time_constant > 0.0);
        Self {
            window: VecDeque::new(),
            window_len,
            ema: Ema::new(ema_time_constant),
            alpha: 0.0,
            alpha_filtered: 0.0,
            last_now: None,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alpha_filtered(&self) -> f64 {
        self.alpha_filtered
    }

    pub fn window(&self) -> impl Iterator<Item = &GazePoint> {
        self.window.iter()
    }

    /// Inserts `p`, slides the window to end at `now`, and returns the filtered level.
    pub fn update(&mut self, p: GazePoint, now: f64) -> Result<f64> {
        if p.timestamp > now {
            return Err(Error::RejectedSample(format!("gaze point at {} is after now = {now}", p.timestamp)));
        }
        if let Some(last) = self.window.back() {
            if p.timestamp < last.timestamp {
                return Err(Error::RejectedSample(format!(
                    "non-monotone gaze timestamp {} after {}",
                    p.timestamp, last.timestamp
                )));
            }
        }
        if self.last_now.is_some_and(|t| now < t) {
            return Err(Error::RejectedSample(format!("clock went backwards to {now}")));
        }
        self.window.push_back(p);

        let left = now - self.window_len;
        // keep the last non-saccade point before the window edge as the predecessor
        let anchor = self.window.iter().rposition(|q| q.timestamp < left && q.kind != GazeKind::Saccade);
        match anchor {
            Some(k) => {
                self.window.drain(..k);
            }
            None => {
                while self.window.front().is_some_and(|q| q.timestamp < left) {
                    self.window.pop_front();
                }
            }
        }

        self.alpha = windowed_attention(self.window.make_contiguous(), now, self.window_len);
        let dt = self.last_now.map_or(0.0, |prev| now - prev);
        self.alpha_filtered = self.ema.update(self.alpha, dt).clamp(0.0, 1.0);
        self.last_now = Some(now);
        Ok(self.alpha_filtered)
    }
}

/// Fraction of `[now - window_len, now]` covered by intervals ending at surgery-relevant
/// fixations. An interval runs from the previous non-saccade point, so saccade samples
/// neither count nor split a fixation. The first in-window interval is clipped at the
/// window edge.
pub fn windowed_attention(points: &[GazePoint], now: f64, window_len: f64) -> f64 {
    let left = now - window_len;
    let mut covered = 0.0;
    let mut prev: Option<f64> = None;
    for p in points.iter().filter(|p| p.kind != GazeKind::Saccade) {
        if let Some(start) = prev {
            if p.timestamp >= left && p.kind == GazeKind::Fixation && p.object.is_surgical() {
                covered += (p.timestamp - start.max(left)).max(0.0);
            }
        }
        prev = Some(p.timestamp);
    }
    (covered / window_len).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::scene::ObjectLabel;

    fn gp(t: f64, object: ObjectLabel, kind: GazeKind) -> GazePoint {
        GazePoint { position: Vec3::zeros(), timestamp: t, object, kind }
    }

    #[test]
    fn weight_examples() {
        let p = AllocationParams::default();
        assert_eq!(allocation_weight(0.05, &p), 0.0);
        assert_eq!(allocation_weight(0.5, &p), 0.5);
        assert_eq!(allocation_weight(0.95, &p), 1.0);
        assert_eq!(allocation_weight(0.1, &p), 0.0);
        assert_eq!(allocation_weight(0.9, &p), 1.0);
    }

    #[test]
    fn threshold_ordering_rejected() {
        assert!(AllocationParams::new(0.5, 0.4).is_err());
        assert!(AllocationParams::new(0.5, 0.5).is_err());
        assert!(AllocationParams::new(-0.1, 0.5).is_err());
        assert!(AllocationParams::new(0.1, 0.9).is_ok());
    }

    fn run(kinds: impl Fn(usize) -> (ObjectLabel, GazeKind)) -> f64 {
        let mut s = AttentionState::new(2.0, 0.5);
        let mut a = 0.0;
        for i in 0..=120 {
            let t = i as f64 / 60.0;
            let (o, k) = kinds(i);
            s.update(gp(t, o, k), t).unwrap();
            a = s.alpha();
        }
        a
    }

    #[test]
    fn full_window_of_drill_fixations() {
        let a = run(|_| (ObjectLabel::Drill, GazeKind::Fixation));
        assert!((a - 1.0).abs() <= 1.0 / 120.0, "{a}");
    }

    #[test]
    fn saccades_or_distractor_give_zero() {
        assert_eq!(run(|_| (ObjectLabel::Drill, GazeKind::Saccade)), 0.0);
        assert_eq!(run(|_| (ObjectLabel::DistractorDisplay, GazeKind::Fixation)), 0.0);
    }

    #[test]
    fn half_window_on_vertebra() {
        let a = run(|i| {
            if i <= 60 {
                (ObjectLabel::Vertebra, GazeKind::Fixation)
            } else {
                (ObjectLabel::DistractorDisplay, GazeKind::Fixation)
            }
        });
        assert!((a - 0.5).abs() <= 1.0 / 120.0, "{a}");
    }

    #[test]
    fn saccade_insertion_leaves_alpha_unchanged() {
        let base: Vec<GazePoint> = (0..=120)
            .map(|i| {
                let o = if i % 40 < 25 { ObjectLabel::Drill } else { ObjectLabel::Background };
                gp(i as f64 / 60.0, o, GazeKind::Fixation)
            })
            .collect();
        let mut with = base.clone();
        for k in [100, 70, 31, 5] {
            with.insert(k, gp(with[k - 1].timestamp + 0.001, ObjectLabel::Drill, GazeKind::Saccade));
        }
        assert_eq!(windowed_attention(&base, 2.0, 1.5), windowed_attention(&with, 2.0, 1.5));
    }

    #[test]
    fn eviction_keeps_a_non_saccade_predecessor() {
        let mut s = AttentionState::new(1.0, 0.5);
        s.update(gp(0.0, ObjectLabel::Drill, GazeKind::Fixation), 0.0).unwrap();
        s.update(gp(0.4, ObjectLabel::Drill, GazeKind::Saccade), 0.4).unwrap();
        s.update(gp(1.5, ObjectLabel::Drill, GazeKind::Fixation), 1.5).unwrap();
        // interval [0, 1.5] clipped to the window [0.5, 1.5]
        assert_eq!(s.alpha(), 1.0);
        assert_eq!(s.window().next().unwrap().timestamp, 0.0);
    }

    #[test]
    fn empty_start_is_zero() {
        let mut s = AttentionState::new(2.0, 0.5);
        let abar = s.update(gp(0.0, ObjectLabel::Drill, GazeKind::Fixation), 0.0).unwrap();
        assert_eq!(abar, 0.0);
        assert_eq!(allocation_weight(abar, &AllocationParams::default()), 0.0);
    }

    #[test]
    fn non_monotone_rejected() {
        let mut s = AttentionState::new(2.0, 0.5);
        s.update(gp(1.0, ObjectLabel::Drill, GazeKind::Fixation), 1.0).unwrap();
        assert!(s.update(gp(0.5, ObjectLabel::Drill, GazeKind::Fixation), 1.0).is_err());
        assert!(s.update(gp(1.5, ObjectLabel::Drill, GazeKind::Fixation), 1.2).is_err());
    }

    #[test]
    fn ema_settles_within_five_time_constants() {
        let mut ema = Ema::new(0.5);
        ema.update(0.0, 0.0);
        let dt = 1.0 / 60.0;
        let mut v = 0.0;
        for _ in 0..(5.0 * 0.5 / dt) as usize + 1 {
            v = ema.update(0.8, dt);
        }
        assert!((v - 0.8).abs() < 0.01 * 0.8);
    }
}
