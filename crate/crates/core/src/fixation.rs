//! Fixation/saccade segmentation with a two-component Gaussian mixture over gaze-point
//! speed, refit online by EM on a trailing buffer.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{GazeKind, GazePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    /// Seconds between EM refits.
    pub refit_interval: f64,
    /// Length of the trailing speed buffer used by each refit, seconds.
    pub history: f64,
    pub min_samples: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { refit_interval: 2.0, history: 5.0, min_samples: 10, max_iter: 200, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl Component {
    fn log_density(&self, x: f64) -> f64 {
        let d = x - self.mean;
        self.weight.ln() - 0.5 * (2.0 * std::f64::consts::PI * self.variance).ln() - 0.5 * d * d / self.variance
    }
}

/// Component 0 is always the smaller-mean (fixation) component.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmState {
    config: GmmConfig,
    components: Option<[Component; 2]>,
    buffer: VecDeque<(f64, f64)>,
    stream_start: Option<f64>,
    last_refit: Option<f64>,
}

impl GmmState {
    pub fn new(config: GmmConfig) -> Self {
        Self { config, components: None, buffer: VecDeque::new(), stream_start: None, last_refit: None }
    }

    pub fn components(&self) -> Option<&[Component; 2]> {
        self.components.as_ref()
    }

    pub fn is_fitted(&self) -> bool {
        self.components.is_some()
    }

    /// Posterior probability that `speed` belongs to the fixation component.
    pub fn fixation_posterior(&self, speed: f64) -> Option<f64> {
        let [c0, c1] = self.components?;
        let l0 = c0.log_density(speed);
        let l1 = c1.log_density(speed);
        let m = l0.max(l1);
        let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
        Some(e0 / (e0 + e1))
    }

    /// Fixation iff the speed is at or below the fixation mean, or the fixation posterior
    /// strictly exceeds 0.5 (ties go to saccade).
    pub fn kind_for(&self, speed: f64) -> GazeKind {
        match (self.components, self.fixation_posterior(speed)) {
            (Some([c0, _]), Some(p)) => {
                if speed <= c0.mean || p > 0.5 {
                    GazeKind::Fixation
                } else {
                    GazeKind::Saccade
                }
            }
            _ => GazeKind::Unclassified,
        }
    }

    /// Labels `current` from its speed relative to `previous`, buffering the speed and
    /// refitting when the refit interval has elapsed.
    pub fn classify(&mut self, current: &GazePoint, previous: &GazePoint) -> Result<GazePoint> {
        let dt = current.timestamp - previous.timestamp;
        if !(dt > 0.0) {
            return Err(Error::RejectedSample(format!(
                "non-increasing gaze timestamps {} -> {}",
                previous.timestamp, current.timestamp
            )));
        }
        let speed = (current.position - previous.position).norm() / dt;
        if !speed.is_finite() {
            return Err(Error::RejectedSample("non-finite gaze speed".into()));
        }
        let now = current.timestamp;
        self.stream_start.get_or_insert(previous.timestamp);
        self.buffer.push_back((now, speed));
        while self.buffer.front().is_some_and(|&(t, _)| t < now - self.config.history) {
            self.buffer.pop_front();
        }

        let since = now - self.last_refit.or(self.stream_start).unwrap_or(now);
        if since >= self.config.refit_interval && self.buffer.len() >= self.config.min_samples {
            self.refit();
            self.last_refit = Some(now);
        }

        Ok(GazePoint { kind: self.kind_for(speed), ..*current })
    }

    /// EM over the buffered speeds; warm-started from the previous fit when there is one.
    pub fn refit(&mut self) {
        let xs: Vec<f64> = self.buffer.iter().map(|&(_, s)| s).collect();
        if let Some(fit) = fit_two_component(&xs, self.components, &self.config) {
            self.components = Some(fit);
        }
    }
}

fn variance_floor(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    1e-12 + 1e-6 * var
}

fn cold_start(xs: &[f64], floor: f64) -> [Component; 2] {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let half = sorted.len() / 2;
    let stats = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / s.len() as f64;
        (m, v.max(floor))
    };
    let (m0, v0) = stats(&sorted[..half]);
    let (m1, v1) = stats(&sorted[half..]);
    [Component { weight: 0.5, mean: m0, variance: v0 }, Component { weight: 0.5, mean: m1, variance: v1 }]
}

/// Two-component 1-D EM. Returns components ordered by mean.
pub fn fit_two_component(xs: &[f64], init: Option<[Component; 2]>, cfg: &GmmConfig) -> Option<[Component; 2]> {
    if xs.len() < 2 {
        return None;
    }
    let floor = variance_floor(xs);
    let mut comps = init.unwrap_or_else(|| cold_start(xs, floor));
    for c in comps.iter_mut() {
        c.weight = c.weight.clamp(1e-6, 1.0 - 1e-6);
        c.variance = c.variance.max(floor);
    }
    let n = xs.len() as f64;
    let mut resp = vec![0.0; xs.len()];
    let mut prev_ll = f64::NEG_INFINITY;

    for _ in 0..cfg.max_iter {
        // E step: responsibility of component 0
        let mut ll = 0.0;
        for (r, &x) in resp.iter_mut().zip(xs) {
            let l0 = comps[0].log_density(x);
            let l1 = comps[1].log_density(x);
            let m = l0.max(l1);
            let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
            *r = e0 / (e0 + e1);
            ll += m + (e0 + e1).ln();
        }
        // M step
        let n0: f64 = resp.iter().sum();
        let n1 = n - n0;
        if n0 < 1e-9 || n1 < 1e-9 {
            break;
        }
        let m0 = resp.iter().zip(xs).map(|(r, x)| r * x).sum::<f64>() / n0;
        let m1 = resp.iter().zip(xs).map(|(r, x)| (1.0 - r) * x).sum::<f64>() / n1;
        let v0 = resp.iter().zip(xs).map(|(r, x)| r * (x - m0).powi(2)).sum::<f64>() / n0;
        let v1 = resp.iter().zip(xs).map(|(r, x)| (1.0 - r) * (x - m1).powi(2)).sum::<f64>() / n1;
        comps = [
            Component { weight: n0 / n, mean: m0, variance: v0.max(floor) },
            Component { weight: n1 / n, mean: m1, variance: v1.max(floor) },
        ];
        if (ll - prev_ll).abs() <= cfg.tol * ll.abs().max(1.0) {
            break;
        }
        prev_ll = ll;
    }
    if comps[0].mean > comps[1].mean {
        comps.swap(0, 1);
    }
    comps.iter().all(|c| c.mean.is_finite() && c.variance.is_finite()).then_some(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::scene::ObjectLabel;

    fn point(t: f64, x: f64) -> GazePoint {
        GazePoint {
            position: Vec3::new(x, 0.0, 0.0),
            timestamp: t,
            object: ObjectLabel::Drill,
            kind: GazeKind::Unclassified,
        }
    }

    #[test]
    fn cold_start_is_unclassified() {
        let mut g = GmmState::new(GmmConfig::default());
        let out = g.classify(&point(0.1, 0.001), &point(0.0, 0.0)).unwrap();
        assert_eq!(out.kind, GazeKind::Unclassified);
        assert!(!g.is_fitted());
    }

    #[test]
    fn non_increasing_timestamp_rejected() {
        let mut g = GmmState::new(GmmConfig::default());
        assert!(matches!(g.classify(&point(1.0, 0.0), &point(1.0, 0.0)), Err(Error::RejectedSample(_))));
        assert!(g.classify(&point(0.5, 0.0), &point(1.0, 0.0)).is_err());
    }

    #[test]
    fn zero_speed_is_fixation_once_fitted() {
        let mut g = GmmState::new(GmmConfig::default());
        let mut prev = point(0.0, 0.0);
        let mut x = 0.0;
        for i in 1..=180 {
            let t = i as f64 / 60.0;
            x += if i % 10 == 0 { 0.01 } else { 0.0002 };
            let cur = point(t, x);
            g.classify(&cur, &prev).unwrap();
            prev = cur;
        }
        assert!(g.is_fitted());
        let same = point(prev.timestamp + 1.0 / 60.0, x);
        assert_eq!(g.classify(&same, &prev).unwrap().kind, GazeKind::Fixation);
    }

    #[test]
    fn em_orders_components_and_weights_sum_to_one() {
        let xs: Vec<f64> =
            (0..100).map(|i| if i % 3 == 0 { 0.5 + 0.001 * i as f64 } else { 0.01 + 1e-4 * i as f64 }).collect();
        let c = fit_two_component(&xs, None, &GmmConfig::default()).unwrap();
        assert!(c[0].mean < c[1].mean);
        assert!((c[0].weight + c[1].weight - 1.0).abs() < 1e-12);
        assert!(c.iter().all(|c| c.variance > 0.0));
    }
}
