//! Three-mode comparison, seed sweeps and Monte Carlo helpers. Independent runs are
//! spread over a rayon pool when the `parallel` feature is on.

use serde::{Deserialize, Serialize};

use crate::config::{Mode, SessionConfig};
use crate::error::Result;
use crate::metrics::Metrics;
use crate::operator::{sample_operator, OperatorScript, Perception};
use crate::scene::{project_gaze, ObjectLabel, Scene};
use crate::session::Session;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        return Execution::Parallel;
        #[cfg(not(feature = "parallel"))]
        Execution::Sequential
    }
}

/// Order-preserving map over `items` under the chosen execution.
pub fn map_with<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: Mode,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    /// full_robot, full_human, shared, in that order.
    pub results: Vec<ModeResult>,
}

impl Comparison {
    pub fn get(&self, mode: Mode) -> Option<&Metrics> {
        self.results.iter().find(|r| r.mode == mode).map(|r| &r.metrics)
    }

    /// Fixed-width text table, one row per mode.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<11} {:>13} {:>12} {:>12} {:>11} {:>13}\n",
            "mode", "movement_mm", "std_mm", "impulse_Ns", "complete_s", "overshoot_mm"
        );
        for r in &self.results {
            let m = &r.metrics;
            let done = m.completion_time.map_or_else(|| "-".to_string(), |t| format!("{t:.3}"));
            out.push_str(&format!(
                "{:<11} {:>13.4} {:>12.4} {:>12.4} {:>11} {:>13.4}\n",
                r.mode.as_str(),
                m.distraction_movement * 1e3,
                m.distraction_position_std * 1e3,
                m.operator_impulse,
                done,
                m.max_overshoot * 1e3
            ));
        }
        out
    }
}

/// Runs one session and returns only its metrics.
pub fn session_metrics(config: &SessionConfig) -> Result<Metrics> {
    let run = Session::new(config.clone())?.run_to_end();
    if let Some(reason) = run.fault {
        return Err(crate::error::Error::IntegrationFault { t: run.records.last().map_or(0.0, |r| r.t), reason });
    }
    run.metrics()
}

/// The three modes with the same seed and script.
pub fn compare_modes(base: &SessionConfig, exec: Execution) -> Result<Comparison> {
    let configs: Vec<SessionConfig> = Mode::ALL.iter().map(|&mode| SessionConfig { mode, ..base.clone() }).collect();
    let metrics = map_with(&configs, exec, session_metrics);
    let results = Mode::ALL
        .iter()
        .zip(metrics)
        .map(|(&mode, m)| m.map(|metrics| ModeResult { mode, metrics }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { seed: base.seed, results })
}

/// [`compare_modes`] for each seed; every (seed, mode) run is an independent task.
pub fn seed_sweep(base: &SessionConfig, seeds: &[u64], exec: Execution) -> Result<Vec<Comparison>> {
    let configs: Vec<SessionConfig> = seeds
        .iter()
        .flat_map(|&seed| Mode::ALL.iter().map(move |&mode| SessionConfig { seed, mode, ..base.clone() }))
        .collect();
    let mut metrics = map_with(&configs, exec, session_metrics).into_iter();
    seeds
        .iter()
        .map(|&seed| {
            let results = Mode::ALL
                .iter()
                .map(|&mode| Ok(ModeResult { mode, metrics: metrics.next().expect("one result per run")? }))
                .collect::<Result<Vec<_>>>()?;
            Ok(Comparison { seed, results })
        })
        .collect()
}

/// Fraction of `times` in which the scripted gaze projects onto `target`.
pub fn gaze_hit_rate(
    script: &OperatorScript,
    scene: &Scene,
    target: ObjectLabel,
    times: &[f64],
    exec: Execution,
) -> f64 {
    let hits = map_with(times, exec, |&t| {
        let out = sample_operator(script, scene, t, &Perception::default());
        out.gaze.is_some_and(|g| project_gaze(&g, scene).object == target)
    });
    hits.iter().filter(|&&h| h).count() as f64 / times.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u64> = (0..100).collect();
        let seq = map_with(&xs, Execution::Sequential, |x| x * x);
        assert_eq!(seq, map_with(&xs, Execution::default(), |x| x * x));
        assert_eq!(seq[7], 49);
    }
}
