//! Scripted synthetic surgeon (gaze stream and hand force), plus the adapter for live input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{GazeSample, ObjectLabel, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Focus,
    Distraction,
    Live,
}

/// Proportional push toward `target_depth + lead`, scaled by `(1 - w)` and capped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthDrive {
    pub gain: f64,
    pub lead: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct HandForceProfile {
    pub constant: Vec3,
    pub drive: Option<DepthDrive>,
}

impl HandForceProfile {
    pub fn force(&self, perception: &Perception) -> Vec3 {
        let mut f = self.constant;
        if let Some(d) = self.drive {
            let push = (d.gain * (perception.target_depth + d.lead - perception.depth)).clamp(0.0, d.cap);
            f.z += (1.0 - perception.w.clamp(0.0, 1.0)) * push;
        }
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub kind: PhaseKind,
    /// Seconds; `f64::INFINITY` for an open-ended final phase.
    pub duration: f64,
    pub gaze_target: ObjectLabel,
    /// Standard deviation of fixation placement around the target centre, rad.
    pub gaze_noise: f64,
    pub hand_force: HandForceProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorScript {
    pub phases: Vec<Phase>,
    pub seed: u64,
    /// Time between re-fixations, s.
    pub dwell: f64,
    /// Per-sample gaze jitter within a fixation, rad.
    pub jitter: f64,
    pub eye_origin: Vec3,
}

/// What the scripted operator perceives of the procedure.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Perception {
    pub w: f64,
    pub depth: f64,
    pub target_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorOutput {
    /// `None` means no usable gaze (treated as gaze on the background).
    pub gaze: Option<GazeSample>,
    pub hand_force: Vec3,
    pub phase: PhaseKind,
}

pub trait OperatorSource {
    fn sample(&mut self, t: f64, scene: &Scene, perception: &Perception) -> OperatorOutput;
}

impl OperatorScript {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Config("operator script has no phases".into()));
        }
        if self.phases.iter().any(|p| !(p.duration > 0.0)) {
            return Err(Error::Config("operator phase durations must be > 0".into()));
        }
        if !(self.dwell > 0.0 && self.jitter >= 0.0) {
            return Err(Error::Config("operator dwell must be > 0 and jitter >= 0".into()));
        }
        Ok(())
    }

    /// Phase index active at `t` and the time it started; past the end the last phase holds.
    pub fn phase_at(&self, t: f64) -> (usize, f64) {
        let mut start = 0.0;
        for (i, p) in self.phases.iter().enumerate() {
            if t < start + p.duration || i + 1 == self.phases.len() {
                return (i, start);
            }
            start += p.duration;
        }
        unreachable!("script validated non-empty")
    }

    /// `[start, end]` of the first distraction phase.
    pub fn distraction_interval(&self) -> Option<(f64, f64)> {
        let mut start = 0.0;
        for p in &self.phases {
            if p.kind == PhaseKind::Distraction {
                return Some((start, start + p.duration));
            }
            start += p.duration;
        }
        None
    }

    /// Total focus time available before `horizon`.
    pub fn focus_time_within(&self, horizon: f64) -> f64 {
        let mut start = 0.0;
        let mut total = 0.0;
        for p in &self.phases {
            let end = (start + p.duration).min(horizon);
            if p.kind == PhaseKind::Focus && end > start {
                total += end - start;
            }
            start += p.duration;
            if start >= horizon {
                break;
            }
        }
        total
    }
}

/// Counter-based sub-stream of the script seed.
fn substream(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(stream)) ^ index))
}

fn perturb(dir: &Vec3, yaw: f64, pitch: f64) -> Vec3 {
    let helper = if dir.y.abs() < 0.9 { Vec3::y() } else { Vec3::x() };
    let u = dir.cross(&helper).normalize();
    let v = u.cross(dir);
    (dir + u * yaw.tan() + v * pitch.tan()).normalize()
}

/// Gaze and hand force of the scripted operator at time `t`. Pure in `(script, t)`.
pub fn sample_operator(script: &OperatorScript, scene: &Scene, t: f64, perception: &Perception) -> OperatorOutput {
    let (idx, start) = script.phase_at(t.max(0.0));
    let phase = &script.phases[idx];

    let gaze = scene.find(phase.gaze_target).map(|obj| {
        let base = (obj.shape.center() - script.eye_origin).normalize();
        let fixation = ((t - start).max(0.0) / script.dwell).floor() as u64;
        let mut placement = substream(script.seed, idx as u64, fixation);
        let mut jitter = substream(script.seed, 1 << 32 | idx as u64, t.to_bits());
        let n = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
        let yaw = phase.gaze_noise * n(&mut placement) + script.jitter * n(&mut jitter);
        let pitch = phase.gaze_noise * n(&mut placement) + script.jitter * n(&mut jitter);
        GazeSample::looking_along(t, script.eye_origin, &perturb(&base, yaw, pitch))
    });

    let hand_force = match phase.kind {
        PhaseKind::Distraction => Vec3::zeros(),
        _ => phase.hand_force.force(perception),
    };
    OperatorOutput { gaze, hand_force, phase: phase.kind }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Focus time before the distraction, s.
    pub first_focus: f64,
    pub distraction: f64,
    pub gaze_noise_deg: f64,
    pub dwell: f64,
    pub jitter_deg: f64,
    pub drive_gain: f64,
    pub drive_lead: f64,
    pub drive_cap: f64,
    /// Constant task-frame hand force added during focus phases, N.
    pub extra_force: Vec3,
    pub eye_origin: Vec3,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            first_focus: 8.0,
            distraction: 20.0,
            gaze_noise_deg: 0.5,
            dwell: 0.5,
            jitter_deg: 0.03,
            drive_gain: 5.0,
            drive_lead: 0.005,
            drive_cap: 15.0,
            extra_force: Vec3::zeros(),
            eye_origin: Vec3::zeros(),
        }
    }
}

/// Focus on the drill, a distraction on the display, then focus until completion.
pub fn make_protocol_script(params: &ProtocolParams, seed: u64) -> OperatorScript {
    let drive = DepthDrive { gain: params.drive_gain, lead: params.drive_lead, cap: params.drive_cap };
    let focus_force = HandForceProfile { constant: params.extra_force, drive: Some(drive) };
    let noise = params.gaze_noise_deg.to_radians();
    OperatorScript {
        phases: vec![
            Phase {
                kind: PhaseKind::Focus,
                duration: params.first_focus,
                gaze_target: ObjectLabel::Drill,
                gaze_noise: noise,
                hand_force: focus_force,
            },
            Phase {
                kind: PhaseKind::Distraction,
                duration: params.distraction,
                gaze_target: ObjectLabel::DistractorDisplay,
                gaze_noise: noise,
                hand_force: HandForceProfile::default(),
            },
            Phase {
                kind: PhaseKind::Focus,
                duration: f64::INFINITY,
                gaze_target: ObjectLabel::Drill,
                gaze_noise: noise,
                hand_force: focus_force,
            },
        ],
        seed,
        dwell: params.dwell,
        jitter: params.jitter_deg.to_radians(),
        eye_origin: params.eye_origin,
    }
}

/// Scripted operator as an [`OperatorSource`].
#[derive(Debug, Clone)]
pub struct ScriptedOperator {
    pub script: OperatorScript,
}

impl OperatorSource for ScriptedOperator {
    fn sample(&mut self, t: f64, scene: &Scene, perception: &Perception) -> OperatorOutput {
        sample_operator(&self.script, scene, t, perception)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiveInput {
    pub hand_force: Vec3,
    pub gaze_origin: Vec3,
    pub gaze_direction: Vec3,
    pub client_time: f64,
}

/// Live operator fed from a latest-value mailbox. Input older than `staleness` (simulated
/// seconds) degrades to zero force and background gaze.
#[derive(Debug, Clone)]
pub struct LiveOperator {
    latest: Option<(LiveInput, f64)>,
    pub staleness: f64,
}

impl Default for LiveOperator {
    fn default() -> Self {
        Self { latest: None, staleness: 0.2 }
    }
}

impl LiveOperator {
    /// Records input received at simulated time `now`; latest value wins.
    pub fn push(&mut self, input: LiveInput, now: f64) {
        if input.hand_force.iter().chain(input.gaze_direction.iter()).all(|v| v.is_finite()) {
            self.latest = Some((input, now));
        }
    }

    pub fn clear(&mut self) {
        self.latest = None;
    }
}

impl OperatorSource for LiveOperator {
    fn sample(&mut self, t: f64, _scene: &Scene, _perception: &Perception) -> OperatorOutput {
        match self.latest {
            Some((input, received)) if t - received <= self.staleness && input.gaze_direction.norm() > 0.0 => {
                OperatorOutput {
                    gaze: Some(GazeSample::looking_along(t, input.gaze_origin, &input.gaze_direction.normalize())),
                    hand_force: input.hand_force,
                    phase: PhaseKind::Live,
                }
            }
            _ => OperatorOutput { gaze: None, hand_force: Vec3::zeros(), phase: PhaseKind::Live },
        }
    }
}
