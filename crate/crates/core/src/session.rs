//! Fixed-timestep session loop: gaze, attention, allocation weight, haptic device,
//! robot and bone, one trace record per tick.

use crate::attention::{allocation_weight, AllocationParams, AttentionState};
use crate::bone::{check_completion, drilling_force, DrillContact, DrillStatus};
use crate::config::{pinned_alpha_for, SessionConfig};
use crate::error::{Error, Result};
use crate::fixation::GmmState;
use crate::geometry::{is_finite_vec, Vec3};
use crate::haptic::{desired_position, scale_feedback, HapticDevice, HapticState, ImpedanceCommand};
use crate::metrics::{metrics_for_trace, Metrics};
use crate::operator::{make_protocol_script, OperatorSource, Perception, PhaseKind, ScriptedOperator};
use crate::robot::{map_haptic_to_robot, map_robot_to_task, Calibration, Robot, RobotState};
use crate::scene::{project_gaze, GazeKind, GazePoint, ObjectLabel, Scene};
use crate::trace::{Event, TraceHeader, TraceRecord, TRACE_FORMAT, TRACE_VERSION};

pub use crate::config::Mode;

#[derive(Debug, Clone, PartialEq)]
pub enum Finish {
    Complete,
    Timeout,
    Fault(String),
}

/// One simulated procedure. Generic over where operator input comes from.
pub struct Session<O: OperatorSource = ScriptedOperator> {
    config: SessionConfig,
    scene: Scene,
    operator: O,
    distraction: Option<(f64, f64)>,
    gmm: GmmState,
    attention: AttentionState,
    allocation: AllocationParams,
    pinned: Option<f64>,
    device: HapticDevice,
    haptic: HapticState,
    robot: Robot,
    robot_state: RobotState,
    calibration: Calibration,
    contact: DrillContact,
    tick: u64,
    max_ticks: u64,
    gaze_count: u64,
    next_gaze_tick: u64,
    last_gaze: Option<GazePoint>,
    w: f64,
    phase: PhaseKind,
    finished: Option<Finish>,
}

impl Session<ScriptedOperator> {
    /// Session driven by the canonical protocol script.
    pub fn new(config: SessionConfig) -> Result<Self> {
        let script = make_protocol_script(&config.operator, config.seed);
        let distraction = script.distraction_interval();
        Self::with_operator(config, ScriptedOperator { script }, distraction)
    }
}

impl<O: OperatorSource> Session<O> {
    pub fn with_operator(config: SessionConfig, operator: O, distraction: Option<(f64, f64)>) -> Result<Self> {
        config.validate()?;
        let scene = config.scene()?;
        let calibration = config.robot.calibration();
        let robot = Robot::new(config.robot.arm, config.robot.joint_limit_deg.to_radians());
        let robot_state = robot.initial_state(&map_haptic_to_robot(&Vec3::zeros(), &calibration))?;
        let device = HapticDevice::new(config.haptic);
        let haptic = device.rest_state();
        let tip = map_robot_to_task(&robot_state.x_ur, &calibration);
        Ok(Self {
            scene,
            operator,
            distraction,
            gmm: GmmState::new(config.gmm),
            attention: AttentionState::new(config.attention.window, config.attention.ema_time_constant),
            allocation: config.attention.allocation(),
            pinned: config.pinned_alpha(),
            device,
            haptic,
            robot,
            robot_state,
            calibration,
            contact: DrillContact { depth: tip.z, feed_velocity: 0.0, max_depth: tip.z.max(0.0) },
            tick: 0,
            max_ticks: (config.max_duration / config.dt).round() as u64,
            gaze_count: 0,
            next_gaze_tick: 0,
            last_gaze: None,
            w: 0.0,
            phase: PhaseKind::Focus,
            finished: None,
            config,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn operator_mut(&mut self) -> &mut O {
        &mut self.operator
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt
    }

    pub fn finished(&self) -> Option<&Finish> {
        self.finished.as_ref()
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Switches the arbitration mode for the remaining ticks.
    pub fn set_mode(&mut self, mode: crate::config::Mode) {
        self.config.mode = mode;
        self.pinned = pinned_alpha_for(mode, self.config.pin_alpha);
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            format: TRACE_FORMAT.into(),
            version: TRACE_VERSION,
            mode: self.config.mode,
            seed: self.config.seed,
            dt: self.config.dt,
            target_depth: self.config.bone.target_depth,
            distraction: self.distraction,
        }
    }

    fn schedule_gaze(&mut self) {
        let per_tick = self.config.gaze_rate * self.config.dt;
        self.next_gaze_tick = (self.gaze_count as f64 / per_tick - 1e-9).ceil() as u64;
    }

    /// Advances one tick. Returns `None` once the session has finished; a fault yields a
    /// final record carrying the fault event.
    pub fn step(&mut self) -> Option<TraceRecord> {
        if self.finished.is_some() {
            return None;
        }
        match self.advance() {
            Ok(record) => Some(record),
            Err(e) => {
                let t = (self.tick + 1) as f64 * self.config.dt;
                let reason = match e {
                    Error::IntegrationFault { reason, .. } => reason,
                    other => other.to_string(),
                };
                self.finished = Some(Finish::Fault(format!("t = {t:.6} s: {reason}")));
                let mut rec = self.record(t, self.phase, [Vec3::zeros(); 3], Vec::new());
                rec.events.push(Event::Fault { reason });
                Some(rec)
            }
        }
    }

    fn advance(&mut self) -> Result<TraceRecord> {
        let dt = self.config.dt;
        let t = self.tick as f64 * dt;
        let perception =
            Perception { w: self.w, depth: self.contact.depth, target_depth: self.config.bone.target_depth };
        let out = self.operator.sample(t, &self.scene, &perception);
        self.phase = out.phase;
        if !is_finite_vec(&out.hand_force) {
            return Err(Error::IntegrationFault { t, reason: "non-finite operator force".into() });
        }

        let mut events = Vec::new();
        if self.tick == self.next_gaze_tick {
            events.push(Event::Gaze);
            let raw = match &out.gaze {
                Some(sample) => project_gaze(sample, &self.scene),
                None => GazePoint {
                    position: self.last_gaze.map_or(Vec3::zeros(), |g| g.position),
                    timestamp: t,
                    object: ObjectLabel::Background,
                    kind: GazeKind::Unclassified,
                },
            };
            let raw = GazePoint { timestamp: t, ..raw };
            let point = match &self.last_gaze {
                Some(prev) => self.gmm.classify(&raw, prev)?,
                None => raw,
            };
            self.attention.update(point, t)?;
            self.last_gaze = Some(point);
            self.gaze_count += 1;
            self.schedule_gaze();
        }

        let abar = self.pinned.unwrap_or_else(|| self.attention.alpha_filtered());
        let w = allocation_weight(abar, &self.allocation);
        self.w = w;

        let f_operator = out.hand_force;
        let f_sensor = drilling_force(&self.contact, &self.config.bone);
        let f_fdbk = scale_feedback(&f_sensor, w);
        let cmd = ImpedanceCommand { w, x_d: desired_position(&self.haptic.x, &self.device.params), f_fdbk };
        let u = self.device.control(&self.haptic, &cmd);
        let tau_ext = self.device.task_force_to_torque(&self.haptic.theta, &f_operator);
        self.haptic = self.device.step(&self.haptic, &u, &tau_ext, dt).map_err(|e| at_time(e, t))?;

        let (target, clamped) =
            self.calibration.constrain_to_axis(&map_haptic_to_robot(&self.haptic.x, &self.calibration));
        if clamped {
            events.push(Event::AxisClamp);
        }
        let servo = self.robot.servo(&self.robot_state, &target, &self.calibration);
        if servo.singular {
            events.push(Event::Singular);
        }
        let (next, limited) =
            self.robot.step(&self.robot_state, &servo.joint_velocities, dt).map_err(|e| at_time(e, t))?;
        if limited {
            events.push(Event::JointLimit);
        }
        self.robot_state = next;
        let tip = map_robot_to_task(&self.robot_state.x_ur, &self.calibration);
        if !is_finite_vec(&tip) {
            return Err(Error::IntegrationFault { t, reason: "non-finite robot state".into() });
        }
        self.contact = self.contact.advance(tip.z, dt);

        self.tick += 1;
        let t_next = self.tick as f64 * dt;
        if check_completion(&self.contact, &self.config.bone) == DrillStatus::Complete {
            let overshoot = (self.contact.max_depth - self.config.bone.target_depth).max(0.0);
            events.push(Event::Complete { overshoot });
            self.finished = Some(Finish::Complete);
        } else if self.tick >= self.max_ticks {
            self.finished = Some(Finish::Timeout);
        }
        Ok(self.record(t_next, out.phase, [f_sensor, f_fdbk, f_operator], events))
    }

    fn record(&self, t: f64, phase: PhaseKind, forces: [Vec3; 3], events: Vec<Event>) -> TraceRecord {
        let [f_sensor, f_fdbk, f_operator] = forces;
        TraceRecord {
            t,
            w: self.w,
            alpha_bar: self.pinned.unwrap_or_else(|| self.attention.alpha_filtered()),
            alpha: self.attention.alpha(),
            haptic_x: self.haptic.x,
            haptic_v: self.haptic.x_dot,
            robot_x: self.robot_state.x_ur,
            tip: map_robot_to_task(&self.robot_state.x_ur, &self.calibration),
            depth: self.contact.depth,
            max_depth: self.contact.max_depth,
            f_sensor,
            f_fdbk,
            f_operator,
            gaze_point: self.last_gaze.map(|g| g.position),
            gaze_object: self.last_gaze.map(|g| g.object),
            gaze_kind: self.last_gaze.map(|g| g.kind),
            phase,
            events,
        }
    }

    /// Runs until completion, timeout or fault.
    pub fn run_to_end(mut self) -> SessionRun {
        let mut records = Vec::with_capacity(self.max_ticks as usize);
        while let Some(r) = self.step() {
            records.push(r);
        }
        let fault = match self.finished {
            Some(Finish::Fault(ref reason)) => Some(reason.clone()),
            _ => None,
        };
        SessionRun { header: self.header(), records, fault }
    }
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::IntegrationFault { reason, .. } => Error::IntegrationFault { t, reason },
        other => other,
    }
}

/// A finished (or aborted) session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRun {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    /// Set when the session aborted; `records` is then partial.
    pub fault: Option<String>,
}

impl SessionRun {
    pub fn metrics(&self) -> Result<Metrics> {
        metrics_for_trace(&self.header, &self.records)
    }

    pub fn completed(&self) -> bool {
        self.records.last().is_some_and(|r| r.has_event(|e| matches!(e, Event::Complete { .. })))
    }
}

/// Runs the canonical scripted session. A fault is reported as an error.
pub fn run_session(config: &SessionConfig) -> Result<(SessionRun, Metrics)> {
    let run = Session::new(config.clone())?.run_to_end();
    if let Some(reason) = &run.fault {
        return Err(Error::IntegrationFault { t: run.records.last().map_or(0.0, |r| r.t), reason: reason.clone() });
    }
    let metrics = run.metrics()?;
    Ok((run, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ProtocolParams;

    fn short(mode: Mode, secs: f64) -> SessionConfig {
        SessionConfig {
            mode,
            max_duration: secs,
            operator: ProtocolParams { first_focus: 1.0, distraction: 1.0, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn one_record_per_tick() {
        let run = Session::new(short(Mode::Shared, 0.5)).unwrap().run_to_end();
        assert_eq!(run.records.len(), 500);
        for (i, r) in run.records.iter().enumerate() {
            assert_eq!(r.t, (i + 1) as f64 * 0.001);
        }
        assert!(run.fault.is_none());
    }

    #[test]
    fn gaze_sampled_at_rate() {
        let run = Session::new(short(Mode::Shared, 1.0)).unwrap().run_to_end();
        let n = run.records.iter().filter(|r| r.has_event(|e| *e == Event::Gaze)).count();
        assert_eq!(n, 60);
    }

    #[test]
    fn starts_in_human_mode() {
        let run = Session::new(short(Mode::Shared, 0.1)).unwrap().run_to_end();
        assert_eq!(run.records[0].w, 0.0);
        assert_eq!(run.records[0].gaze_kind, Some(GazeKind::Unclassified));
    }

    #[test]
    fn fixed_modes_pin_weight() {
        let robot = Session::new(short(Mode::FullRobot, 0.2)).unwrap().run_to_end();
        assert!(robot.records.iter().all(|r| r.w == 1.0));
        let human = Session::new(short(Mode::FullHuman, 0.2)).unwrap().run_to_end();
        assert!(human.records.iter().all(|r| r.w == 0.0));
    }

    #[test]
    fn set_mode_takes_effect() {
        let mut s = Session::new(short(Mode::FullHuman, 1.0)).unwrap();
        s.step();
        s.set_mode(Mode::FullRobot);
        assert_eq!(s.step().unwrap().w, 1.0);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SessionConfig { dt: 0.0, ..Default::default() };
        assert!(Session::new(cfg).is_err());
    }
}
