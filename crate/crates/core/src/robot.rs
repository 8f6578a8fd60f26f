//! Patient-side drilling robot: haptic-to-robot pose mapping and a resolved-rate servo
//! on a kinematic arm.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_homogeneous, compose, numerical_rank, pseudoinverse, HomTransform, Vec3};
use crate::kinematics::SerialChain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArmKind {
    #[default]
    Revolute3,
    Revolute6,
}

impl ArmKind {
    pub fn chain(self) -> SerialChain {
        match self {
            ArmKind::Revolute3 => SerialChain::default_arm(),
            ArmKind::Revolute6 => SerialChain::revolute6(),
        }
    }

    fn ik_seed(self) -> Vec<f64> {
        match self {
            ArmKind::Revolute3 => vec![0.0, 0.5, 0.8],
            ArmKind::Revolute6 => vec![0.0, 0.5, 0.8, 0.1, 0.3, 0.1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub vertebra_to_base: HomTransform,
    pub task_to_vertebra: HomTransform,
    pub k_scale: f64,
    /// Uniform proportional gain, K_p = k_p I (1/s).
    pub k_p: f64,
    /// Radius of the lateral axis constraint around the planned path, robot frame (m).
    pub lateral_tolerance: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            // entry point in front of the arm, vertebra z (drilling direction) pointing down
            vertebra_to_base: HomTransform::rigid(Vec3::new(0.45, 0.0, 0.2), Vec3::new(std::f64::consts::PI, 0.0, 0.0)),
            task_to_vertebra: HomTransform::identity(),
            k_scale: 3.0,
            k_p: 20.0,
            lateral_tolerance: 2e-4,
        }
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_scale >= 1.0) {
            return Err(Error::Config(format!("k_scale must be >= 1, got {}", self.k_scale)));
        }
        if !(self.k_p > 0.0) {
            return Err(Error::Config(format!("k_p must be > 0, got {}", self.k_p)));
        }
        if !(self.lateral_tolerance >= 0.0) {
            return Err(Error::Config("lateral_tolerance must be >= 0".into()));
        }
        for (name, t) in [("vertebra_to_base", &self.vertebra_to_base), ("task_to_vertebra", &self.task_to_vertebra)] {
            if !t.is_rigid(1e-9) {
                return Err(Error::Config(format!("{name} must be a rigid transform")));
            }
        }
        Ok(())
    }

    /// T_vertebra→base · diag(1,1,1,k_scale) · T_task→vertebra.
    pub fn chain(&self) -> HomTransform {
        compose(
            &compose(&self.vertebra_to_base, &HomTransform::uniform_scale_down(self.k_scale)),
            &self.task_to_vertebra,
        )
    }

    /// Planned drilling axis in the robot base frame as (entry point, unit direction).
    pub fn planned_axis(&self) -> (Vec3, Vec3) {
        let p0 = map_haptic_to_robot(&Vec3::zeros(), self);
        let p1 = map_haptic_to_robot(&Vec3::z(), self);
        (p0, (p1 - p0).normalize())
    }

    /// Projects a robot-frame target into the cylinder of radius `lateral_tolerance`
    /// around the planned axis. Returns the constrained point and whether it moved.
    pub fn constrain_to_axis(&self, target: &Vec3) -> (Vec3, bool) {
        let (p0, dir) = self.planned_axis();
        let rel = target - p0;
        let along = rel.dot(&dir);
        let lateral = rel - dir * along;
        let dist = lateral.norm();
        if dist <= self.lateral_tolerance {
            (*target, false)
        } else {
            (p0 + dir * along + lateral * (self.lateral_tolerance / dist), true)
        }
    }
}

/// Maps a task-frame haptic position into the robot base frame: `T_vb · diag(1, 1, 1, k_scale) · T_tv`.
pub fn map_haptic_to_robot(x: &Vec3, cal: &Calibration) -> Vec3 {
    apply_homogeneous(&cal.chain(), x).expect("calibration chain has positive scale")
}

/// Inverse of [`map_haptic_to_robot`]: robot base frame back to task-frame coordinates.
pub fn map_robot_to_task(x_ur: &Vec3, cal: &Calibration) -> Vec3 {
    let inv = cal.chain().inverse().expect("calibration chain is invertible");
    apply_homogeneous(&inv, x_ur).expect("inverse chain has positive scale")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub q: Vec<f64>,
    pub x_ur: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoOutput {
    pub joint_velocities: Vec<f64>,
    /// Jacobian numerically rank-deficient at this configuration.
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Robot {
    pub arm: SerialChain,
    pub kind: ArmKind,
    pub joint_limit: f64,
}

impl Robot {
    pub fn new(kind: ArmKind, joint_limit: f64) -> Self {
        Self { arm: kind.chain(), kind, joint_limit }
    }

    pub fn state(&self, q: Vec<f64>) -> RobotState {
        let x_ur = self.arm.forward(&q);
        RobotState { q, x_ur }
    }

    /// Joint configuration placing the tip at `target`.
    pub fn initial_state(&self, target: &Vec3) -> Result<RobotState> {
        self.arm
            .solve_position(target, &self.kind.ik_seed(), 1e-12, 500)
            .map(|q| self.state(q))
            .ok_or_else(|| Error::Config(format!("robot cannot reach entry point {target:?}")))
    }

    /// u = K_p J†(q) (x_d - x_ur).
    pub fn servo(&self, state: &RobotState, x_d_ur: &Vec3, cal: &Calibration) -> ServoOutput {
        let j = self.arm.jacobian(&state.q);
        let err = x_d_ur - state.x_ur;
        let u = pseudoinverse(&j) * DVector::from_column_slice(err.as_slice()) * cal.k_p;
        ServoOutput { joint_velocities: u.iter().copied().collect(), singular: numerical_rank(&j) < 3 }
    }

    /// Euler step `q += u dt`, clamped to the joint limits. Returns whether any joint clamped.
    pub fn step(&self, state: &RobotState, u: &[f64], dt: f64) -> Result<(RobotState, bool)> {
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(Error::IntegrationFault {
                t: f64::NAN,
                reason: format!("robot step dt = {dt} outside (0, 0.01]"),
            });
        }
        if u.len() != state.q.len() || !u.iter().all(|v| v.is_finite()) {
            return Err(Error::IntegrationFault { t: f64::NAN, reason: "bad robot joint velocity".into() });
        }
        let mut clamped = false;
        let q = state
            .q
            .iter()
            .zip(u)
            .map(|(q, v)| {
                let next = q + v * dt;
                let c = next.clamp(-self.joint_limit, self.joint_limit);
                clamped |= c != next;
                c
            })
            .collect();
        Ok((self.state(q), clamped))
    }
}

pub fn servo_control(robot: &Robot, state: &RobotState, x_d_ur: &Vec3, cal: &Calibration) -> ServoOutput {
    robot.servo(state, x_d_ur, cal)
}

pub fn step_robot(robot: &Robot, state: &RobotState, u: &[f64], dt: f64) -> Result<(RobotState, bool)> {
    robot.step(state, u, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn identity_cal(k_scale: f64) -> Calibration {
        Calibration {
            vertebra_to_base: HomTransform::identity(),
            task_to_vertebra: HomTransform::identity(),
            k_scale,
            ..Default::default()
        }
    }

    #[test]
    fn scaled_mapping() {
        let p = map_haptic_to_robot(&Vec3::new(0.003, 0.0, 0.006), &identity_cal(3.0));
        assert_relative_eq!(p, Vec3::new(0.001, 0.0, 0.002), epsilon = 1e-15);
    }

    #[test]
    fn unit_scale_is_rigid_mapping() {
        let t = HomTransform::rigid(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.2, 0.0, -0.4));
        let cal = Calibration { vertebra_to_base: t, k_scale: 1.0, ..identity_cal(1.0) };
        let x = Vec3::new(0.01, -0.02, 0.005);
        assert_relative_eq!(map_haptic_to_robot(&x, &cal), t.apply(&x).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn displacement_ratio() {
        let cal = Calibration::default();
        let a = map_haptic_to_robot(&Vec3::new(0.0, 0.0, 0.01), &cal);
        let b = map_haptic_to_robot(&Vec3::new(0.0, 0.0, 0.013), &cal);
        assert_relative_eq!((b - a).norm(), 0.001, epsilon = 1e-15);
    }

    #[test]
    fn inverse_mapping_round_trip() {
        let cal = Calibration::default();
        let x = Vec3::new(0.002, -0.001, 0.017);
        assert_relative_eq!(map_robot_to_task(&map_haptic_to_robot(&x, &cal), &cal), x, epsilon = 1e-14);
    }

    #[test]
    fn zero_error_zero_velocity() {
        let robot = Robot::new(ArmKind::Revolute3, 170f64.to_radians());
        let s = robot.initial_state(&Vec3::new(0.45, 0.0, 0.2)).unwrap();
        let out = robot.servo(&s, &s.x_ur.clone(), &Calibration::default());
        assert!(out.joint_velocities.iter().all(|v| *v == 0.0));
        assert!(!out.singular);
    }

    #[test]
    fn proportional_law_with_identity_jacobian() {
        // gantry-like chain would need prismatic joints; the law itself is checked on J = I
        let j = crate::geometry::Matrix::identity(3, 3);
        let u = pseudoinverse(&j) * DVector::from_column_slice(&[0.0, 0.0, 0.001]) * 10.0;
        assert_relative_eq!(u.as_slice(), &[0.0, 0.0, 0.01][..], epsilon = 1e-15);
    }

    #[test]
    fn euler_step_and_clamp() {
        let robot = Robot::new(ArmKind::Revolute3, 170f64.to_radians());
        let s = robot.state(vec![0.1, 0.5, 0.8]);
        let (same, c) = robot.step(&s, &[0.0; 3], 0.001).unwrap();
        assert_eq!(same, s);
        assert!(!c);
        let (next, _) = robot.step(&s, &[1.0, -2.0, 0.5], 0.001).unwrap();
        for (i, d) in [0.001, -0.002, 0.0005].iter().enumerate() {
            assert_relative_eq!(next.q[i] - s.q[i], d, epsilon = 1e-15);
        }
        let edge = robot.state(vec![2.96, 0.0, 0.0]);
        let (cl, hit) = robot.step(&edge, &[10.0, 0.0, 0.0], 0.01).unwrap();
        assert!(hit);
        assert_eq!(cl.q[0], 170f64.to_radians());
    }

    #[test]
    fn axis_constraint_projects_laterally() {
        let cal = Calibration::default();
        let (p0, dir) = cal.planned_axis();
        assert_relative_eq!(dir, Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-12);
        let off = p0 + Vec3::new(0.003, 0.0, -0.002);
        let (c, moved) = cal.constrain_to_axis(&off);
        assert!(moved);
        assert_relative_eq!(c, p0 + Vec3::new(2e-4, 0.0, -0.002), epsilon = 1e-12);
        let (same, moved) = cal.constrain_to_axis(&(p0 + Vec3::new(1e-4, 0.0, -0.01)));
        assert!(!moved);
        assert_relative_eq!(same, p0 + Vec3::new(1e-4, 0.0, -0.01));
    }

    #[test]
    fn default_calibration_validates() {
        assert!(Calibration::default().validate().is_ok());
        assert!(Calibration { k_scale: 0.5, ..Default::default() }.validate().is_err());
    }
}
