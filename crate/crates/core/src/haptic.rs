//! Simulated 3-DOF haptic device and its shared interaction controller.
//!
//! Task frame: origin at the drilling entry point, z pointing down the planned axis.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{HomTransform, Vec3};
use crate::kinematics::SerialChain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HapticKinematicsKind {
    /// Three prismatic axes aligned with the task frame (J = I).
    #[default]
    Gantry,
    /// Three revolute joints; exercises a configuration-dependent Jacobian.
    Revolute3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapticParams {
    pub kinematics: HapticKinematicsKind,
    /// Diagonal joint-space mass (kg for the gantry, kg·m² for revolute joints).
    pub mass: Vec3,
    /// Task-space damping diag(d_x, d_y, d_z), N·s/m.
    pub damping: Vec3,
    pub k_x: f64,
    pub k_y: f64,
    pub k_z_max: f64,
    pub v_drill: f64,
    /// Mass supported against gravity at the end effector, kg.
    pub payload: f64,
    pub gravity: f64,
}

impl Default for HapticParams {
    fn default() -> Self {
        Self {
            kinematics: HapticKinematicsKind::Gantry,
            mass: Vec3::repeat(0.1),
            damping: Vec3::new(10.0, 10.0, 50.0),
            k_x: 1000.0,
            k_y: 1000.0,
            k_z_max: 50.0,
            v_drill: 0.001,
            payload: 0.1,
            gravity: 9.81,
        }
    }
}

impl HapticParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.mass.iter().chain(self.damping.iter()).all(|v| *v > 0.0)
            && self.k_x > 0.0
            && self.k_y > 0.0
            && self.k_z_max > 0.0;
        if !positive {
            return Err(Error::Config("haptic mass, damping and stiffness entries must be > 0".into()));
        }
        if !(self.v_drill >= 0.0 && self.payload >= 0.0 && self.gravity.is_finite()) {
            return Err(Error::Config("haptic v_drill and payload must be >= 0".into()));
        }
        Ok(())
    }

    pub fn mass_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.mass)
    }

    pub fn damping_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.damping)
    }
}

/// Kinematic model of the device, mapping joints to task-frame positions.
#[derive(Debug, Clone, PartialEq)]
pub enum HapticKinematics {
    Gantry,
    Revolute3 { chain: SerialChain, home: Vec3, home_tip: Vec3 },
}

impl HapticKinematics {
    pub fn new(kind: HapticKinematicsKind) -> Self {
        match kind {
            HapticKinematicsKind::Gantry => Self::Gantry,
            HapticKinematicsKind::Revolute3 => {
                let mut chain = SerialChain::revolute3(0.0, 0.12, 0.12);
                // device z flipped so that task z points down
                chain.base = HomTransform::rigid(Vec3::zeros(), Vec3::new(std::f64::consts::PI, 0.0, 0.0));
                let home = Vec3::new(0.0, -0.6, 1.2);
                let home_tip = chain.forward(home.as_slice());
                Self::Revolute3 { chain, home, home_tip }
            }
        }
    }

    pub fn home(&self) -> Vec3 {
        match self {
            Self::Gantry => Vec3::zeros(),
            Self::Revolute3 { home, .. } => *home,
        }
    }

    pub fn forward(&self, theta: &Vec3) -> Vec3 {
        match self {
            Self::Gantry => *theta,
            Self::Revolute3 { chain, home_tip, .. } => chain.forward(theta.as_slice()) - home_tip,
        }
    }

    pub fn jacobian(&self, theta: &Vec3) -> Matrix3<f64> {
        match self {
            Self::Gantry => Matrix3::identity(),
            Self::Revolute3 { chain, .. } => chain.jacobian(theta.as_slice()).fixed_view::<3, 3>(0, 0).into_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HapticState {
    pub theta: Vec3,
    pub theta_dot: Vec3,
    pub x: Vec3,
    pub x_dot: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpedanceCommand {
    pub w: f64,
    pub x_d: Vec3,
    pub f_fdbk: Vec3,
}

/// The device: parameters plus kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct HapticDevice {
    pub params: HapticParams,
    pub kinematics: HapticKinematics,
}

impl HapticDevice {
    pub fn new(params: HapticParams) -> Self {
        Self { kinematics: HapticKinematics::new(params.kinematics), params }
    }

    /// At rest at the task-frame origin.
    pub fn rest_state(&self) -> HapticState {
        self.state_from_joints(self.kinematics.home(), Vec3::zeros())
    }

    pub fn state_from_joints(&self, theta: Vec3, theta_dot: Vec3) -> HapticState {
        let x = self.kinematics.forward(&theta);
        let x_dot = self.kinematics.jacobian(&theta) * theta_dot;
        HapticState { theta, theta_dot, x, x_dot }
    }

    /// Generalised gravity force of an end-effector point mass (gravity along +z).
    pub fn gravity_torque(&self, theta: &Vec3) -> Vec3 {
        let weight = Vec3::new(0.0, 0.0, self.params.payload * self.params.gravity);
        -(self.kinematics.jacobian(theta).transpose() * weight)
    }

    /// Maps a task-space force to joint torques.
    pub fn task_force_to_torque(&self, theta: &Vec3, f: &Vec3) -> Vec3 {
        self.kinematics.jacobian(theta).transpose() * f
    }

    pub fn control(&self, state: &HapticState, cmd: &ImpedanceCommand) -> Vec3 {
        haptic_control(self, state, cmd)
    }

    pub fn step(&self, state: &HapticState, u: &Vec3, tau_ext: &Vec3, dt: f64) -> Result<HapticState> {
        step_dynamics(self, state, u, tau_ext, dt)
    }
}

/// K(w) = diag(k_x, k_y, w k_z_max).
pub fn stiffness_matrix(w: f64, params: &HapticParams) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vec3::new(params.k_x, params.k_y, w * params.k_z_max))
}

/// Equilibrium point for autonomous drilling: on the axis, `v_drill d_z / k_z_max` ahead of x.
pub fn desired_position(x: &Vec3, params: &HapticParams) -> Vec3 {
    let k1_inv = stiffness_matrix(1.0, params).try_inverse().expect("k_z_max > 0");
    let lead = k1_inv * params.damping_matrix() * Vec3::repeat(params.v_drill);
    Vec3::new(0.0, 0.0, lead.z + x.z)
}

pub fn scale_feedback(f_sensor: &Vec3, w: f64) -> Vec3 {
    f_sensor * (1.0 - 0.5 * w)
}

/// u = Jᵀ (K(w)(x_d - x) - D ẋ + f_fdbk) + g(θ)
pub fn haptic_control(device: &HapticDevice, state: &HapticState, cmd: &ImpedanceCommand) -> Vec3 {
    let p = &device.params;
    let task_force = stiffness_matrix(cmd.w, p) * (cmd.x_d - state.x) - p.damping_matrix() * state.x_dot + cmd.f_fdbk;
    device.task_force_to_torque(&state.theta, &task_force) + device.gravity_torque(&state.theta)
}

/// Semi-implicit Euler on M θ̈ + g(θ) = τ_ext + u (Coriolis neglected).
pub fn step_dynamics(
    device: &HapticDevice,
    state: &HapticState,
    u: &Vec3,
    tau_ext: &Vec3,
    dt: f64,
) -> Result<HapticState> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::IntegrationFault {
            t: f64::NAN,
            reason: format!("haptic step dt = {dt} outside (0, 0.01]"),
        });
    }
    if !(u.iter().chain(tau_ext.iter()).all(|v| v.is_finite())) {
        return Err(Error::IntegrationFault { t: f64::NAN, reason: "non-finite haptic torque".into() });
    }
    let net = tau_ext + u - device.gravity_torque(&state.theta);
    let accel = net.component_div(&device.params.mass);
    let theta_dot = state.theta_dot + accel * dt;
    let theta = state.theta + theta_dot * dt;
    let next = device.state_from_joints(theta, theta_dot);
    if !(next.x.iter().chain(next.x_dot.iter()).all(|v| v.is_finite())) {
        return Err(Error::IntegrationFault { t: f64::NAN, reason: "non-finite haptic state".into() });
    }
    Ok(next)
}
