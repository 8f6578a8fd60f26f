//! Revolute serial chains: forward kinematics and the positional geometric Jacobian.

use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::geometry::{pseudoinverse, HomTransform, Matrix, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevoluteJoint {
    /// Rotation axis in the frame preceding the joint.
    pub axis: Vec3,
    /// Fixed offset to the next joint (or tool tip), in the rotated joint frame.
    pub link: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerialChain {
    pub base: HomTransform,
    pub joints: Vec<RevoluteJoint>,
}

impl SerialChain {
    /// Yaw-pitch-pitch arm: a vertical column of `l1`, then links `l2` and `l3`.
    pub fn revolute3(l1: f64, l2: f64, l3: f64) -> Self {
        Self {
            base: HomTransform::identity(),
            joints: vec![
                RevoluteJoint { axis: Vec3::z(), link: Vec3::new(0.0, 0.0, l1) },
                RevoluteJoint { axis: Vec3::y(), link: Vec3::new(l2, 0.0, 0.0) },
                RevoluteJoint { axis: Vec3::y(), link: Vec3::new(l3, 0.0, 0.0) },
            ],
        }
    }

    /// Default patient-side arm: link lengths 0.4 / 0.4 / 0.2 m.
    pub fn default_arm() -> Self {
        Self::revolute3(0.4, 0.4, 0.2)
    }

    /// Six revolute joints with a short wrist; only the tip position is servoed.
    pub fn revolute6() -> Self {
        Self {
            base: HomTransform::identity(),
            joints: vec![
                RevoluteJoint { axis: Vec3::z(), link: Vec3::new(0.0, 0.0, 0.4) },
                RevoluteJoint { axis: Vec3::y(), link: Vec3::new(0.4, 0.0, 0.0) },
                RevoluteJoint { axis: Vec3::y(), link: Vec3::new(0.2, 0.0, 0.0) },
                RevoluteJoint { axis: Vec3::x(), link: Vec3::new(0.05, 0.0, 0.0) },
                RevoluteJoint { axis: Vec3::y(), link: Vec3::new(0.05, 0.0, 0.0) },
                RevoluteJoint { axis: Vec3::x(), link: Vec3::new(0.05, 0.0, 0.0) },
            ],
        }
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// World position and world axis of every joint, plus the tip position.
    fn frames(&self, q: &[f64]) -> (Vec<(Vec3, Vec3)>, Vec3) {
        assert_eq!(q.len(), self.joints.len(), "joint vector length");
        let mut rot = Rotation3::from_matrix_unchecked(self.base.rotation_part());
        let mut pos = self.base.translation_part();
        let mut out = Vec::with_capacity(self.joints.len());
        for (joint, &angle) in self.joints.iter().zip(q) {
            let axis_world = rot * joint.axis;
            out.push((pos, axis_world));
            let local = Rotation3::from_axis_angle(&Unit::new_normalize(joint.axis), angle);
            rot *= local;
            pos += rot * joint.link;
        }
        (out, pos)
    }

    pub fn forward(&self, q: &[f64]) -> Vec3 {
        self.frames(q).1
    }

    /// 3 x n positional Jacobian, column i = axis_i x (tip - joint_i).
    pub fn jacobian(&self, q: &[f64]) -> Matrix {
        let (frames, tip) = self.frames(q);
        let mut j = Matrix::zeros(3, frames.len());
        for (i, (p, z)) in frames.iter().enumerate() {
            let col = z.cross(&(tip - p));
            j.set_column(i, &col);
        }
        j
    }

    /// Newton iterations on the positional error through the pseudoinverse.
    pub fn solve_position(&self, target: &Vec3, q0: &[f64], tol: f64, max_iter: usize) -> Option<Vec<f64>> {
        let mut q = q0.to_vec();
        for _ in 0..max_iter {
            let err = target - self.forward(&q);
            if err.norm() < tol {
                return Some(q);
            }
            let dq = pseudoinverse(&self.jacobian(&q)) * nalgebra::DVector::from_column_slice(err.as_slice());
            let scale = (0.2 / dq.amax()).min(1.0);
            for (qi, d) in q.iter_mut().zip(dq.iter()) {
                *qi += scale * d;
            }
        }
        let err = (target - self.forward(&q)).norm();
        (err < tol).then_some(q)
    }
}
