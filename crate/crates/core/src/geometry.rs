//! Vector, homogeneous transform and pseudoinverse primitives.

use nalgebra::{DMatrix, Matrix3, Matrix4, Rotation3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Matrix = DMatrix<f64>;

/// Singular values below `PINV_RCOND * sigma_max` are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// 4x4 homogeneous transform. The last row is `(0, 0, 0, s)` with `s > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomTransform(pub Matrix4<f64>);

impl Default for HomTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl HomTransform {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        Self(Matrix4::new_translation(&Vec3::new(x, y, z)))
    }

    pub fn from_rotation(rot: &Rotation3<f64>) -> Self {
        Self(rot.to_homogeneous())
    }

    /// Rigid transform: rotate by roll/pitch/yaw (rad, XYZ fixed axes), then translate.
    pub fn rigid(translation: Vec3, rpy: Vec3) -> Self {
        let rot = Rotation3::from_euler_angles(rpy.x, rpy.y, rpy.z);
        let mut m = rot.to_homogeneous();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self(m)
    }

    /// `diag(1, 1, 1, k)`: homogeneous division by `k` on application.
    pub fn uniform_scale_down(k: f64) -> Self {
        let mut m = Matrix4::identity();
        m[(3, 3)] = k;
        Self(m)
    }

    pub fn rotation_part(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation_part(&self) -> Vec3 {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// True when the upper 3x3 block is a proper rotation and the bottom row is `(0,0,0,1)`.
    pub fn is_rigid(&self, tol: f64) -> bool {
        let r = self.rotation_part();
        let ortho = (r.transpose() * r - Matrix3::identity()).amax() < tol;
        let bottom = self.0.fixed_view::<1, 4>(3, 0).into_owned();
        ortho
            && (r.determinant() - 1.0).abs() < tol
            && (bottom - nalgebra::RowVector4::new(0.0, 0.0, 0.0, 1.0)).amax() < tol
    }

    pub fn compose(&self, other: &HomTransform) -> HomTransform {
        compose(self, other)
    }

    pub fn apply(&self, p: &Vec3) -> Result<Vec3> {
        apply_homogeneous(self, p)
    }

    /// Inverse of the full 4x4 matrix.
    pub fn inverse(&self) -> Option<HomTransform> {
        self.0.try_inverse().map(HomTransform)
    }
}

pub fn compose(a: &HomTransform, b: &HomTransform) -> HomTransform {
    HomTransform(a.0 * b.0)
}

/// Lift `p` to `(x, y, z, 1)`, multiply, divide by the resulting fourth component.
pub fn apply_homogeneous(t: &HomTransform, p: &Vec3) -> Result<Vec3> {
    let h = t.0 * Vector4::new(p.x, p.y, p.z, 1.0);
    let w = h[3];
    if w == 0.0 || !w.is_finite() {
        return Err(Error::DegenerateTransform(w));
    }
    Ok(Vec3::new(h[0] / w, h[1] / w, h[2] / w))
}

/// Moore-Penrose pseudoinverse through the SVD, with a relative rank cutoff.
pub fn pseudoinverse(j: &Matrix) -> Matrix {
    let (m, n) = j.shape();
    if m == 0 || n == 0 {
        return Matrix::zeros(n, m);
    }
    let svd = j.clone().svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let sigma_max = svd.singular_values.max();
    let cutoff = PINV_RCOND * sigma_max;

    let mut sigma_inv = Matrix::zeros(v_t.nrows(), u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            sigma_inv[(i, i)] = 1.0 / s;
        }
    }
    v_t.transpose() * sigma_inv * u.transpose()
}

/// Numerical rank under the same cutoff as [`pseudoinverse`].
pub fn numerical_rank(j: &Matrix) -> usize {
    if j.is_empty() {
        return 0;
    }
    let sv = j.clone().singular_values();
    let cutoff = PINV_RCOND * sv.max();
    sv.iter().filter(|&&s| s > cutoff && s > 0.0).count()
}

pub fn is_finite_vec(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}
