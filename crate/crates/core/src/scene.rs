//! Semantic scene made of primitives, and gaze projection by ray casting.

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{HomTransform, Vec3};

const RAY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectLabel {
    Vertebra,
    Drill,
    DrillingPath,
    DistractorDisplay,
    Background,
}

impl ObjectLabel {
    /// Membership in the surgery-relevant set {vertebra, drill, drilling path}.
    pub fn is_surgical(self) -> bool {
        matches!(self, Self::Vertebra | Self::Drill | Self::DrillingPath)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vertebra => "vertebra",
            Self::Drill => "drill",
            Self::DrillingPath => "drilling_path",
            Self::DistractorDisplay => "distractor_display",
            Self::Background => "background",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Axis-aligned box.
    Box {
        min: Vec3,
        max: Vec3,
    },
    /// Finite capped cylinder; `axis` need not be normalised in config.
    Cylinder {
        center: Vec3,
        axis: Vec3,
        radius: f64,
        half_length: f64,
    },
}

impl Shape {
    pub fn center(&self) -> Vec3 {
        match *self {
            Shape::Sphere { center, .. } | Shape::Cylinder { center, .. } => center,
            Shape::Box { min, max } => (min + max) * 0.5,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let ok = match *self {
            Shape::Sphere { radius, .. } => radius > 0.0,
            Shape::Box { min, max } => (0..3).all(|i| max[i] > min[i]),
            Shape::Cylinder { axis, radius, half_length, .. } => radius > 0.0 && half_length > 0.0 && axis.norm() > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("non-positive dimensions in {self:?}"))
        }
    }

    /// Smallest `t >= 0` at which `origin + t * dir` meets the surface.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.norm_squared();
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                nearest([(-b - sq) / a, (-b + sq) / a])
            }
            Shape::Box { min, max } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for i in 0..3 {
                    if dir[i].abs() < RAY_EPS {
                        if origin[i] < min[i] || origin[i] > max[i] {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (min[i] - origin[i]) / dir[i];
                    let t2 = (max[i] - origin[i]) / dir[i];
                    t_near = t_near.max(t1.min(t2));
                    t_far = t_far.min(t1.max(t2));
                }
                if t_near > t_far || t_far < 0.0 {
                    return None;
                }
                // inside the box: the exit face is the visible surface
                Some(if t_near >= 0.0 { t_near } else { t_far })
            }
            Shape::Cylinder { center, axis, radius, half_length } => {
                let a = axis.normalize();
                let o = origin - center;
                let d_perp = dir - a * dir.dot(&a);
                let o_perp = o - a * o.dot(&a);
                let mut candidates = [f64::NAN; 4];

                let qa = d_perp.norm_squared();
                if qa > RAY_EPS {
                    let qb = d_perp.dot(&o_perp);
                    let qc = o_perp.norm_squared() - radius * radius;
                    let disc = qb * qb - qa * qc;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for (k, t) in [(-qb - sq) / qa, (-qb + sq) / qa].into_iter().enumerate() {
                            if (o + dir * t).dot(&a).abs() <= half_length {
                                candidates[k] = t;
                            }
                        }
                    }
                }
                let da = dir.dot(&a);
                if da.abs() > RAY_EPS {
                    for (k, cap) in [half_length, -half_length].into_iter().enumerate() {
                        let t = (cap - o.dot(&a)) / da;
                        let p = o + dir * t;
                        if (p - a * p.dot(&a)).norm_squared() <= radius * radius {
                            candidates[2 + k] = t;
                        }
                    }
                }
                nearest(candidates)
            }
        }
    }

    /// Signed distance (exact for sphere and box, exact on the surface for the cylinder).
    pub fn implicit_residual(&self, p: &Vec3) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Box { min, max } => {
                let c = (min + max) * 0.5;
                let e = (max - min) * 0.5;
                let q = (p - c).abs() - e;
                q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
            }
            Shape::Cylinder { center, axis, radius, half_length } => {
                let a = axis.normalize();
                let o = p - center;
                let along = o.dot(&a);
                let radial = (o - a * along).norm() - radius;
                let axial = along.abs() - half_length;
                let outside = (radial.max(0.0).powi(2) + axial.max(0.0).powi(2)).sqrt();
                outside + radial.max(axial).min(0.0)
            }
        }
    }
}

fn nearest<const N: usize>(ts: [f64; N]) -> Option<f64> {
    ts.into_iter().filter(|t| t.is_finite() && *t >= 0.0).min_by(|a, b| a.total_cmp(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: String,
    pub label: ObjectLabel,
    pub shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scene {
    objects: Vec<SceneObject>,
}

impl Scene {
    /// Validates dimensions, id uniqueness, and the presence of a background object.
    pub fn new(objects: Vec<SceneObject>) -> Result<Self> {
        let scene = Self { objects };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::HashSet::new();
        for obj in &self.objects {
            obj.shape.validate().map_err(|e| Error::Config(format!("scene object `{}`: {e}", obj.id)))?;
            if !ids.insert(obj.id.as_str()) {
                return Err(Error::Config(format!("duplicate scene object id `{}`", obj.id)));
            }
        }
        if !self.objects.iter().any(|o| o.label == ObjectLabel::Background) {
            return Err(Error::Config("scene needs a background object".into()));
        }
        Ok(())
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn find(&self, label: ObjectLabel) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.label == label)
    }

    /// Nearest hit along the ray as `(t, object)`.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, &SceneObject)> {
        self.objects
            .iter()
            .filter_map(|o| o.shape.intersect(origin, dir).map(|t| (t, o)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Desk-scale operating scene. World frame: eye at the origin looking along +z, y up.
    pub fn desk_default() -> Self {
        let objects = vec![
            SceneObject {
                id: "vertebra".into(),
                label: ObjectLabel::Vertebra,
                shape: Shape::Box { min: Vec3::new(-0.04, -0.075, 0.59), max: Vec3::new(0.04, -0.025, 0.65) },
            },
            SceneObject {
                id: "path".into(),
                label: ObjectLabel::DrillingPath,
                shape: Shape::Cylinder {
                    center: Vec3::new(0.0, -0.035, 0.6),
                    axis: Vec3::y(),
                    radius: 0.004,
                    half_length: 0.02,
                },
            },
            SceneObject {
                id: "drill".into(),
                label: ObjectLabel::Drill,
                shape: Shape::Cylinder {
                    center: Vec3::new(0.0, 0.04, 0.6),
                    axis: Vec3::y(),
                    radius: 0.015,
                    half_length: 0.05,
                },
            },
            SceneObject {
                id: "display".into(),
                label: ObjectLabel::DistractorDisplay,
                shape: Shape::Box { min: Vec3::new(0.23, -0.03, 0.695), max: Vec3::new(0.47, 0.13, 0.705) },
            },
            SceneObject {
                id: "room".into(),
                label: ObjectLabel::Background,
                shape: Shape::Box { min: Vec3::repeat(-10.0), max: Vec3::repeat(10.0) },
            },
        ];
        Self { objects }
    }
}

impl Default for Scene {
    fn default() -> Self {
        Self::desk_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub timestamp: f64,
    /// Eye position in the world frame.
    pub eye_origin: Vec3,
    /// Gaze orientation in the head frame; the gaze ray is the rotated head +z axis.
    pub orientation: UnitQuaternion<f64>,
    pub head_pose: HomTransform,
}

impl GazeSample {
    /// Builds a sample whose world-frame gaze ray points along `dir` (identity head pose).
    pub fn looking_along(timestamp: f64, eye_origin: Vec3, dir: &Vec3) -> Self {
        let orientation = UnitQuaternion::rotation_between(&Vec3::z(), dir).unwrap_or_else(|| {
            // antiparallel to +z
            UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI)
        });
        Self { timestamp, eye_origin, orientation, head_pose: HomTransform::identity() }
    }

    pub fn world_direction(&self) -> Vec3 {
        let head_dir = self.orientation * Vec3::z();
        (self.head_pose.rotation_part() * head_dir).normalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeKind {
    Fixation,
    Saccade,
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePoint {
    pub position: Vec3,
    pub timestamp: f64,
    pub object: ObjectLabel,
    pub kind: GazeKind,
}

impl GazePoint {
    pub fn is_surgery_relevant(&self) -> bool {
        is_surgery_relevant(self)
    }
}

pub fn is_surgery_relevant(p: &GazePoint) -> bool {
    p.object.is_surgical()
}

const MISS_DISTANCE: f64 = 1e3;

/// Nearest ray-primitive hit along the world-frame gaze ray. A ray that escapes the
/// scene (no background configured around the eye) is reported as background far away.
pub fn project_gaze(sample: &GazeSample, scene: &Scene) -> GazePoint {
    let dir = sample.world_direction();
    let (position, object) = match scene.cast(&sample.eye_origin, &dir) {
        Some((t, obj)) => (sample.eye_origin + dir * t, obj.label),
        None => (sample.eye_origin + dir * MISS_DISTANCE, ObjectLabel::Background),
    };
    GazePoint { position, timestamp: sample.timestamp, object, kind: GazeKind::Unclassified }
}
