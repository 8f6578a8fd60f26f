//! Session configuration and its TOML file format. Every key is optional; defaults are
//! the reference parameter set.

use serde::{Deserialize, Serialize};

use crate::attention::AllocationParams;
use crate::bone::BoneModel;
use crate::error::{Error, Result};
use crate::fixation::GmmConfig;
use crate::geometry::{HomTransform, Vec3};
use crate::haptic::HapticParams;
use crate::operator::ProtocolParams;
use crate::robot::{ArmKind, Calibration};
use crate::scene::{Scene, SceneObject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// w ≡ 1
    FullRobot,
    /// w ≡ 0
    FullHuman,
    #[default]
    Shared,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::FullRobot, Mode::FullHuman, Mode::Shared];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::FullRobot => "full_robot",
            Mode::FullHuman => "full_human",
            Mode::Shared => "shared",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?} (expected full_robot, full_human or shared)")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    /// Sliding window T, s.
    pub window: f64,
    pub ema_time_constant: f64,
    pub alpha0: f64,
    pub alpha1: f64,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        let a = AllocationParams::default();
        Self { window: 2.0, ema_time_constant: 0.5, alpha0: a.alpha0, alpha1: a.alpha1 }
    }
}

impl AttentionConfig {
    pub fn allocation(&self) -> AllocationParams {
        AllocationParams { alpha0: self.alpha0, alpha1: self.alpha1 }
    }
}

/// Rigid transform given as a translation and roll/pitch/yaw angles (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Pose {
    pub translation: Vec3,
    pub rpy: Vec3,
}

impl Pose {
    pub fn transform(&self) -> HomTransform {
        HomTransform::rigid(self.translation, self.rpy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    pub arm: ArmKind,
    pub joint_limit_deg: f64,
    pub k_scale: f64,
    pub k_p: f64,
    /// Radius of the lateral constraint around the planned axis, robot frame, m.
    pub lateral_tolerance: f64,
    pub vertebra_to_base: Pose,
    pub task_to_vertebra: Pose,
}

impl Default for RobotConfig {
    fn default() -> Self {
        let cal = Calibration::default();
        Self {
            arm: ArmKind::Revolute3,
            joint_limit_deg: 170.0,
            k_scale: cal.k_scale,
            k_p: cal.k_p,
            lateral_tolerance: cal.lateral_tolerance,
            vertebra_to_base: Pose {
                translation: Vec3::new(0.45, 0.0, 0.2),
                rpy: Vec3::new(std::f64::consts::PI, 0.0, 0.0),
            },
            task_to_vertebra: Pose::default(),
        }
    }
}

impl RobotConfig {
    pub fn calibration(&self) -> Calibration {
        Calibration {
            vertebra_to_base: self.vertebra_to_base.transform(),
            task_to_vertebra: self.task_to_vertebra.transform(),
            k_scale: self.k_scale,
            k_p: self.k_p,
            lateral_tolerance: self.lateral_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: Mode,
    /// Control timestep, s.
    pub dt: f64,
    /// Gaze sampling rate, Hz.
    pub gaze_rate: f64,
    pub seed: u64,
    pub max_duration: f64,
    /// Outbound telemetry rate for live sessions, Hz.
    pub telemetry_rate: f64,
    /// Savitzky–Golay window for smoothed output series, s.
    pub smoothing_window: f64,
    /// Holds ᾱ at this value instead of estimating it from gaze.
    pub pin_alpha: Option<f64>,
    pub attention: AttentionConfig,
    pub gmm: GmmConfig,
    pub haptic: HapticParams,
    pub robot: RobotConfig,
    pub bone: BoneModel,
    pub operator: ProtocolParams,
    /// Scene objects; the desk scene when absent.
    pub scene: Option<Vec<SceneObject>>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Shared,
            dt: 0.001,
            gaze_rate: 60.0,
            seed: 0,
            max_duration: 120.0,
            telemetry_rate: 60.0,
            smoothing_window: 1.0,
            pin_alpha: None,
            attention: AttentionConfig::default(),
            gmm: GmmConfig::default(),
            haptic: HapticParams::default(),
            robot: RobotConfig::default(),
            bone: BoneModel::default(),
            operator: ProtocolParams::default(),
            scene: None,
        }
    }
}

fn check(ok: bool, field: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{field}: {msg}")))
    }
}

fn nest(section: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("[{section}] {m}")),
        other => other,
    })
}

impl SessionConfig {
    pub fn scene(&self) -> Result<Scene> {
        match &self.scene {
            Some(objects) => Scene::new(objects.clone()),
            None => Ok(Scene::desk_default()),
        }
    }

    /// Effective ᾱ override: the fixed modes pin it, shared mode uses `pin_alpha`.
    pub fn pinned_alpha(&self) -> Option<f64> {
        pinned_alpha_for(self.mode, self.pin_alpha)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.dt > 0.0 && self.dt <= 0.01, "dt", "must be in (0, 0.01]")?;
        check(self.gaze_rate > 0.0 && self.gaze_rate <= 1.0 / self.dt + 1e-9, "gaze_rate", "must be in (0, 1/dt]")?;
        check(self.max_duration > 0.0 && self.max_duration.is_finite(), "max_duration", "must be > 0")?;
        check(self.telemetry_rate > 0.0, "telemetry_rate", "must be > 0")?;
        check(self.smoothing_window > 0.0, "smoothing_window", "must be > 0")?;
        if let Some(a) = self.pin_alpha {
            check((0.0..=1.0).contains(&a), "pin_alpha", "must be in [0, 1]")?;
        }

        let a = &self.attention;
        nest("attention", check(a.window > 0.0, "window", "must be > 0"))?;
        nest("attention", check(a.ema_time_constant > 0.0, "ema_time_constant", "must be > 0"))?;
        nest("attention", a.allocation().validate())?;

        let g = &self.gmm;
        nest("gmm", check(g.refit_interval > 0.0, "refit_interval", "must be > 0"))?;
        nest("gmm", check(g.history > 0.0, "history", "must be > 0"))?;
        nest("gmm", check(g.min_samples >= 2, "min_samples", "must be >= 2"))?;
        nest("gmm", check(g.max_iter >= 1 && g.tol > 0.0, "max_iter", "need max_iter >= 1 and tol > 0"))?;

        nest("haptic", self.haptic.validate())?;

        let r = &self.robot;
        nest(
            "robot",
            check(r.joint_limit_deg > 0.0 && r.joint_limit_deg <= 180.0, "joint_limit_deg", "must be in (0, 180]"),
        )?;
        nest("robot", r.calibration().validate())?;

        nest("bone", self.bone.validate())?;

        let o = &self.operator;
        nest("operator", check(o.first_focus > 0.0 && o.distraction > 0.0, "first_focus/distraction", "must be > 0"))?;
        nest("operator", check(o.dwell > 0.0, "dwell", "must be > 0"))?;
        nest(
            "operator",
            check(o.gaze_noise_deg >= 0.0 && o.jitter_deg >= 0.0, "gaze_noise_deg/jitter_deg", "must be >= 0"),
        )?;
        nest("operator", check(o.drive_gain >= 0.0 && o.drive_cap >= 0.0, "drive_gain/drive_cap", "must be >= 0"))?;
        let finite = o.extra_force.iter().chain(o.eye_origin.iter()).all(|v| v.is_finite()) && o.drive_lead.is_finite();
        nest("operator", check(finite, "extra_force/eye_origin/drive_lead", "must be finite"))?;

        nest("scene", self.scene().map(|_| ()))?;
        Ok(())
    }
}

pub fn pinned_alpha_for(mode: Mode, pin: Option<f64>) -> Option<f64> {
    match mode {
        Mode::FullRobot => Some(1.0),
        Mode::FullHuman => Some(0.0),
        Mode::Shared => pin,
    }
}

/// Parses and validates a TOML session config.
pub fn parse_config(text: &str) -> Result<SessionConfig> {
    let cfg: SessionConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<SessionConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, SessionConfig::default());
        assert_eq!(cfg.haptic.k_x, 1000.0);
        assert_eq!(cfg.haptic.k_y, 1000.0);
        assert_eq!(cfg.haptic.k_z_max, 50.0);
        assert_eq!(cfg.haptic.damping, Vec3::new(10.0, 10.0, 50.0));
        assert_eq!(cfg.haptic.v_drill, 0.001);
        assert_eq!(cfg.attention.window, 2.0);
        assert_eq!(cfg.robot.k_scale, 3.0);
        assert_eq!((cfg.attention.alpha0, cfg.attention.alpha1), (0.1, 0.9));
    }

    #[test]
    fn explicit_keys_override() {
        let cfg =
            parse_config("mode = \"full_robot\"\nseed = 7\n[haptic]\nk_z_max = 40.0\ndamping = [1.0, 2.0, 3.0]\n")
                .unwrap();
        assert_eq!(cfg.mode, Mode::FullRobot);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.haptic.k_z_max, 40.0);
        assert_eq!(cfg.haptic.damping, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(cfg.haptic.k_x, 1000.0);
    }

    #[test]
    fn threshold_ordering() {
        let err = parse_config("[attention]\nalpha0 = 0.5\nalpha1 = 0.4\n").unwrap_err().to_string();
        assert!(err.contains("attention") && err.contains("alpha0"), "{err}");
    }

    #[test]
    fn zero_timestep() {
        let err = parse_config("dt = 0.0").unwrap_err().to_string();
        assert!(err.contains("dt"), "{err}");
    }

    #[test]
    fn unknown_key_has_location() {
        let err = parse_config("seed = 1\n\n[haptic]\nk_q = 3.0\n").unwrap_err().to_string();
        assert!(err.contains("k_q") && err.contains("line 4"), "{err}");
    }

    #[test]
    fn malformed_document() {
        assert!(parse_config("dt = = 1").is_err());
    }

    #[test]
    fn bone_layers_and_scene_from_toml() {
        let text = r#"
[bone]
target_depth = 0.02
layers = [{ start = 0.0, end = 0.02, viscous = 3.0, dry = 0.5 }]

[[scene]]
id = "room"
label = "background"
shape = { kind = "box", min = [-5.0, -5.0, -5.0], max = [5.0, 5.0, 5.0] }

[[scene]]
id = "drill"
label = "drill"
shape = { kind = "sphere", center = [0.0, 0.0, 0.5], radius = 0.05 }
"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.bone.layers.len(), 1);
        assert_eq!(cfg.scene().unwrap().objects().len(), 2);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("full_human".parse::<Mode>().unwrap(), Mode::FullHuman);
        assert!("robot".parse::<Mode>().is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = SessionConfig { seed: 42, pin_alpha: Some(0.3), ..Default::default() };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
