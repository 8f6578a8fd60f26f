//! Deterministic desk-scale simulator of gaze-aware shared control for bone drilling.
//!
//! The session loop ties the pieces together: gaze is projected onto a semantic scene
//! and segmented into fixations, the fraction of recent time spent fixating on surgical
//! objects sets an allocation weight `w`, and `w` blends an impedance-controlled haptic
//! device between free human motion and autonomous feed. The robot tracks the device
//! through a scaled calibration chain and a resolved-rate servo while a layered bone
//! model supplies the force feedback.

// `!(x > 0.0)` is used on purpose in validation so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod bone;
pub mod compare;
pub mod config;
pub mod error;
pub mod fixation;
pub mod geometry;
pub mod haptic;
pub mod kinematics;
pub mod mailbox;
pub mod metrics;
pub mod operator;
pub mod robot;
pub mod scene;
pub mod session;
pub mod smoothing;
pub mod telemetry;
pub mod trace;

pub use config::{parse_config, Mode, SessionConfig};
pub use error::{Error, Result};
pub use geometry::{HomTransform, Vec3};
pub use metrics::{compute_metrics, Metrics};
pub use session::{run_session, Session, SessionRun};
