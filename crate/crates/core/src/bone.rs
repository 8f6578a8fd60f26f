//! Layered axial resistance model standing in for the drill force sensor.
//!
//! Depths are measured along the planned axis in the task frame (z down, origin at
//! the entry point).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Feed velocity over which the dry term ramps in, keeping the force continuous in feed.
pub const DRY_RAMP_VELOCITY: f64 = 1e-4;
const CUT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoneLayer {
    pub start: f64,
    pub end: f64,
    /// N·s/m
    pub viscous: f64,
    /// N
    pub dry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoneModel {
    pub layers: Vec<BoneLayer>,
    pub target_depth: f64,
}

impl Default for BoneModel {
    fn default() -> Self {
        Self {
            layers: vec![
                BoneLayer { start: 0.0, end: 0.004, viscous: 1.0, dry: 0.002 },
                BoneLayer { start: 0.004, end: 0.03, viscous: 0.4, dry: 0.001 },
            ],
            target_depth: 0.03,
        }
    }
}

impl BoneModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_depth > 0.0) {
            return Err(Error::Config("bone target_depth must be > 0".into()));
        }
        let first = self.layers.first().ok_or_else(|| Error::Config("bone model needs at least one layer".into()))?;
        if first.start != 0.0 {
            return Err(Error::Config("first bone layer must start at depth 0".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if !(l.end > l.start) || l.viscous < 0.0 || l.dry < 0.0 {
                return Err(Error::Config(format!("bone layer {i}: need end > start and coefficients >= 0")));
            }
            if let Some(next) = self.layers.get(i + 1) {
                if (next.start - l.end).abs() > 1e-12 {
                    return Err(Error::Config(format!("bone layers {i} and {} are not contiguous", i + 1)));
                }
            }
        }
        if self.layers.last().map_or(0.0, |l| l.end) + 1e-12 < self.target_depth {
            return Err(Error::Config("bone layers must cover [0, target_depth]".into()));
        }
        Ok(())
    }

    /// Layer containing `depth`; depths past the last layer use the last layer.
    pub fn layer_at(&self, depth: f64) -> Option<&BoneLayer> {
        if depth < 0.0 {
            return None;
        }
        self.layers.iter().find(|l| depth < l.end).or(self.layers.last())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DrillContact {
    /// Signed distance of the tip past the entry point along the axis.
    pub depth: f64,
    pub feed_velocity: f64,
    /// Deepest point cut so far; never decreases.
    pub max_depth: f64,
}

impl DrillContact {
    pub fn in_contact(&self) -> bool {
        self.depth >= 0.0
    }

    /// Tip at the cut face (not retracted inside the existing hole).
    pub fn at_cut_face(&self) -> bool {
        self.depth >= self.max_depth - CUT_EPS
    }

    pub fn advance(&self, depth: f64, dt: f64) -> DrillContact {
        DrillContact { depth, feed_velocity: (depth - self.depth) / dt, max_depth: self.max_depth.max(depth) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrillStatus {
    Drilling,
    Complete,
}

/// Axial resistance: `-(dry + viscous * feed)` while cutting uncut material, else zero.
pub fn drilling_force(contact: &DrillContact, model: &BoneModel) -> Vec3 {
    if !contact.in_contact() || !contact.at_cut_face() || contact.feed_velocity <= 0.0 {
        return Vec3::zeros();
    }
    match model.layer_at(contact.depth) {
        Some(layer) => {
            let feed = contact.feed_velocity;
            let dry = layer.dry * (feed / DRY_RAMP_VELOCITY).min(1.0);
            Vec3::new(0.0, 0.0, -(dry + layer.viscous * feed))
        }
        None => Vec3::zeros(),
    }
}

pub fn check_completion(contact: &DrillContact, model: &BoneModel) -> DrillStatus {
    if contact.max_depth.max(contact.depth) >= model.target_depth {
        DrillStatus::Complete
    } else {
        DrillStatus::Drilling
    }
}
