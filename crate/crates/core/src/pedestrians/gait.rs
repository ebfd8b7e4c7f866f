//! Two-leg walking animation so pedestrians show up to the lidar as a pair of
//! small moving disks instead of one solid body.

use std::f64::consts::TAU;

use glam::DVec2;
use serde::{Deserialize, Serialize};

use crate::world::AgentBody;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegDisk {
    pub center: DVec2,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitState {
    /// Stride phase in `[0, 2pi)`.
    pub phase: f64,
    /// Peak fore/aft displacement of each leg (m).
    pub stride_amplitude: f64,
    pub leg_radius: f64,
    /// Distance covered by one full phase cycle (m).
    pub stride_length: f64,
    /// Lateral offset of each leg from the body center (m).
    pub hip_offset: f64,
}

impl Default for GaitState {
    fn default() -> Self {
        Self {
            phase: 0.0,
            stride_amplitude: 0.12,
            leg_radius: 0.08,
            stride_length: 0.5,
            hip_offset: 0.1,
        }
    }
}

impl GaitState {
    /// Leg disks for the current phase. The legs mirror each other through the body center.
    pub fn legs(&self, body: &AgentBody) -> [LegDisk; 2] {
        let forward = body.pose.heading();
        let left = forward.perp();
        let offset = forward * (self.stride_amplitude * self.phase.sin()) + left * self.hip_offset;
        let c = body.position();
        [
            LegDisk {
                center: c + offset,
                radius: self.leg_radius,
            },
            LegDisk {
                center: c - offset,
                radius: self.leg_radius,
            },
        ]
    }

    /// Farthest any leg surface reaches from the body center.
    pub fn envelope(&self) -> f64 {
        self.stride_amplitude.hypot(self.hip_offset) + self.leg_radius
    }
}

/// Advances the stride phase by the distance walked in `dt` and returns the new legs.
pub fn update_gait(gait: &mut GaitState, body: &AgentBody, dt: f64) -> [LegDisk; 2] {
    debug_assert!(dt > 0.0);
    let speed = body.velocity.length();
    if speed > 0.0 {
        gait.phase = (gait.phase + TAU * speed / gait.stride_length * dt).rem_euclid(TAU);
    }
    gait.legs(body)
}
