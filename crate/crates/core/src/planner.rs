//! Baseline speed planning: legal limits and curve speeds, shaped by
//! predictive deceleration and acceleration limits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{ProfileError, SpeedProfile};
use crate::route::{RouteMap, MAX_SPEED};
use crate::spaa::SetSpeedOffsetMap;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("planner parameter {name} must be positive and finite, got {value}")]
    Param { name: &'static str, value: f64 },
    #[error("grid step {0} m exceeds the 5 m maximum")]
    GridStep(f64),
    #[error("set-speed offset span [{start}, {end}) outside route of length {length} m")]
    OffsetSpan { start: f64, end: f64, length: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Comfort limits of the driving function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    /// Comfort acceleration, m/s².
    pub accel_max: f64,
    /// Comfort deceleration as a positive number, m/s².
    pub decel_max: f64,
    /// Lateral acceleration used for curve speeds, m/s².
    pub lat_accel_max: f64,
    /// Profile grid spacing, m.
    pub grid_step: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self { accel_max: 1.2, decel_max: 1.5, lat_accel_max: 3.0, grid_step: 1.0 }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlannerError> {
        for (name, value) in [
            ("accel_max", self.accel_max),
            ("decel_max", self.decel_max),
            ("lat_accel_max", self.lat_accel_max),
            ("grid_step", self.grid_step),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(PlannerError::Param { name, value });
            }
        }
        if self.grid_step > 5.0 {
            return Err(PlannerError::GridStep(self.grid_step));
        }
        Ok(())
    }
}

/// Steady-state curve speed `sqrt(a_lat / kappa)`, capped at [`MAX_SPEED`].
pub fn curve_speed_limit(kappa: f64, params: &PlannerParams) -> f64 {
    if kappa > 0.0 {
        (params.lat_accel_max / kappa).sqrt().min(MAX_SPEED)
    } else {
        MAX_SPEED
    }
}

/// Pointwise `min(legal, curve)` on the planning grid, before any kinematic shaping.
pub fn target_speeds(map: &RouteMap, params: &PlannerParams) -> Vec<f64> {
    let n = SpeedProfile::grid_len(map.length(), params.grid_step);
    (0..n)
        .map(|i| {
            let d = i as f64 * params.grid_step;
            let legal = map.legal_speed_clamped(d);
            legal.min(curve_speed_limit(map.curvature_clamped(d), params))
        })
        .collect()
}

/// Backward pass (brake early enough to meet every drop at its position), then
/// forward pass (accelerate no harder than `accel_max`). Only ever lowers values.
pub fn enforce_kinematics(values: &mut [f64], step: f64, params: &PlannerParams) {
    let decel = 2.0 * params.decel_max * step;
    for i in (0..values.len().saturating_sub(1)).rev() {
        let reachable = (values[i + 1] * values[i + 1] + decel).sqrt();
        if reachable < values[i] {
            values[i] = reachable;
        }
    }
    let accel = 2.0 * params.accel_max * step;
    for i in 1..values.len() {
        let reachable = (values[i - 1] * values[i - 1] + accel).sqrt();
        if reachable < values[i] {
            values[i] = reachable;
        }
    }
}

/// The function's own speed profile for `map`, without any learning.
pub fn plan_base_profile(map: &RouteMap, params: &PlannerParams) -> Result<SpeedProfile, PlannerError> {
    params.validate()?;
    let mut values = target_speeds(map, params);
    enforce_kinematics(&mut values, params.grid_step, params);
    Ok(SpeedProfile::new(0.0, params.grid_step, values)?)
}

/// Re-runs the kinematic passes over an existing profile.
pub fn replan(profile: &SpeedProfile, params: &PlannerParams) -> SpeedProfile {
    let mut values = profile.values().to_vec();
    enforce_kinematics(&mut values, profile.step(), params);
    profile.with_values(values)
}

/// Shifts the profile by each offset inside its span. Curve speeds still cap
/// the result and the kinematic passes are re-run. An empty map returns the
/// profile unchanged.
pub fn apply_set_speed_offsets(
    profile: &SpeedProfile,
    map: &RouteMap,
    offsets: &SetSpeedOffsetMap,
    params: &PlannerParams,
) -> Result<SpeedProfile, PlannerError> {
    if offsets.is_empty() {
        return Ok(profile.clone());
    }
    let mut values = profile.values().to_vec();
    for entry in offsets.entries() {
        if !(entry.start >= 0.0 && entry.end <= map.length() && entry.start < entry.end) {
            return Err(PlannerError::OffsetSpan {
                start: entry.start,
                end: entry.end,
                length: map.length(),
            });
        }
        // a span running to the route end also covers the final grid point
        let end = if entry.end >= map.length() { entry.end + 0.5 * profile.step() } else { entry.end };
        for i in profile.index_range(entry.start, end) {
            let d = profile.distance(i);
            let cap = curve_speed_limit(map.curvature_clamped(d), params);
            let shifted = (values[i] + entry.offset).clamp(0.0, MAX_SPEED);
            // never pull a curve-capped point above its cap, never lift it by a negative offset
            values[i] = if entry.offset >= 0.0 { shifted.min(cap.max(values[i])) } else { shifted };
        }
    }
    enforce_kinematics(&mut values, profile.step(), params);
    Ok(profile.with_values(values))
}
