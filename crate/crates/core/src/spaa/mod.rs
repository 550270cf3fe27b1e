//! Speed profile adjustment: learns a new baseline from one lap's driver
//! interventions.
//!
//! Pedal interventions are shifted backwards along the road to undo the
//! driver's reaction delay ([`stretch_samples`]), aligned to the surrounding
//! driver trace ([`align_offset`]), averaged with the current baseline and
//! smoothed ([`blend`]). Set-speed interventions are taken over directly as
//! offsets ([`adopt_set_speed`]). [`apply_iteration`] chains all of it.

mod blend;
mod iteration;
mod offsets;
pub mod savgol;
mod stretch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blend::{blend, deviation_segments, mean_profile};
pub use iteration::{apply_iteration, build_prepro_profile, HistoryEntry, IterationState, LapSummary};
pub use offsets::{adopt_set_speed, SetSpeedEntry, SetSpeedOffsetMap};
pub use stretch::{align_offset, effective_alpha, stretch_samples};

use crate::planner::PlannerError;
use crate::profile::ProfileError;

#[derive(Debug, Error)]
pub enum SpaaError {
    #[error("invalid adjustment parameter: {0}")]
    Params(String),
    #[error("drive log is incomplete")]
    IncompleteLog,
    #[error("drive log is for route {log:?}, expected {expected:?}")]
    RouteMismatch { log: String, expected: String },
    #[error("drive log ends at {reached} m, short of the {length} m route")]
    ShortLog { reached: f64, length: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StretchParams {
    /// Stretch factor applied to pedal interventions.
    pub alpha: f64,
    /// The first intervention sample moves back at most this many seconds
    /// of driving at its own speed.
    pub cap_seconds: f64,
    /// Curvature where stretch attenuation starts, 1/m.
    pub kappa_low: f64,
    /// Curvature where stretching is fully suppressed, 1/m.
    pub kappa_high: f64,
    /// Prepro/baseline difference that counts as a deviation, m/s.
    pub deviation_eps: f64,
    /// Deviation runs closer than this are merged, m.
    pub merge_gap: f64,
    /// Savitzky-Golay window length, m.
    pub sg_window: f64,
    pub sg_order: usize,
    /// A set-speed change this soon after entering a zone applies to the whole zone, s.
    pub t_set: f64,
    /// After a pedal intervention the driver trace is used until the vehicle
    /// is back within this band of the tracked profile, m/s. Kept below
    /// `deviation_eps` so deviation segments end on the driver trace.
    pub recovery_tol: f64,
    /// Optional cap of learned speeds above the legal limit, m/s.
    pub max_over_limit: Option<f64>,
}

impl Default for StretchParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            cap_seconds: 3.0,
            kappa_low: 0.005,
            kappa_high: 0.02,
            deviation_eps: 0.15,
            merge_gap: 20.0,
            sg_window: 51.0,
            sg_order: 2,
            t_set: 5.0,
            recovery_tol: 0.1,
            max_over_limit: None,
        }
    }
}

impl StretchParams {
    pub fn validate(&self) -> Result<(), SpaaError> {
        let bad = |msg: String| Err(SpaaError::Params(msg));
        if !(0.0..1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1)", self.alpha));
        }
        if !(self.cap_seconds > 0.0) {
            return bad(format!("cap_seconds {} must be positive", self.cap_seconds));
        }
        if !(self.kappa_low >= 0.0 && self.kappa_low < self.kappa_high) {
            return bad(format!("need 0 <= kappa_low < kappa_high, got {} / {}", self.kappa_low, self.kappa_high));
        }
        if !(self.deviation_eps >= 0.0 && self.merge_gap >= 0.0 && self.t_set >= 0.0 && self.recovery_tol > 0.0) {
            return bad("deviation_eps, merge_gap, t_set must be non-negative and recovery_tol positive".into());
        }
        if self.sg_order != 2 {
            return bad(format!("sg_order must be 2, got {}", self.sg_order));
        }
        if let Some(m) = self.max_over_limit {
            if !(m >= 0.0) {
                return bad(format!("max_over_limit {m} must be non-negative"));
            }
        }
        Ok(())
    }

    /// Savitzky-Golay window in grid points: odd, at least 5.
    pub fn sg_points(&self, step: f64) -> Result<usize, SpaaError> {
        let mut n = (self.sg_window / step).round() as usize;
        if n.is_multiple_of(2) {
            n += 1;
        }
        if n < 5 {
            return Err(SpaaError::Params(format!(
                "sg_window {} m covers {n} points at step {step} m, need at least 5",
                self.sg_window
            )));
        }
        Ok(n)
    }
}
