//! Wire messages. Every message is one JSON text frame tagged by `type`.

use adaptive_pldf::metrics::InterventionRates;
use adaptive_pldf::profile::SpeedProfile;
use adaptive_pldf::sim::SimState;
use adaptive_pldf::units::mps_to_kmh;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMsg {
    Input { gas: f64, brake: f64 },
    Lever { delta_kmh: f64 },
    Reactivate,
    StartLap,
    AbortLap,
    ApplySpaa,
    ResetLearning,
    LoadRoute { name: String },
}

impl ClientMsg {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Input { .. } => "input",
            Self::Lever { .. } => "lever",
            Self::Reactivate => "reactivate",
            Self::StartLap => "start_lap",
            Self::AbortLap => "abort_lap",
            Self::ApplySpaa => "apply_spaa",
            Self::ResetLearning => "reset_learning",
            Self::LoadRoute { .. } => "load_route",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub d_m: f64,
    pub v_kmh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    /// First message on every connection.
    Welcome { session_id: String, resumed: bool, route: Option<String>, iteration: u32 },
    /// The client message of kind `of` was accepted.
    Ack { of: String },
    Tick {
        t: f64,
        d_m: f64,
        v_kmh: f64,
        target_kmh: f64,
        limit_kmh: f64,
        offset_kmh: f64,
        pldf_active: bool,
        intervening: bool,
    },
    LapDone { lap_id: String, rates: InterventionRates },
    Profile { iteration: u32, points: Vec<ProfilePoint> },
    Error { code: ErrorCode, text: String },
}

impl ServerMsg {
    pub fn tick(s: &SimState) -> Self {
        Self::Tick {
            t: s.t,
            d_m: s.d,
            v_kmh: mps_to_kmh(s.v),
            target_kmh: mps_to_kmh(s.ref_v),
            limit_kmh: mps_to_kmh(s.active_limit),
            offset_kmh: mps_to_kmh(s.set_speed_offset),
            pldf_active: s.pldf_active,
            intervening: s.intervening(),
        }
    }

    pub fn profile(iteration: u32, profile: &SpeedProfile) -> Self {
        let points = (0..profile.len())
            .map(|i| ProfilePoint { d_m: profile.distance(i), v_kmh: mps_to_kmh(profile.values()[i]) })
            .collect();
        Self::Profile { iteration, points }
    }

    pub fn error(code: ErrorCode, text: impl Into<String>) -> Self {
        Self::Error { code, text: text.into() }
    }

    pub fn is_tick(&self) -> bool {
        matches!(self, Self::Tick { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMsg,
    NoLap,
    LapRunning,
    NoRoute,
    UnknownRoute,
    NothingToLearn,
    PldfInactive,
    Braking,
    Internal,
}
