//! Live driving sessions over a websocket.
//!
//! Each connection drives one [`Session`]: it loads a route, runs laps tick
//! by tick with the client's pedal and lever inputs, and learns a new profile
//! from the last lap on request. The learning state outlives a dropped
//! connection for a while so a client can resume it.
//!
//! HTTP endpoints: `GET /routes`, `GET /profile/{iteration}` (CSV),
//! `GET /history` (JSON manifest), `GET /log/{lap_id}` (JSON drive log). The
//! per-session endpoints take `?session=<id>`, optional while only one
//! session exists. The socket lives at `/session`, `?resume=<id>` reattaches.

pub mod protocol;
pub mod routes;
pub mod server;
pub mod session;

use std::time::Duration;

use adaptive_pldf::experiment::ExperimentParams;
use adaptive_pldf::route::RouteError;
use thiserror::Error;

pub use protocol::{ClientMsg, ErrorCode, ProfilePoint, ServerMsg};
pub use routes::RouteRegistry;
pub use server::{router, serve, AppState};
pub use session::{Session, TICK_HZ};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Route { path: String, source: RouteError },
    #[error("no route files in {0}")]
    NoRoutes(String),
    #[error("pace must be a positive multiple of real time, got {0}")]
    Pace(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceConfig {
    /// Simulated seconds per wall-clock second. `None` runs laps as fast as
    /// the client keeps up, for scripted clients.
    pub pace: Option<f64>,
    /// How long a dropped session waits for its client to come back.
    pub resume_timeout: Duration,
    pub params: ExperimentParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { pace: Some(1.0), resume_timeout: Duration::from_secs(120), params: ExperimentParams::default() }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ServiceError> {
        match self.pace {
            Some(p) if !(p > 0.0 && p.is_finite()) => Err(ServiceError::Pace(p)),
            _ => Ok(()),
        }
    }
}
