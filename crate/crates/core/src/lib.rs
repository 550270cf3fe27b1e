//! Predictive longitudinal driving function (PLDF) testbed with iterative
//! speed-profile personalization.
//!
//! * [`route`]: legal limits and curvature along a road.
//! * [`planner`]: the function's own baseline speed profile.
//! * [`sim`]: fixed-step lap simulation with gas, brake and set-speed overrides.
//! * [`spaa`]: learns a new baseline from a lap's interventions.
//! * [`driver`]: synthetic drivers with location-based preferences.
//! * [`metrics`]: intervention rates and profile distances.
//! * [`experiment`]: batch study protocol and file outputs.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod driver;
pub mod experiment;
pub mod metrics;
pub mod planner;
pub mod profile;
pub mod route;
pub mod sim;
pub mod spaa;
pub mod units;

pub use planner::{plan_base_profile, PlannerParams};
pub use profile::SpeedProfile;
pub use route::{load_route, RouteMap};
pub use sim::{run_lap, DriveLog, SimParams, Simulator};
pub use spaa::{apply_iteration, IterationState, StretchParams};
