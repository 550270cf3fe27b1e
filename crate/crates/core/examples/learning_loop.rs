//! One synthetic driver drives the adaptive system for several laps with a
//! learning step after each, showing the intervention rate and the distance
//! to the driver's preference falling.
//!
//! cargo run --release -p adaptive-pldf --example learning_loop -- [laps] [seed]

use std::sync::Arc;

use adaptive_pldf::driver::{default_cohort, make_preference, DriverModel};
use adaptive_pldf::metrics::{intervention_rates, profile_rmse};
use adaptive_pldf::planner::{plan_base_profile, PlannerParams};
use adaptive_pldf::route::demo_route;
use adaptive_pldf::sim::{run_lap, SimParams};
use adaptive_pldf::spaa::{apply_iteration, IterationState, StretchParams};

fn main() {
    let mut args = std::env::args().skip(1);
    let laps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let planner = PlannerParams::default();
    let spaa = StretchParams::default();
    let map = Arc::new(demo_route());
    let base = plan_base_profile(&map, &planner).expect("valid planner");
    let spec = default_cohort(1, seed).remove(0);
    let pref = make_preference(&map, &base, &spec, &planner);
    let v_pref = pref.v_pref.clone();
    let mut driver = DriverModel::new(pref, map.clone(), planner, spec.seed);

    let mut state = IterationState::new(base);
    for lap in 1..=laps {
        let rmse = profile_rmse(&state.baseline, &v_pref).expect("same grid");
        let log = run_lap(map.clone(), state.baseline.clone(), &state.profile_id(), &mut driver, planner, SimParams::default())
            .expect("lap runs");
        let rates = intervention_rates(&log).expect("complete lap");
        println!(
            "lap {lap} on {}: distance to preference {rmse:.3} m/s, {} interventions, combined IR {:.3}",
            state.profile_id(),
            log.interventions.len(),
            rates.combined_ir
        );
        state = apply_iteration(&state, &log, &map, &planner, &spaa).expect("learning step");
    }
}
