//! Drives one lap on the demo baseline with a synthetic driver and prints
//! every intervention and the resulting intervention rates.
//!
//! cargo run -p adaptive-pldf --example drive_lap -- [seed]

use std::sync::Arc;

use adaptive_pldf::driver::{default_cohort, make_preference, DriverModel};
use adaptive_pldf::metrics::intervention_rates;
use adaptive_pldf::planner::{plan_base_profile, PlannerParams};
use adaptive_pldf::route::demo_route;
use adaptive_pldf::sim::{run_lap, SimParams};
use adaptive_pldf::units::mps_to_kmh;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let planner = PlannerParams::default();
    let map = Arc::new(demo_route());
    let base = plan_base_profile(&map, &planner).expect("valid planner");
    let spec = default_cohort(1, seed).remove(0);
    println!("driver {spec:?}");
    let pref = make_preference(&map, &base, &spec, &planner);
    let mut driver = DriverModel::new(pref, map.clone(), planner, spec.seed);
    let log = run_lap(map, base, "base", &mut driver, planner, SimParams::default()).expect("lap runs");

    for r in &log.interventions {
        println!(
            "{:<8} {:6.1}..{:6.1} s  {:6.0}..{:6.0} m  offset {:+4.0} km/h  ended by {:?}",
            format!("{:?}", r.kind),
            r.t_start,
            r.t_end,
            r.d_start(),
            r.d_end(),
            mps_to_kmh(r.offset),
            r.ended_by
        );
    }
    let rates = intervention_rates(&log).expect("complete lap");
    println!(
        "lap {:.1} s  pedal IR {:.3}  set-speed IR {:.3}  combined IR {:.3}",
        rates.lap_time, rates.pedal_ir, rates.set_speed_ir, rates.combined_ir
    );
}
