//! Plans the baseline profile of a route and prints it zone by zone.
//!
//! cargo run -p adaptive-pldf --example plan_baseline -- [route.json]

use adaptive_pldf::planner::{plan_base_profile, PlannerParams};
use adaptive_pldf::route::{demo_route, load_route};
use adaptive_pldf::units::mps_to_kmh;

fn main() {
    let map = match std::env::args().nth(1) {
        Some(path) => load_route(&std::fs::read_to_string(&path).expect("route file readable")).expect("valid route"),
        None => demo_route(),
    };
    let profile = plan_base_profile(&map, &PlannerParams::default()).expect("default parameters are valid");
    println!("{}: {:.0} m, {} grid points, travel time {:.1} s", map.name(), map.length(), profile.len(), profile.travel_time());
    for (k, zone) in map.zones().iter().enumerate() {
        let range = profile.index_range(zone.start, map.zone_end(k));
        let values = &profile.values()[range];
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(0.0, f64::max);
        println!(
            "zone {k}: {:6.0}..{:6.0} m  limit {:3.0} km/h  profile {:5.1}..{:5.1} km/h",
            zone.start,
            map.zone_end(k),
            zone.limit_kmh(),
            mps_to_kmh(lo),
            mps_to_kmh(hi)
        );
    }
}
