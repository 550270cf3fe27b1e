//! Applies one learning step to a stored drive log. Without arguments it
//! writes the two-drop scenario log to a temporary file and replays that.
//!
//! cargo run -p adaptive-pldf --example replay_log -- [log.json route.json]

use adaptive_pldf::experiment::{replay, two_drop_scenario, ExperimentParams};
use adaptive_pldf::route::{load_route, two_drop_route};
use adaptive_pldf::sim::DriveLog;
use adaptive_pldf::units::mps_to_kmh;

fn main() {
    let params = ExperimentParams::default();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (text, map) = match args.as_slice() {
        [log, route] => (
            std::fs::read_to_string(log).expect("log readable"),
            load_route(&std::fs::read_to_string(route).expect("route readable")).expect("valid route"),
        ),
        _ => {
            let scenario = two_drop_scenario(&params).expect("scenario runs");
            let path = std::env::temp_dir().join("pldf_two_drop_log.json");
            std::fs::write(&path, scenario.log.to_json(false)).expect("temp dir writable");
            println!("wrote {}", path.display());
            (std::fs::read_to_string(&path).expect("just written"), two_drop_route())
        }
    };
    let log = DriveLog::from_json(&text).expect("valid log");
    let baseline = adaptive_pldf::plan_base_profile(&map, &params.planner).expect("valid planner");
    let adjusted = replay(&map, &log, Some(baseline.clone()), &params).expect("log matches route");

    let changed: Vec<usize> = (0..baseline.len()).filter(|&i| adjusted.values()[i] != baseline.values()[i]).collect();
    println!("{} interventions, {} of {} grid points changed", log.interventions.len(), changed.len(), baseline.len());
    if let (Some(&first), Some(&last)) = (changed.first(), changed.last()) {
        println!("changes between {:.0} m and {:.0} m", baseline.distance(first), baseline.distance(last));
        let largest = changed
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let da = (adjusted.values()[a] - baseline.values()[a]).abs();
                let db = (adjusted.values()[b] - baseline.values()[b]).abs();
                da.total_cmp(&db)
            })
            .expect("non-empty");
        println!(
            "largest change at {:.0} m: {:.1} -> {:.1} km/h",
            baseline.distance(largest),
            mps_to_kmh(baseline.values()[largest]),
            mps_to_kmh(adjusted.values()[largest])
        );
    }
}
