//! One learning step on the two-drop route: a driver presses the gas four
//! times while the function slows down for two limit drops. Prints where each
//! profile starts to decelerate and how steep the deceleration gets.
//!
//! cargo run -p adaptive-pldf --example spaa_two_drop

use adaptive_pldf::experiment::{two_drop_scenario, ExperimentParams};
use adaptive_pldf::profile::SpeedProfile;
use adaptive_pldf::units::{kmh_to_mps, mps_to_kmh};

/// Where the profile first falls 1 km/h below its speed at `from`.
fn decel_onset(p: &SpeedProfile, from: f64, until: f64) -> f64 {
    let plateau = p.at(from);
    p.index_range(from, until)
        .find(|&i| p.values()[i] < plateau - kmh_to_mps(1.0))
        .map_or(until, |i| p.distance(i))
}

fn max_slope(values: &[f64], step: f64) -> f64 {
    values.windows(2).map(|w| ((w[1] - w[0]) / step).abs()).fold(0.0, f64::max)
}

fn main() {
    let out = two_drop_scenario(&ExperimentParams::default()).expect("scenario runs");
    for r in &out.log.interventions {
        println!("{:?} {:.1}..{:.1} m", r.kind, r.d_start(), r.d_end());
    }
    for (name, drop_at, from) in [("first drop", 700.0, 500.0), ("second drop", 1100.0, 950.0)] {
        println!(
            "{name}: baseline slows from {:.0} m, adjusted from {:.0} m",
            decel_onset(&out.baseline, from, drop_at),
            decel_onset(&out.adjusted, from, drop_at)
        );
    }
    let step = out.baseline.step();
    let driver: Vec<f64> = (0..out.baseline.len())
        .map(|i| {
            let d = out.baseline.distance(i);
            out.log.speed_trace().iter().find(|s| s.d >= d).map_or(0.0, |s| s.v)
        })
        .collect();
    let lo = out.baseline.index_range(500.0, 1150.0);
    println!(
        "max |dv/dd| on 500..1150 m: driver {:.4}, adjusted {:.4}, baseline {:.4} 1/s",
        max_slope(&driver[lo.clone()], step),
        max_slope(&out.adjusted.values()[lo.clone()], step),
        max_slope(&out.baseline.values()[lo], step)
    );
    for d in (500..1160).step_by(20) {
        let d = d as f64;
        println!(
            "{d:5.0} m  base {:5.1}  driver {:5.1}  prepro {:5.1}  adjusted {:5.1} km/h",
            mps_to_kmh(out.baseline.at(d)),
            mps_to_kmh(out.log.speed_trace().iter().find(|s| s.d >= d).map_or(0.0, |s| s.v)),
            mps_to_kmh(out.prepro.at(d)),
            mps_to_kmh(out.adjusted.at(d))
        );
    }
}
