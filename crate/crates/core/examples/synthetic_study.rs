//! Runs the two-system study over a seeded synthetic cohort on the demo route
//! and prints the intervention rates and how close the learned baselines get
//! to each driver's preference.
//!
//! cargo run --release -p adaptive-pldf --example synthetic_study -- [drivers] [seed]

use std::time::Instant;

use adaptive_pldf::driver::default_cohort;
use adaptive_pldf::experiment::{run_study, StudyConfig};
use adaptive_pldf::route::demo_route;

fn main() {
    let mut args = std::env::args().skip(1);
    let drivers: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let started = Instant::now();
    let cohort = default_cohort(drivers, seed);
    let config = StudyConfig { master_seed: seed, ..Default::default() };
    let report = run_study(&demo_route(), &cohort, &config).expect("study runs");
    let summary = &report.summary.cohort;

    println!("{} drivers, {} failed, {:.1} s", summary.drivers, summary.failed, started.elapsed().as_secs_f64());
    for d in &report.summary.drivers {
        let ir: Vec<String> = d.laps.iter().map(|l| format!("{}={:.3}", l.label, l.rates.combined_ir)).collect();
        let rmse: Vec<String> = d.rmse_by_iteration.iter().map(|r| format!("{r:.3}")).collect();
        println!("{:>4}  IR {}  rmse [{}]", d.id, ir.join(" "), rmse.join(", "));
        if let Some(e) = &d.error {
            println!("      error: {e}");
        }
    }
    if let (Some(a), Some(b)) = (summary.static_mean, summary.adaptive_mean) {
        println!("static   pedal {:.3}  set-speed {:.3}  combined {:.3}", a.pedal_ir, a.set_speed_ir, a.combined_ir);
        println!("adaptive pedal {:.3}  set-speed {:.3}  combined {:.3}", b.pedal_ir, b.set_speed_ir, b.combined_ir);
    }
    println!("combined IR ratio {:?}", summary.combined_ir_ratio);
    println!("mean rmse by iteration {:?}", summary.mean_rmse_by_iteration);
    println!("rmse decreasing 0..2 for {:.0}% of drivers", 100.0 * summary.rmse_decreasing_fraction);
}
