//! Smooths a noisy step with the order-2 Savitzky-Golay filter used by the
//! learning step and prints the coefficients and the result.
//!
//! cargo run -p adaptive-pldf --example savgol -- [window]

use adaptive_pldf::spaa::savgol::SavitzkyGolay;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let window: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(11);
    let filter = SavitzkyGolay::new(window, 2).expect("odd window of at least 5");
    let coefficients: Vec<String> = filter.coefficients().iter().map(|c| format!("{c:.4}")).collect();
    println!("window {window}: [{}]", coefficients.join(", "));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<f64> =
        (0..60).map(|i| if i < 30 { 20.0 } else { 15.0 } + rng.random_range(-0.5..0.5)).collect();
    let smooth = filter.apply(&data);
    for (i, (raw, s)) in data.iter().zip(&smooth).enumerate().step_by(3) {
        println!("{i:3}  raw {raw:6.2}  smoothed {s:6.2}");
    }
}
