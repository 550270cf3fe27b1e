//! km/h only crosses file and UI boundaries; everything else is m/s.

/// One set-speed lever step, km/h.
pub const SET_SPEED_STEP_KMH: f64 = 5.0;

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

pub fn mps_to_kmh(mps: f64) -> f64 {
    mps * 3.6
}

/// One set-speed lever step, m/s.
pub fn set_speed_step() -> f64 {
    kmh_to_mps(SET_SPEED_STEP_KMH)
}
