//! Synthetic drivers: a preferred speed over the route plus a delayed,
//! overreacting way of enforcing it with pedals and the set-speed lever.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::planner::{curve_speed_limit, PlannerParams};
use crate::profile::SpeedProfile;
use crate::route::RouteMap;
use crate::sim::{DriverInputs, InputSource, SimState};
use crate::units::{kmh_to_mps, set_speed_step};

/// Curve speed preferences: `count` curves, each faster or slower by a
/// random amount in `[min_kmh, max_kmh]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePerturbation {
    pub count: usize,
    pub min_kmh: f64,
    pub max_kmh: f64,
}

/// Limit-change timing preferences: the speed change around `count` zone
/// boundaries moved earlier or later by `[min_m, max_m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPerturbation {
    pub count: usize,
    pub min_m: f64,
    pub max_m: f64,
}

/// Straight-road speed preferences: zones whose flat part is offset by one of
/// `offsets_kmh`. `count: None` selects every zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraightPerturbation {
    pub count: Option<usize>,
    pub offsets_kmh: Vec<f64>,
}

/// One synthetic driver as listed in a cohort file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSpec {
    pub id: String,
    pub seed: u64,
    pub curves: Option<CurvePerturbation>,
    pub transitions: Option<TransitionPerturbation>,
    pub straights: Option<StraightPerturbation>,
    pub set_speed_user: bool,
    pub tol_mps: f64,
    pub react_delay_s: f64,
    pub overreact_gain: f64,
    /// Amplitude of a per-lap wobble on the preference, m/s. Zero disables it.
    pub pref_jitter_mps: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            id: "driver".into(),
            seed: 0,
            curves: None,
            transitions: None,
            straights: None,
            set_speed_user: false,
            tol_mps: 1.0,
            react_delay_s: 0.7,
            overreact_gain: 1.4,
            pref_jitter_mps: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub v_pref: SpeedProfile,
    /// Errors inside this band are accepted, m/s.
    pub tol: f64,
    pub react_delay: f64,
    pub overreact_gain: f64,
    pub set_speed_user: bool,
    pub jitter: f64,
}

/// Grid runs where a curve, not the legal limit, sets the target speed.
fn curve_regions(map: &RouteMap, grid: &SpeedProfile, planner: &PlannerParams) -> Vec<Range<usize>> {
    let mut regions = Vec::new();
    let mut open = None;
    for i in 0..grid.len() {
        let d = grid.distance(i);
        let binding = curve_speed_limit(map.curvature_clamped(d), planner) < map.legal_speed_clamped(d);
        match (binding, open) {
            (true, None) => open = Some(i),
            (false, Some(s)) => {
                regions.push(s..i);
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        regions.push(s..grid.len());
    }
    regions
}

fn pick<T: Clone>(rng: &mut ChaCha8Rng, items: &[T], count: usize) -> Vec<T> {
    let mut pool = items.to_vec();
    let mut out = Vec::new();
    while out.len() < count && !pool.is_empty() {
        let k = rng.random_range(0..pool.len());
        out.push(pool.remove(k));
    }
    out
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let magnitude = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    if rng.random_bool(0.5) { magnitude } else { -magnitude }
}

/// Builds a driver's preferred speed from the baseline and a perturbation spec.
/// Deterministic in `spec.seed`.
pub fn make_preference(
    map: &RouteMap,
    baseline: &SpeedProfile,
    spec: &PerturbationSpec,
    planner: &PlannerParams,
) -> PreferenceProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut v = baseline.values().to_vec();
    let step = baseline.step();

    if let Some(tp) = &spec.transitions {
        let boundaries: Vec<usize> = (1..map.zones().len()).collect();
        for zone in pick(&mut rng, &boundaries, tp.count) {
            let shift = signed(&mut rng, tp.min_m, tp.max_m);
            let at = map.zones()[zone].start;
            let before = map.zones()[zone - 1].limit();
            let after = map.zones()[zone].limit();
            let accel = if after < before { planner.decel_max } else { planner.accel_max };
            let ramp = (before * before - after * after).abs() / (2.0 * accel);
            let reach = ramp + tp.max_m + 100.0;
            let source = v.clone();
            let shifted = baseline.with_values(source);
            for i in baseline.index_range(at - reach, at + reach) {
                v[i] = shifted.at(baseline.distance(i) - shift);
            }
        }
    }

    if let Some(cp) = &spec.curves {
        const TAPER: f64 = 80.0;
        let regions = curve_regions(map, baseline, planner);
        for region in pick(&mut rng, &regions, cp.count) {
            let delta = kmh_to_mps(signed(&mut rng, cp.min_kmh, cp.max_kmh));
            let a = baseline.distance(region.start);
            let b = baseline.distance(region.end - 1);
            for i in baseline.index_range(a - TAPER, b + TAPER + step) {
                let d = baseline.distance(i);
                let outside = (a - d).max(d - b).max(0.0);
                v[i] += delta * (1.0 - outside / TAPER).max(0.0);
            }
        }
    }

    if let Some(sp) = &spec.straights {
        let zones: Vec<usize> = (0..map.zones().len()).collect();
        let chosen = match sp.count {
            None => zones,
            Some(n) => pick(&mut rng, &zones, n),
        };
        for zone in chosen {
            if sp.offsets_kmh.is_empty() {
                break;
            }
            let delta = kmh_to_mps(sp.offsets_kmh[rng.random_range(0..sp.offsets_kmh.len())]);
            let limit = map.zones()[zone].limit();
            let mut end = map.zone_end(zone);
            if zone + 1 == map.zones().len() {
                end += 0.5 * step;
            }
            for i in baseline.index_range(map.zones()[zone].start, end) {
                if (baseline.values()[i] - limit).abs() < 1e-9 {
                    v[i] += delta;
                }
            }
        }
    }

    for x in &mut v {
        *x = x.max(1.0);
    }
    if spec.curves.is_none() && spec.transitions.is_none() && spec.straights.is_none() {
        v = baseline.values().to_vec();
    }

    PreferenceProfile {
        v_pref: baseline.with_values(v),
        tol: spec.tol_mps,
        react_delay: spec.react_delay_s,
        overreact_gain: spec.overreact_gain.max(1.0),
        set_speed_user: spec.set_speed_user,
        jitter: spec.pref_jitter_mps,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pedal {
    Idle,
    Gas,
    Brake,
}

/// Error (m/s) at which an unexaggerated driver uses the full pedal.
const GAS_FULL_ERROR: f64 = 2.0;
const BRAKE_FULL_ERROR: f64 = 4.0;
const MIN_PEDAL: f64 = 0.1;
/// How far ahead a lever user checks that the preference stays flat, m.
const LEVER_LOOKAHEAD: f64 = 100.0;

/// Closed-loop synthetic driver.
///
/// Reacts once an error beyond `tol` has persisted for `react_delay`: the
/// lever on flat straights (lever users), otherwise gas when too slow or
/// brake when too fast, with pedal travel scaled by `overreact_gain`. The
/// pedal is released when the error changes sign; after braking the
/// function is switched back on one delay later.
#[derive(Debug, Clone)]
pub struct DriverModel {
    pref: PreferenceProfile,
    map: Arc<RouteMap>,
    planner: PlannerParams,
    seed: u64,
    lap: u64,
    phase: f64,
    pedal: Pedal,
    slow_since: Option<f64>,
    fast_since: Option<f64>,
    brake_released_at: Option<f64>,
    /// Previous `(d, profile speed without the live offset)`.
    last_base: Option<(f64, f64)>,
    /// Zone and speed the driver last dialed in with the lever.
    dialed: Option<(usize, f64)>,
}

impl DriverModel {
    pub fn new(pref: PreferenceProfile, map: Arc<RouteMap>, planner: PlannerParams, seed: u64) -> Self {
        Self {
            pref,
            map,
            planner,
            seed,
            lap: 0,
            phase: 0.0,
            pedal: Pedal::Idle,
            slow_since: None,
            fast_since: None,
            brake_released_at: None,
            last_base: None,
            dialed: None,
        }
    }

    pub fn preference(&self) -> &PreferenceProfile {
        &self.pref
    }

    fn preferred(&self, d: f64) -> f64 {
        let base = self.pref.v_pref.at(d);
        if self.pref.jitter == 0.0 {
            return base;
        }
        (base + self.pref.jitter * (d / 700.0 * std::f64::consts::TAU + self.phase).sin()).max(0.0)
    }

    /// Offset the lever should hold here, or `None` if the situation is not a
    /// flat straight the lever can fix. `base` is the profile speed without the
    /// live offset and `slope` its observed gradient, 1/s.
    fn lever_target(&self, state: &SimState, pref: f64, base: f64, slope: f64) -> Option<f64> {
        if !self.pref.set_speed_user || !state.pldf_active {
            return None;
        }
        let zone = self.map.zone_index_clamped(state.d);
        let zone_end = self.map.zone_end(zone);
        let ahead = state.d + LEVER_LOOKAHEAD;
        if ahead >= zone_end
            || (self.preferred(ahead) - pref).abs() > self.pref.tol
            || slope.abs() * LEVER_LOOKAHEAD > self.pref.tol
        {
            return None;
        }
        let step = set_speed_step();
        let desired = ((pref - base) / step).round() * step;
        let cap = curve_speed_limit(self.map.max_curvature(state.d, ahead), &self.planner);
        (cap >= base + desired.max(0.0)).then_some(desired)
    }
}

impl InputSource for DriverModel {
    fn reset(&mut self) {
        self.lap += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.lap.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.phase = rng.random_range(0.0..std::f64::consts::TAU);
        self.pedal = Pedal::Idle;
        self.slow_since = None;
        self.fast_since = None;
        self.brake_released_at = None;
        self.last_base = None;
        self.dialed = None;
    }

    fn next_inputs(&mut self, state: &SimState) -> Option<DriverInputs> {
        let t = state.t;
        let pref = self.preferred(state.d);
        let error = pref - state.v;
        let tol = self.pref.tol;
        let gain = self.pref.overreact_gain;
        let base = state.ref_v - state.set_speed_offset;
        let slope = match self.last_base {
            Some((d, b)) if state.d - d > 1e-6 => (base - b) / (state.d - d),
            _ => f64::INFINITY,
        };
        self.last_base = Some((state.d, base));

        self.slow_since = if error > tol { self.slow_since.or(Some(t)) } else { None };
        self.fast_since = if error < -tol { self.fast_since.or(Some(t)) } else { None };
        let persisted = |since: Option<f64>| since.is_some_and(|s| t - s >= self.pref.react_delay);

        let mut inputs = DriverInputs::default();
        match self.pedal {
            Pedal::Gas if error <= 0.0 => self.pedal = Pedal::Idle,
            Pedal::Brake if error >= 0.0 => {
                self.pedal = Pedal::Idle;
                self.brake_released_at = Some(t);
            }
            _ => {}
        }

        if self.pedal == Pedal::Idle {
            if !state.pldf_active
                && self.brake_released_at.is_some_and(|r| t - r >= self.pref.react_delay)
            {
                inputs.reactivate = true;
                self.brake_released_at = None;
            }

            let lever = self.lever_target(state, pref, base, slope);
            let zone = self.map.zone_index_clamped(state.d);
            // while the function ramps to a dialed speed, trust it
            let waiting = state.set_speed_offset != 0.0
                && self.dialed.is_some_and(|(z, goal)| z == zone && (goal - pref).abs() <= tol);
            let lever_handles_it = waiting
                || lever.is_some_and(|desired| {
                    (base + desired - pref).abs() <= tol && desired == state.set_speed_offset
                });
            if let Some(desired) = lever {
                let persisted_error = (base + state.set_speed_offset - pref).abs() > tol
                    && (persisted(self.slow_since) || persisted(self.fast_since));
                if desired != state.set_speed_offset && persisted_error {
                    let step = set_speed_step();
                    inputs.lever_steps = ((desired - state.set_speed_offset) / step).round() as i32;
                    self.dialed = Some((zone, base + desired));
                    return Some(inputs);
                }
            }
            if !lever_handles_it {
                if persisted(self.slow_since) {
                    self.pedal = Pedal::Gas;
                } else if persisted(self.fast_since) {
                    self.pedal = Pedal::Brake;
                }
            }
        }

        match self.pedal {
            Pedal::Gas => inputs.pedals.gas = (gain * error / GAS_FULL_ERROR).clamp(MIN_PEDAL, 1.0),
            Pedal::Brake => inputs.pedals.brake = (gain * -error / BRAKE_FULL_ERROR).clamp(MIN_PEDAL, 1.0),
            Pedal::Idle => {}
        }
        Some(inputs)
    }
}

/// The bundled 20-driver cohort, `default_cohort(20, 7)` written out.
pub const DEFAULT_COHORT_JSON: &str = include_str!("../data/default_cohort.json");

/// A mixed cohort covering every preference category, deterministic in `seed`.
pub fn default_cohort(n: usize, seed: u64) -> Vec<PerturbationSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let curves = rng.random_range(0..=2usize);
            let transitions = rng.random_range(0..=2usize);
            let mut straights = rng.random_range(0..=2usize);
            if curves + transitions + straights == 0 {
                straights = 1;
            }
            PerturbationSpec {
                id: format!("d{:02}", k + 1),
                seed: rng.random(),
                curves: (curves > 0).then_some(CurvePerturbation { count: curves, min_kmh: 5.0, max_kmh: 15.0 }),
                transitions: (transitions > 0)
                    .then_some(TransitionPerturbation { count: transitions, min_m: 50.0, max_m: 150.0 }),
                straights: (straights > 0).then_some(StraightPerturbation {
                    count: Some(straights),
                    offsets_kmh: vec![-10.0, -5.0, 5.0, 10.0],
                }),
                set_speed_user: rng.random_bool(0.5),
                ..PerturbationSpec::default()
            }
        })
        .collect()
}
