use serde::{Deserialize, Serialize};

use crate::metrics::{intervention_rates, InterventionRates};
use crate::planner::{apply_set_speed_offsets, PlannerParams};
use crate::profile::SpeedProfile;
use crate::route::RouteMap;
use crate::sim::{DriveLog, Sample};

use super::{adopt_set_speed, align_offset, blend, effective_alpha, stretch_samples};
use super::{SetSpeedOffsetMap, SpaaError, StretchParams};

/// Condensed record of the lap an iteration learned from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapSummary {
    pub profile_id: String,
    pub lap_time: f64,
    pub interventions: usize,
    pub rates: InterventionRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u32,
    pub profile: SpeedProfile,
    /// `None` for the starting baseline.
    pub lap: Option<LapSummary>,
}

/// Per-driver learning state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationState {
    pub iteration: u32,
    pub baseline: SpeedProfile,
    /// Every set-speed offset adopted so far. Already baked into `baseline`.
    pub offsets: SetSpeedOffsetMap,
    pub history: Vec<HistoryEntry>,
}

impl IterationState {
    pub fn new(baseline: SpeedProfile) -> Self {
        let history = vec![HistoryEntry { iteration: 0, profile: baseline.clone(), lap: None }];
        Self { iteration: 0, baseline, offsets: SetSpeedOffsetMap::default(), history }
    }

    pub fn profile_id(&self) -> String {
        format!("iter{}", self.iteration)
    }
}

/// Linear interpolation over distance-ascending samples, clamped at the ends.
fn interpolate(samples: &[Sample], d: f64) -> f64 {
    let upper = samples.partition_point(|s| s.d <= d);
    if upper == 0 {
        return samples[0].v;
    }
    if upper == samples.len() {
        return samples[upper - 1].v;
    }
    let (a, b) = (samples[upper - 1], samples[upper]);
    if b.d == a.d {
        return b.v;
    }
    a.v + (d - a.d) / (b.d - a.d) * (b.v - a.v)
}

/// Preprocessed driver profile on the grid of `reference`.
///
/// Starts from `reference` (the profile the function was tracking). Each
/// pedal intervention, in time order, overwrites `[d'_0, d_n]` with its
/// stretched and aligned samples and then the driver trace up to where the
/// vehicle is back on the tracked profile. Later interventions win where
/// regions overlap.
pub fn build_prepro_profile(
    log: &DriveLog,
    reference: &SpeedProfile,
    map: &RouteMap,
    p: &StretchParams,
) -> SpeedProfile {
    let mut pedal: Vec<_> = log.interventions.iter().filter(|r| r.kind.is_pedal()).collect();
    if pedal.is_empty() {
        return reference.clone();
    }
    pedal.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    let trace = log.speed_trace();
    let mut values = reference.values().to_vec();

    for rec in pedal {
        let alpha = effective_alpha(rec, rec.samples[0].v, map, p);
        let aligned = align_offset(&stretch_samples(&rec.samples, alpha), |d| interpolate(&trace, d));
        let first = aligned[0].d;
        let d_n = rec.d_end();

        let recovered_at = log
            .states
            .iter()
            .skip_while(|s| s.t < rec.t_end)
            .find(|s| s.pldf_active && s.gas == 0.0 && s.brake == 0.0 && (s.v - s.ref_v).abs() <= p.recovery_tol)
            .map_or(reference.end(), |s| s.d);

        // closed interval [d'_0, max(d_n, recovery)]
        let end = recovered_at.max(d_n) + reference.step() * 1e-6;
        for i in reference.index_range(first, end) {
            let d = reference.distance(i);
            values[i] = if d <= d_n { interpolate(&aligned, d) } else { interpolate(&trace, d) };
        }
    }
    reference.with_values(values)
}

/// Learns one iteration from `log`, which must have been driven on
/// `state.baseline`. A lap without interventions returns the baseline
/// unchanged.
pub fn apply_iteration(
    state: &IterationState,
    log: &DriveLog,
    map: &RouteMap,
    planner: &PlannerParams,
    p: &StretchParams,
) -> Result<IterationState, SpaaError> {
    p.validate()?;
    if !log.complete {
        return Err(SpaaError::IncompleteLog);
    }
    if log.route != map.name() {
        return Err(SpaaError::RouteMismatch { log: log.route.clone(), expected: map.name().to_string() });
    }
    let reached = log.states.last().map_or(0.0, |s| s.d);
    if reached < map.length() {
        return Err(SpaaError::ShortLog { reached, length: map.length() });
    }
    let rates = intervention_rates(log).map_err(|_| SpaaError::IncompleteLog)?;

    let new_offsets = adopt_set_speed(log, map, &SetSpeedOffsetMap::default(), p);
    let shifted = apply_set_speed_offsets(&state.baseline, map, &new_offsets, planner)?;
    let prepro = build_prepro_profile(log, &shifted, map, p);
    let mut adjusted = blend(&shifted, &prepro, p)?;

    if let Some(over) = p.max_over_limit {
        let mut values = adjusted.values().to_vec();
        for (i, v) in values.iter_mut().enumerate() {
            if *v != state.baseline.values()[i] {
                *v = v.min(map.legal_speed_clamped(adjusted.distance(i)) + over);
            }
        }
        adjusted = adjusted.with_values(values);
    }

    let iteration = state.iteration + 1;
    let mut history = state.history.clone();
    history.push(HistoryEntry {
        iteration,
        profile: adjusted.clone(),
        lap: Some(LapSummary {
            profile_id: log.profile_id.clone(),
            lap_time: log.lap_time,
            interventions: log.interventions.len(),
            rates,
        }),
    });
    Ok(IterationState {
        iteration,
        baseline: adjusted,
        offsets: state.offsets.overlaid(&new_offsets),
        history,
    })
}
