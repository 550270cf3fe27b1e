//! Shared fixtures and an independent brute-force reference of the learning
//! step, written from the algorithm description rather than the library code.

#![allow(dead_code)]

use std::sync::Arc;

use adaptive_pldf::planner::{plan_base_profile, PlannerParams};
use adaptive_pldf::profile::SpeedProfile;
use adaptive_pldf::route::{CurvatureSample, RouteMap, SpeedLimitZone};
use adaptive_pldf::sim::{run_lap, DistanceAction, DistanceScript, DriveLog, InterventionRecord, Sample, SimParams};
use adaptive_pldf::spaa::StretchParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random route of `length` meters: 1-3 zones between 30 and 100 km/h and a
/// few curvature samples up to 0.02 1/m.
pub fn random_route(rng: &mut ChaCha8Rng, length: f64) -> RouteMap {
    let zone_count = rng.random_range(1..=3);
    let mut starts = vec![0.0];
    for _ in 1..zone_count {
        let prev = *starts.last().unwrap();
        let next = prev + rng.random_range(60.0..(length / zone_count as f64).max(61.0));
        if next < length - 20.0 {
            starts.push(next.round());
        }
    }
    let zones = starts
        .iter()
        .map(|&s| SpeedLimitZone::from_kmh(s, 10.0 * f64::from(rng.random_range(3..=10))))
        .collect();
    let mut curvature = vec![CurvatureSample { distance: 0.0, curvature: 0.0 }];
    let mut d = 0.0;
    loop {
        d += rng.random_range(30.0..150.0);
        if d >= length {
            break;
        }
        let kappa = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.02) };
        curvature.push(CurvatureSample { distance: d, curvature: kappa });
    }
    RouteMap::new("random", length, zones, curvature).unwrap()
}

/// Up to `max` non-overlapping gas or brake presses; brakes are followed by
/// a reactivation.
pub fn random_presses(rng: &mut ChaCha8Rng, length: f64, max: usize) -> Vec<DistanceAction> {
    let count = rng.random_range(0..=max);
    let mut actions = Vec::new();
    let slot = length / max as f64;
    for k in 0..count {
        let from = k as f64 * slot + rng.random_range(5.0..slot * 0.4);
        let to = from + rng.random_range(10.0..slot * 0.5);
        if rng.random_bool(0.5) {
            actions.push(DistanceAction::Pedals { from_m: from, to_m: to, gas: rng.random_range(0.1..0.8), brake: 0.0 });
        } else {
            actions.push(DistanceAction::Pedals { from_m: from, to_m: to, gas: 0.0, brake: rng.random_range(0.05..0.3) });
            actions.push(DistanceAction::Reactivate { at_m: to + rng.random_range(1.0..15.0) });
        }
    }
    actions
}

pub struct Instance {
    pub map: RouteMap,
    pub baseline: SpeedProfile,
    pub log: DriveLog,
}

/// A random small route with one scripted lap on its planned baseline.
pub fn random_instance(rng: &mut ChaCha8Rng, max_len: f64, max_presses: usize) -> Instance {
    let planner = PlannerParams::default();
    loop {
        let length = rng.random_range(150.0..max_len).round();
        let map = random_route(rng, length);
        let baseline = plan_base_profile(&map, &planner).unwrap();
        let mut script = DistanceScript::new(random_presses(rng, length, max_presses));
        let params = SimParams { max_lap_time: 600.0, ..SimParams::default() };
        let log = run_lap(Arc::new(map.clone()), baseline.clone(), "iter0", &mut script, planner, params).unwrap();
        if log.complete {
            return Instance { map, baseline, log };
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- reference implementation -------------------------------------------

fn lerp(samples: &[Sample], d: f64) -> f64 {
    let upper = samples.partition_point(|s| s.d <= d);
    if upper == 0 {
        return samples[0].v;
    }
    if upper == samples.len() {
        return samples[upper - 1].v;
    }
    let (a, b) = (samples[upper - 1], samples[upper]);
    a.v + (d - a.d) / (b.d - a.d) * (b.v - a.v)
}

/// Driver trace ordered by distance; repeated distances keep the later speed.
pub fn reference_trace(log: &DriveLog) -> Vec<Sample> {
    let mut out: Vec<Sample> = Vec::new();
    for s in &log.states {
        if let Some(last) = out.last_mut() {
            if s.d <= last.d {
                last.v = s.v;
                continue;
            }
        }
        out.push(Sample { d: s.d, v: s.v });
    }
    out
}

fn reference_max_curvature(map: &RouteMap, from: f64, to: f64) -> f64 {
    let (lo, hi) = (from.max(0.0).min(map.length()), to.max(0.0).min(map.length()));
    let mut points = vec![lo, hi];
    points.extend(map.curvature_samples().iter().map(|s| s.distance).filter(|&d| d > lo && d < hi));
    points.into_iter().map(|d| map.curvature_at(d).unwrap()).fold(0.0, f64::max)
}

pub fn reference_alpha(rec: &InterventionRecord, map: &RouteMap, p: &StretchParams) -> f64 {
    let d0 = rec.samples[0].d;
    let dn = rec.samples[rec.samples.len() - 1].d;
    let span = dn - d0;
    if span <= 0.0 {
        return 0.0;
    }
    let alpha = p.alpha.min(p.cap_seconds * rec.samples[0].v / span);
    let kappa = reference_max_curvature(map, d0 - p.alpha * span, dn);
    let scale = if kappa <= p.kappa_low {
        1.0
    } else if kappa >= p.kappa_high {
        0.0
    } else {
        (p.kappa_high - kappa) / (p.kappa_high - p.kappa_low)
    };
    alpha * scale
}

/// Stretched and offset-aligned samples of one pedal record.
pub fn reference_preprocess(rec: &InterventionRecord, trace: &[Sample], alpha: f64) -> Vec<Sample> {
    let n = rec.samples.len() - 1;
    let dn = rec.samples[n].d;
    let stretched: Vec<Sample> =
        rec.samples.iter().map(|s| Sample { d: s.d - alpha * (dn - s.d), v: s.v }).collect();
    let (first, last) = (stretched[0].d, stretched[n].d);
    if last - first <= 0.0 {
        return stretched;
    }
    let dv = lerp(trace, first) - stretched[0].v;
    stretched
        .iter()
        .map(|s| Sample { d: s.d, v: s.v + dv * (1.0 - (s.d - first) / (last - first)) })
        .collect()
}

/// Preprocessed profile: the reference, with each pedal record (in time
/// order) written over `[d'_0, max(d_n, recovery)]`.
pub fn reference_prepro(log: &DriveLog, reference: &SpeedProfile, map: &RouteMap, p: &StretchParams) -> Vec<f64> {
    let trace = reference_trace(log);
    let mut out = reference.values().to_vec();
    let mut records: Vec<&InterventionRecord> = log.interventions.iter().filter(|r| r.kind.is_pedal()).collect();
    records.sort_by(|a, b| a.t_start.partial_cmp(&b.t_start).unwrap());
    for rec in records {
        let aligned = reference_preprocess(rec, &trace, reference_alpha(rec, map, p));
        let first = aligned[0].d;
        let dn = rec.samples[rec.samples.len() - 1].d;
        let mut recovered = reference.distance(reference.len() - 1);
        for s in &log.states {
            if s.t >= rec.t_end
                && s.pldf_active
                && s.gas == 0.0
                && s.brake == 0.0
                && (s.v - s.ref_v).abs() <= p.recovery_tol
            {
                recovered = s.d;
                break;
            }
        }
        let end = dn.max(recovered);
        for (i, v) in out.iter_mut().enumerate() {
            let d = reference.distance(i);
            if d >= first - 1e-9 && d <= end + 1e-9 {
                *v = if d <= dn { lerp(&aligned, d) } else { lerp(&trace, d) };
            }
        }
    }
    out
}

/// Value at `x` of the least-squares quadratic through `(xs, ys)`, solved by
/// Cramer's rule on the normal equations.
fn quadratic_fit_at(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut s = [0.0; 5];
    let mut t = [0.0; 3];
    for (&xi, &yi) in xs.iter().zip(ys) {
        let mut p = 1.0;
        for k in 0..5 {
            s[k] += p;
            if k < 3 {
                t[k] += p * yi;
            }
            p *= xi;
        }
    }
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(m);
    let mut coef = [0.0; 3];
    for (k, c) in coef.iter_mut().enumerate() {
        let mut mk = m;
        for r in 0..3 {
            mk[r][k] = t[r];
        }
        *c = det3(mk) / det;
    }
    coef[0] + coef[1] * x + coef[2] * x * x
}

/// Savitzky-Golay (order 2) by fitting every point's own window. Edge points
/// use the first or last full window. Short inputs use the largest odd window
/// that fits; fewer than 3 points pass through.
pub fn reference_savgol(data: &[f64], window: usize) -> Vec<f64> {
    let n = data.len();
    let mut w = window;
    if n < w {
        w = if n % 2 == 1 { n } else { n.saturating_sub(1) };
    }
    if w < 3 {
        return data.to_vec();
    }
    let half = w / 2;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - w);
            // positions relative to the window center
            let center = (start + half) as f64;
            let xs: Vec<f64> = (start..start + w).map(|j| j as f64 - center).collect();
            quadratic_fit_at(&xs, &data[start..start + w], i as f64 - center)
        })
        .collect()
}

/// The learned profile for a lap without set-speed changes.
pub fn reference_adjusted(log: &DriveLog, baseline: &SpeedProfile, map: &RouteMap, p: &StretchParams) -> Vec<f64> {
    let base = baseline.values();
    let pre = reference_prepro(log, baseline, map, p);
    let n = base.len();

    let deviates: Vec<bool> = (0..n).map(|i| (pre[i] - base[i]).abs() > p.deviation_eps).collect();
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if deviates[i] {
            let start = i;
            while i < n && deviates[i] {
                i += 1;
            }
            match segments.last_mut() {
                Some(last) if ((start - last.1) as f64) * baseline.step() < p.merge_gap => last.1 = i,
                _ => segments.push((start, i)),
            }
        } else {
            i += 1;
        }
    }

    let mut mean = base.to_vec();
    for &(a, b) in &segments {
        for k in a..b {
            mean[k] = 0.5 * (base[k] + pre[k]);
        }
    }
    let window = {
        let w = (p.sg_window / baseline.step()).round() as usize;
        let w = if w.is_multiple_of(2) { w + 1 } else { w };
        w.max(5)
    };
    let mut out = base.to_vec();
    for &(a, b) in &segments {
        let lo = a.saturating_sub(window);
        let hi = (b + window).min(n);
        let smooth = reference_savgol(&mean[lo..hi], window);
        for k in a..b {
            out[k] = smooth[k - lo].max(0.0);
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---- per-record property fixtures ---------------------------------------

/// A random pedal record, a driver trace around it, and a stretch factor.
pub struct RecordFixture {
    pub samples: Vec<Sample>,
    pub trace: Vec<Sample>,
    pub alpha: f64,
}

pub fn random_record_fixture(rng: &mut ChaCha8Rng) -> RecordFixture {
    let n = rng.random_range(2..40);
    let mut d = rng.random_range(100.0..2000.0);
    let mut v = rng.random_range(5.0..35.0);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        samples.push(Sample { d, v });
        d += rng.random_range(0.05..3.0);
        v = (v + rng.random_range(-0.5..0.5)).max(0.0);
    }
    let mut trace = Vec::new();
    let mut td = 0.0;
    let mut tv = rng.random_range(5.0..35.0);
    while td < d + 10.0 {
        trace.push(Sample { d: td, v: tv });
        td += rng.random_range(0.1..2.0);
        tv = (tv + rng.random_range(-0.3..0.3)).max(0.0);
    }
    let alpha = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..1.0) };
    RecordFixture { samples, trace, alpha }
}

/// Linear interpolation of a distance-ascending trace, clamped at the ends.
pub fn trace_at(trace: &[Sample], d: f64) -> f64 {
    lerp(trace, d)
}

/// Checks the stretch, alignment and mean contracts on one fixture. Returns
/// the first violated contract.
pub fn check_record_fixture(fx: &RecordFixture, p: &StretchParams) -> Result<(), String> {
    use adaptive_pldf::spaa::{align_offset, deviation_segments, mean_profile, stretch_samples};
    const TOL: f64 = 1e-9;
    let n = fx.samples.len() - 1;
    let dn = fx.samples[n].d;

    let stretched = stretch_samples(&fx.samples, fx.alpha);
    if stretched.len() != fx.samples.len() {
        return Err("stretch changed the sample count".into());
    }
    for (i, (s, o)) in stretched.iter().zip(&fx.samples).enumerate() {
        if s.v != o.v {
            return Err(format!("stretch changed speed {i}"));
        }
        let want = o.d - fx.alpha * (dn - o.d);
        if (s.d - want).abs() > TOL || s.d > o.d + TOL {
            return Err(format!("stretch moved sample {i} to {} instead of {want}", s.d));
        }
    }
    if stretched[n].d != dn {
        return Err("stretch moved the last sample".into());
    }
    if stretched.windows(2).any(|w| w[1].d <= w[0].d) {
        return Err("stretch broke the order of samples".into());
    }
    if stretch_samples(&fx.samples, 0.0) != fx.samples {
        return Err("zero stretch is not the identity".into());
    }

    let aligned = align_offset(&stretched, |d| trace_at(&fx.trace, d));
    let want_first = trace_at(&fx.trace, stretched[0].d);
    if (aligned[0].v - want_first).abs() > TOL {
        return Err(format!("aligned start {} != driver speed {want_first}", aligned[0].v));
    }
    if (aligned[n].v - stretched[n].v).abs() > TOL {
        return Err("alignment moved the last speed".into());
    }
    let dv = want_first - stretched[0].v;
    let width = stretched[n].d - stretched[0].d;
    for (a, s) in aligned.iter().zip(&stretched) {
        let shift = a.v - s.v;
        let affine = dv * (1.0 - (s.d - stretched[0].d) / width);
        if a.d != s.d || (shift - affine).abs() > TOL || shift.abs() > dv.abs() + TOL {
            return Err("alignment offset is not the affine fade of the start offset".into());
        }
    }

    // Mean of a baseline and a prepro profile built from the same fixture.
    let start = (stretched[0].d - 30.0).max(0.0).floor();
    let len = ((dn + 30.0).ceil() - start).max(2.0);
    let baseline = SpeedProfile::new(start, 1.0, (0..=len as usize).map(|i| trace_at(&fx.trace, start + i as f64)).collect()).unwrap();
    let prepro_values = (0..baseline.len())
        .map(|i| {
            let d = baseline.distance(i);
            if d >= aligned[0].d && d <= dn { lerp(&aligned, d) } else { baseline.values()[i] }
        })
        .collect();
    let prepro = SpeedProfile::new(start, 1.0, prepro_values).unwrap();
    let segments = deviation_segments(&baseline, &prepro, p).map_err(|e| e.to_string())?;
    let mean = mean_profile(&baseline, &prepro, &segments);
    for (i, &m) in mean.iter().enumerate() {
        let (b, q) = (baseline.values()[i], prepro.values()[i]);
        if segments.iter().any(|s| s.contains(&i)) {
            if m < b.min(q) - TOL || m > b.max(q) + TOL || (m - 0.5 * (b + q)).abs() > TOL {
                return Err(format!("mean {m} not halfway between {b} and {q}"));
            }
        } else if m != b {
            return Err(format!("mean changed point {i} outside the segments"));
        }
    }
    Ok(())
}

/// Like [`random_instance`] with one or two lever changes added.
pub fn random_lever_instance(rng: &mut ChaCha8Rng, max_len: f64) -> Instance {
    let planner = PlannerParams::default();
    loop {
        let length = rng.random_range(300.0..max_len).round();
        let map = random_route(rng, length);
        let baseline = plan_base_profile(&map, &planner).unwrap();
        let mut actions = random_presses(rng, length, 2);
        for _ in 0..rng.random_range(1..=2) {
            let steps = if rng.random_bool(0.5) { 1 } else { -1 };
            actions.push(DistanceAction::Lever { at_m: rng.random_range(0.0..length * 0.9), steps });
        }
        let mut script = DistanceScript::new(actions);
        let params = SimParams { max_lap_time: 600.0, ..SimParams::default() };
        let log = run_lap(Arc::new(map.clone()), baseline.clone(), "iter0", &mut script, planner, params).unwrap();
        if log.complete {
            return Instance { map, baseline, log };
        }
    }
}

/// First grid point that one learning step changed outside the deviation
/// segments and the set-speed spans. A lowered span also owns the braking
/// ramp into it and the acceleration ramp out of it.
pub fn locality_violation(inst: &Instance, p: &StretchParams) -> Option<String> {
    use adaptive_pldf::planner::apply_set_speed_offsets;
    use adaptive_pldf::spaa::{adopt_set_speed, apply_iteration, build_prepro_profile, deviation_segments, IterationState, SetSpeedOffsetMap};
    let planner = PlannerParams::default();
    let state = IterationState::new(inst.baseline.clone());
    let adjusted = apply_iteration(&state, &inst.log, &inst.map, &planner, p).unwrap().baseline;
    let offsets = adopt_set_speed(&inst.log, &inst.map, &SetSpeedOffsetMap::default(), p);
    let shifted = apply_set_speed_offsets(&inst.baseline, &inst.map, &offsets, &planner).unwrap();
    let prepro = build_prepro_profile(&inst.log, &shifted, &inst.map, p);
    let segments = deviation_segments(&shifted, &prepro, p).unwrap();
    let vmax = inst.baseline.values().iter().cloned().fold(0.0, f64::max);
    // kinematic reach from a span edge back up to the fastest baseline speed
    let reach = |v: f64, a: f64| (vmax * vmax - v * v).max(0.0) / (2.0 * a) + planner.grid_step;
    let owned = |d: f64| {
        offsets.entries().iter().any(|e| {
            if e.offset >= 0.0 {
                return d >= e.start && (d < e.end || e.end >= inst.map.length());
            }
            let from = e.start - reach(shifted.at(e.start), planner.decel_max);
            let to = e.end + reach(shifted.at(e.end), planner.accel_max);
            d >= from && (d < to || e.end >= inst.map.length())
        })
    };
    (0..adjusted.len())
        .filter(|&i| !segments.iter().any(|s| s.contains(&i)) && !owned(adjusted.distance(i)))
        .find(|&i| adjusted.values()[i] != inst.baseline.values()[i])
        .map(|i| format!("point {i} changed from {} to {}", inst.baseline.values()[i], adjusted.values()[i]))
}

/// Whether a learning step on a lap without interventions returns the same
/// baseline bit for bit.
pub fn fixed_point_holds(map: &RouteMap, baseline: &SpeedProfile, p: &StretchParams) -> bool {
    use adaptive_pldf::sim::NullInputs;
    use adaptive_pldf::spaa::{apply_iteration, IterationState};
    let planner = PlannerParams::default();
    let log = run_lap(Arc::new(map.clone()), baseline.clone(), "iter0", &mut NullInputs, planner, SimParams::default()).unwrap();
    let next = apply_iteration(&IterationState::new(baseline.clone()), &log, map, &planner, p).unwrap();
    log.interventions.is_empty()
        && next.baseline.values().iter().zip(baseline.values()).all(|(a, b)| a.to_bits() == b.to_bits())
        && next.offsets.is_empty()
}

/// Golden file helpers: `UPDATE_GOLDEN=1` rewrites the file.
pub fn golden_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn check_golden_profile(name: &str, profile: &SpeedProfile) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, profile.to_csv_string()).unwrap();
    }
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let golden = SpeedProfile::read_csv(text.as_bytes()).map_err(|e| e.to_string())?;
    if golden.len() != profile.len() || golden.start() != profile.start() || golden.step() != profile.step() {
        return Err("golden grid differs".into());
    }
    let diff = max_abs_diff(golden.values(), profile.values());
    if diff > 1e-9 {
        return Err(format!("profile deviates from golden by {diff} m/s"));
    }
    Ok(())
}

/// First distance where `profile` is `drop` below its value at `plateau`,
/// searching forward from `plateau`.
pub fn deceleration_onset(profile: &SpeedProfile, plateau: f64, drop: f64) -> f64 {
    let level = profile.at(plateau);
    (profile.index_range(plateau, profile.end()).map(|i| profile.distance(i)))
        .find(|&d| profile.at(d) < level - drop)
        .unwrap_or(profile.end())
}

/// Largest `|dv/dd|` of a distance-ascending series over `[from, to]`.
pub fn max_slope(points: &[(f64, f64)], from: f64, to: f64) -> f64 {
    points
        .windows(2)
        .filter(|w| w[0].0 >= from && w[1].0 <= to && w[1].0 > w[0].0)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .fold(0.0, f64::max)
}
