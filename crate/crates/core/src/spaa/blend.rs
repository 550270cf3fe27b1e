use std::ops::Range;

use crate::profile::SpeedProfile;

use super::savgol::SavitzkyGolay;
use super::{SpaaError, StretchParams};

/// Maximal index runs where `|prepro - baseline| > deviation_eps`, with runs
/// separated by less than `merge_gap` meters joined.
pub fn deviation_segments(
    baseline: &SpeedProfile,
    prepro: &SpeedProfile,
    p: &StretchParams,
) -> Result<Vec<Range<usize>>, SpaaError> {
    baseline.check_grid(prepro)?;
    let mut runs: Vec<Range<usize>> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, (b, q)) in baseline.values().iter().zip(prepro.values()).enumerate() {
        let deviates = (q - b).abs() > p.deviation_eps;
        match (deviates, open) {
            (true, None) => open = Some(i),
            (false, Some(start)) => {
                runs.push(start..i);
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        runs.push(start..baseline.len());
    }

    let step = baseline.step();
    let mut merged: Vec<Range<usize>> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some(last) if ((run.start - last.end) as f64) * step < p.merge_gap => last.end = run.end,
            _ => merged.push(run),
        }
    }
    Ok(merged)
}

/// Mean of baseline and prepro inside `segments`, baseline elsewhere.
pub fn mean_profile(baseline: &SpeedProfile, prepro: &SpeedProfile, segments: &[Range<usize>]) -> Vec<f64> {
    let mut mean = baseline.values().to_vec();
    for seg in segments {
        for i in seg.clone() {
            mean[i] = (baseline.values()[i] + prepro.values()[i]) / 2.0;
        }
    }
    mean
}

/// Averages the prepro profile into the baseline over each deviation segment
/// and smooths it. The filter sees the segment plus one window on either
/// side, but only the segment itself is written back.
pub fn blend(baseline: &SpeedProfile, prepro: &SpeedProfile, p: &StretchParams) -> Result<SpeedProfile, SpaaError> {
    let segments = deviation_segments(baseline, prepro, p)?;
    if segments.is_empty() {
        return Ok(baseline.clone());
    }
    let window = p.sg_points(baseline.step())?;
    let filter = SavitzkyGolay::new(window, p.sg_order).map_err(|e| SpaaError::Params(e.to_string()))?;
    let mean = mean_profile(baseline, prepro, &segments);

    let mut out = baseline.values().to_vec();
    for seg in &segments {
        let lo = seg.start.saturating_sub(window);
        let hi = (seg.end + window).min(mean.len());
        let smoothed = filter.apply(&mean[lo..hi]);
        for i in seg.clone() {
            out[i] = smoothed[i - lo].max(0.0);
        }
    }
    Ok(baseline.with_values(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> StretchParams {
        StretchParams::default()
    }

    #[test]
    fn constants_blend_to_midpoint() {
        let base = SpeedProfile::constant(1000.0, 1.0, 22.0).unwrap();
        let mut v = base.values().to_vec();
        for x in &mut v[300..600] {
            *x = 26.0;
        }
        let prepro = base.with_values(v);
        let out = blend(&base, &prepro, &params()).unwrap();
        // deep inside the segment the filter only sees constants
        for i in 340..560 {
            assert!((out.values()[i] - 24.0).abs() < 1e-9, "i={i} v={}", out.values()[i]);
        }
        for i in (0..300).chain(600..1001) {
            assert_eq!(out.values()[i], 22.0);
        }
    }

    #[test]
    fn identical_profiles_are_untouched() {
        let base = SpeedProfile::from_fn(500.0, 1.0, |d| 20.0 + (d / 50.0).sin()).unwrap();
        assert_eq!(blend(&base, &base, &params()).unwrap(), base);
    }

    #[test]
    fn segments_merge_across_small_gaps() {
        let base = SpeedProfile::constant(300.0, 1.0, 20.0).unwrap();
        let mut v = base.values().to_vec();
        for i in (50..60).chain(70..80).chain(150..160) {
            v[i] = 21.0;
        }
        let prepro = base.with_values(v);
        let segs = deviation_segments(&base, &prepro, &params()).unwrap();
        assert_eq!(segs, vec![50..80, 150..160]);
    }

    #[test]
    fn grid_mismatch_is_error() {
        let a = SpeedProfile::constant(100.0, 1.0, 20.0).unwrap();
        let b = SpeedProfile::constant(100.0, 2.0, 20.0).unwrap();
        assert!(blend(&a, &b, &params()).is_err());
    }
}
