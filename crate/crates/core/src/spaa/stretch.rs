use crate::route::RouteMap;
use crate::sim::{InterventionRecord, Sample};

use super::StretchParams;

/// Stretch factor for one pedal intervention.
///
/// `min(alpha, cap_seconds * v0 / span)` so the first sample moves back at
/// most `cap_seconds` of driving, then scaled down linearly between
/// `kappa_low` and `kappa_high` by the sharpest curvature the stretched span
/// could reach.
pub fn effective_alpha(rec: &InterventionRecord, v0: f64, map: &RouteMap, p: &StretchParams) -> f64 {
    let span = rec.d_end() - rec.d_start();
    if !(span > 0.0) {
        return 0.0;
    }
    let capped = p.alpha.min(p.cap_seconds * v0.max(0.0) / span);
    let kappa = map.max_curvature(rec.d_start() - p.alpha * span, rec.d_end());
    let attenuation = ((p.kappa_high - kappa) / (p.kappa_high - p.kappa_low)).clamp(0.0, 1.0);
    capped * attenuation
}

/// `d'_i = d_i - alpha * (d_n - d_i)`; speeds untouched, last sample fixed.
pub fn stretch_samples(samples: &[Sample], alpha_eff: f64) -> Vec<Sample> {
    let Some(last) = samples.last() else {
        return Vec::new();
    };
    let d_n = last.d;
    samples
        .iter()
        .map(|s| Sample { d: s.d - alpha_eff * (d_n - s.d), v: s.v })
        .collect()
}

/// Adds a linearly fading offset so the first stretched sample meets the
/// driver trace: `v'_i = v_i + dv * (1 - (d'_i - d'_0) / (d'_n - d'_0))`
/// with `dv = v_driver(d'_0) - v_0`.
pub fn align_offset(stretched: &[Sample], v_driver: impl Fn(f64) -> f64) -> Vec<Sample> {
    let (Some(first), Some(last)) = (stretched.first(), stretched.last()) else {
        return Vec::new();
    };
    let width = last.d - first.d;
    if !(width > 0.0) {
        return stretched.to_vec();
    }
    let dv = v_driver(first.d) - first.v;
    stretched
        .iter()
        .map(|s| Sample { d: s.d, v: s.v + dv * (1.0 - (s.d - first.d) / width) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::SpeedProfile;
    use crate::route::{CurvatureSample, SpeedLimitZone};
    use crate::sim::{EndReason, InterventionKind};

    fn record(ds: &[f64], vs: &[f64]) -> InterventionRecord {
        InterventionRecord {
            kind: InterventionKind::Gas,
            t_start: 0.0,
            t_end: 1.0,
            samples: ds.iter().zip(vs).map(|(&d, &v)| Sample { d, v }).collect(),
            offset: 0.0,
            ended_by: EndReason::Released,
        }
    }

    fn route(curvature: Vec<CurvatureSample>) -> RouteMap {
        RouteMap::new("r", 2000.0, vec![SpeedLimitZone::from_kmh(0.0, 100.0)], curvature).unwrap()
    }

    #[test]
    fn cap_binds_for_long_slow_interventions() {
        let rec = record(&[1000.0, 1300.0], &[10.0, 14.0]);
        let a = effective_alpha(&rec, 10.0, &route(vec![]), &StretchParams::default());
        assert!((a - 0.1).abs() < 1e-15);
    }

    #[test]
    fn cap_not_binding_gives_alpha() {
        let rec = record(&[1000.0, 1080.0], &[20.0, 22.0]);
        let a = effective_alpha(&rec, 20.0, &route(vec![]), &StretchParams::default());
        assert_eq!(a, 0.5);
    }

    #[test]
    fn sharp_curve_suppresses_stretch() {
        let curvy = route(vec![
            CurvatureSample { distance: 0.0, curvature: 0.0 },
            CurvatureSample { distance: 1000.0, curvature: 0.0 },
            CurvatureSample { distance: 1050.0, curvature: 0.03 },
        ]);
        let rec = record(&[1000.0, 1080.0], &[20.0, 22.0]);
        assert_eq!(effective_alpha(&rec, 20.0, &curvy, &StretchParams::default()), 0.0);

        // halfway through the attenuation band
        let mid = route(vec![CurvatureSample { distance: 0.0, curvature: 0.0125 }]);
        let a = effective_alpha(&rec, 20.0, &mid, &StretchParams::default());
        assert!((a - 0.25).abs() < 1e-12);
    }

    #[test]
    fn degenerate_record_has_zero_alpha() {
        let rec = record(&[500.0, 500.0], &[20.0, 20.0]);
        assert_eq!(effective_alpha(&rec, 20.0, &route(vec![]), &StretchParams::default()), 0.0);
    }

    #[test]
    fn stretch_by_hand() {
        let s = [Sample { d: 1000.0, v: 25.0 }, Sample { d: 1040.0, v: 24.0 }, Sample { d: 1080.0, v: 22.0 }];
        let out = stretch_samples(&s, 0.5);
        let ds: Vec<f64> = out.iter().map(|s| s.d).collect();
        assert_eq!(ds, vec![960.0, 1020.0, 1080.0]);
        assert_eq!(stretch_samples(&s, 0.0), s.to_vec());
    }

    #[test]
    fn align_by_hand() {
        let stretched = [Sample { d: 960.0, v: 25.0 }, Sample { d: 1020.0, v: 24.0 }, Sample { d: 1080.0, v: 22.0 }];
        let driver = SpeedProfile::constant(2000.0, 1.0, 27.0).unwrap();
        let vs: Vec<f64> = align_offset(&stretched, |d| driver.at(d)).iter().map(|s| s.v).collect();
        assert_eq!(vs, vec![27.0, 25.0, 22.0]);

        let matched = SpeedProfile::constant(2000.0, 1.0, 25.0).unwrap();
        assert_eq!(align_offset(&stretched, |d| matched.at(d)), stretched.to_vec());
    }

    #[test]
    fn align_degenerate_span_unchanged() {
        let s = [Sample { d: 10.0, v: 3.0 }, Sample { d: 10.0, v: 4.0 }];
        let driver = SpeedProfile::constant(100.0, 1.0, 9.0).unwrap();
        assert_eq!(align_offset(&s, |d| driver.at(d)), s.to_vec());
    }
}
