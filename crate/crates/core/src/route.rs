//! Distance-parameterized routes: legal speed-limit zones and curvature samples.
//!
//! Everything inside the crate is SI (meters, m/s). Route files carry km/h
//! for limits and are converted on load.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{kmh_to_mps, mps_to_kmh};

/// Highest speed limit accepted anywhere, m/s. Also used as the "unbounded"
/// curve-speed cap.
pub const MAX_SPEED: f64 = 70.0;

/// The bundled demo track: a 4.5 km rural road with 100/80/60/50 km/h zones.
pub const DEMO_ROUTE_JSON: &str = include_str!("../data/demo_route.json");

/// Two successive limit drops used as a regression scenario for the
/// pedal-intervention adjustment.
pub const TWO_DROP_ROUTE_JSON: &str = include_str!("../data/two_drop_route.json");

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("route file parse error: {0}")]
    Parse(String),
    #[error("route length must be positive and finite, got {0}")]
    Length(f64),
    #[error("route has no speed-limit zones")]
    NoZones,
    #[error("first zone must start at 0 m, got {0}")]
    FirstZoneStart(f64),
    #[error("non-monotone zone start: zone {index} starts at {start} m, previous at {previous} m")]
    NonMonotoneZone { index: usize, start: f64, previous: f64 },
    #[error("zone {index} starts at {start} m, outside route of length {length} m")]
    ZoneOutsideRoute { index: usize, start: f64, length: f64 },
    #[error("zone {index} limit {limit_kmh} km/h outside (0, {max_kmh}] km/h")]
    BadLimit { index: usize, limit_kmh: f64, max_kmh: f64 },
    #[error("curvature must have a first sample at 0 m")]
    FirstCurvatureSample,
    #[error("non-monotone curvature sample {index} at {d} m, previous at {previous} m")]
    NonMonotoneCurvature { index: usize, d: f64, previous: f64 },
    #[error("curvature sample {index} at {d} m beyond route length {length} m")]
    CurvatureOutsideRoute { index: usize, d: f64, length: f64 },
    #[error("curvature sample {index} has invalid value {kappa}")]
    BadCurvature { index: usize, kappa: f64 },
    #[error("distance {d} m outside route domain of length {length} m")]
    OutOfRange { d: f64, length: f64 },
}

/// A legal speed limit taking effect at `start`.
///
/// The limit is kept in km/h as well so that file round-trips are exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedLimitZone {
    pub start: f64,
    limit_kmh: f64,
    limit: f64,
}

impl SpeedLimitZone {
    pub fn from_kmh(start: f64, limit_kmh: f64) -> Self {
        Self { start, limit_kmh, limit: kmh_to_mps(limit_kmh) }
    }

    pub fn from_mps(start: f64, limit: f64) -> Self {
        Self { start, limit_kmh: mps_to_kmh(limit), limit }
    }

    /// Limit in m/s.
    pub fn limit(&self) -> f64 {
        self.limit
    }

    pub fn limit_kmh(&self) -> f64 {
        self.limit_kmh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub distance: f64,
    /// Unsigned curvature magnitude, 1/m.
    pub curvature: f64,
}

/// Validated, immutable road description.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteMap {
    name: String,
    length: f64,
    zones: Vec<SpeedLimitZone>,
    curvature: Vec<CurvatureSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RouteFile {
    name: String,
    length_m: f64,
    limit_zones: Vec<ZoneEntry>,
    curvature: Vec<CurvatureEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ZoneEntry {
    start_m: f64,
    limit_kmh: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CurvatureEntry {
    d_m: f64,
    kappa_inv_m: f64,
}

/// Parses and validates a route file.
pub fn load_route(source: &str) -> Result<RouteMap, RouteError> {
    let file: RouteFile =
        serde_json::from_str(source).map_err(|e| RouteError::Parse(e.to_string()))?;
    let zones = file
        .limit_zones
        .iter()
        .map(|z| SpeedLimitZone::from_kmh(z.start_m, z.limit_kmh))
        .collect();
    let curvature = file
        .curvature
        .iter()
        .map(|c| CurvatureSample { distance: c.d_m, curvature: c.kappa_inv_m })
        .collect();
    RouteMap::new(file.name, file.length_m, zones, curvature)
}

/// The bundled demo route.
pub fn demo_route() -> RouteMap {
    load_route(DEMO_ROUTE_JSON).expect("bundled demo route is valid")
}

/// The bundled two-limit-drop scenario route.
pub fn two_drop_route() -> RouteMap {
    load_route(TWO_DROP_ROUTE_JSON).expect("bundled two-drop route is valid")
}

impl RouteMap {
    /// Builds a route, checking every invariant. An empty curvature list is
    /// treated as a straight road.
    pub fn new(
        name: impl Into<String>,
        length: f64,
        zones: Vec<SpeedLimitZone>,
        mut curvature: Vec<CurvatureSample>,
    ) -> Result<Self, RouteError> {
        if !(length.is_finite() && length > 0.0) {
            return Err(RouteError::Length(length));
        }
        let first = zones.first().ok_or(RouteError::NoZones)?;
        if first.start != 0.0 {
            return Err(RouteError::FirstZoneStart(first.start));
        }
        for (index, zone) in zones.iter().enumerate() {
            if index > 0 {
                let previous = zones[index - 1].start;
                if !(zone.start > previous) {
                    return Err(RouteError::NonMonotoneZone { index, start: zone.start, previous });
                }
            }
            if !(zone.start < length) {
                return Err(RouteError::ZoneOutsideRoute { index, start: zone.start, length });
            }
            if !(zone.limit > 0.0 && zone.limit <= MAX_SPEED) {
                return Err(RouteError::BadLimit {
                    index,
                    limit_kmh: zone.limit_kmh,
                    max_kmh: mps_to_kmh(MAX_SPEED),
                });
            }
        }

        if curvature.is_empty() {
            curvature.push(CurvatureSample { distance: 0.0, curvature: 0.0 });
        }
        if curvature[0].distance != 0.0 {
            return Err(RouteError::FirstCurvatureSample);
        }
        for (index, sample) in curvature.iter().enumerate() {
            if index > 0 {
                let previous = curvature[index - 1].distance;
                if !(sample.distance > previous) {
                    return Err(RouteError::NonMonotoneCurvature {
                        index,
                        d: sample.distance,
                        previous,
                    });
                }
            }
            if sample.distance > length {
                return Err(RouteError::CurvatureOutsideRoute { index, d: sample.distance, length });
            }
            if !(sample.curvature >= 0.0 && sample.curvature.is_finite()) {
                return Err(RouteError::BadCurvature { index, kappa: sample.curvature });
            }
        }

        Ok(Self { name: name.into(), length, zones, curvature })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn zones(&self) -> &[SpeedLimitZone] {
        &self.zones
    }

    pub fn curvature_samples(&self) -> &[CurvatureSample] {
        &self.curvature
    }

    /// Index of the zone containing `d`. Zones are half-open `[start, next)`.
    pub fn zone_index(&self, d: f64) -> Result<usize, RouteError> {
        if !(d >= 0.0 && d < self.length) {
            return Err(RouteError::OutOfRange { d, length: self.length });
        }
        Ok(self.zone_index_clamped(d))
    }

    /// Like [`zone_index`](Self::zone_index) but clamps `d` into the route;
    /// `d >= length` maps to the last zone.
    pub fn zone_index_clamped(&self, d: f64) -> usize {
        self.zones.partition_point(|z| z.start <= d).saturating_sub(1)
    }

    /// End of zone `index`: the next zone's start or the route length.
    pub fn zone_end(&self, index: usize) -> f64 {
        self.zones.get(index + 1).map_or(self.length, |z| z.start)
    }

    /// Legal speed at `d`, m/s.
    pub fn legal_speed(&self, d: f64) -> Result<f64, RouteError> {
        Ok(self.zones[self.zone_index(d)?].limit)
    }

    /// Legal speed with `d` clamped into the route; used on grid endpoints.
    pub fn legal_speed_clamped(&self, d: f64) -> f64 {
        self.zones[self.zone_index_clamped(d)].limit
    }

    /// Curvature at `d` by linear interpolation, held constant past the last sample.
    pub fn curvature_at(&self, d: f64) -> Result<f64, RouteError> {
        if !(d >= 0.0 && d <= self.length) {
            return Err(RouteError::OutOfRange { d, length: self.length });
        }
        Ok(self.curvature_clamped(d))
    }

    pub(crate) fn curvature_clamped(&self, d: f64) -> f64 {
        let samples = &self.curvature;
        let upper = samples.partition_point(|s| s.distance <= d);
        if upper == 0 {
            return samples[0].curvature;
        }
        if upper == samples.len() {
            return samples[upper - 1].curvature;
        }
        let a = samples[upper - 1];
        let b = samples[upper];
        let t = (d - a.distance) / (b.distance - a.distance);
        (1.0 - t) * a.curvature + t * b.curvature
    }

    /// Maximum curvature over `[from, to]`, both clamped into the route.
    pub fn max_curvature(&self, from: f64, to: f64) -> f64 {
        let lo = from.clamp(0.0, self.length);
        let hi = to.clamp(0.0, self.length);
        if hi < lo {
            return 0.0;
        }
        let interior = self
            .curvature
            .iter()
            .filter(|s| s.distance > lo && s.distance < hi)
            .map(|s| s.curvature);
        interior
            .chain([self.curvature_clamped(lo), self.curvature_clamped(hi)])
            .fold(0.0, f64::max)
    }

    /// Serializes back to the route file format.
    pub fn to_json(&self) -> String {
        let file = RouteFile {
            name: self.name.clone(),
            length_m: self.length,
            limit_zones: self
                .zones
                .iter()
                .map(|z| ZoneEntry { start_m: z.start, limit_kmh: z.limit_kmh })
                .collect(),
            curvature: self
                .curvature
                .iter()
                .map(|c| CurvatureEntry { d_m: c.distance, kappa_inv_m: c.curvature })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("route serializes")
    }
}
