//! Velocity over distance on a uniform grid.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::mps_to_kmh;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("profile step must be positive, got {0}")]
    Step(f64),
    #[error("profile needs at least two points, got {0}")]
    TooShort(usize),
    #[error("profile value {value} at index {index} is negative or not finite")]
    BadValue { index: usize, value: f64 },
    #[error("profile grids differ: ({0}) vs ({1})")]
    GridMismatch(String, String),
    #[error("profile csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Velocities in m/s sampled at `start + i * step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    start: f64,
    step: f64,
    values: Vec<f64>,
}

impl SpeedProfile {
    pub fn new(start: f64, step: f64, values: Vec<f64>) -> Result<Self, ProfileError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(ProfileError::Step(step));
        }
        if values.len() < 2 {
            return Err(ProfileError::TooShort(values.len()));
        }
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(ProfileError::BadValue { index, value });
        }
        Ok(Self { start, step, values })
    }

    /// Number of grid points needed to cover `[0, length]` at `step`.
    pub fn grid_len(length: f64, step: f64) -> usize {
        ((length / step) - 1e-9).ceil().max(1.0) as usize + 1
    }

    /// Grid over `[0, length]` filled from `f(d)`.
    pub fn from_fn(length: f64, step: f64, f: impl Fn(f64) -> f64) -> Result<Self, ProfileError> {
        let n = Self::grid_len(length, step);
        Self::new(0.0, step, (0..n).map(|i| f(i as f64 * step)).collect())
    }

    /// Constant profile over `[0, length]`.
    pub fn constant(length: f64, step: f64, v: f64) -> Result<Self, ProfileError> {
        Self::from_fn(length, step, |_| v)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn distance(&self, index: usize) -> f64 {
        self.start + index as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.distance(self.values.len() - 1)
    }

    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn at(&self, d: f64) -> f64 {
        let x = (d - self.start) / self.step;
        if !(x > 0.0) {
            return self.values[0];
        }
        let last = self.values.len() - 1;
        if x >= last as f64 {
            return self.values[last];
        }
        let i = x.floor() as usize;
        let t = x - i as f64;
        if t == 0.0 {
            return self.values[i];
        }
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// Grid indices whose distance lies in `[from, to)`.
    pub fn index_range(&self, from: f64, to: f64) -> std::ops::Range<usize> {
        let lo = ((from - self.start) / self.step - 1e-9).ceil().max(0.0) as usize;
        let hi = ((to - self.start) / self.step - 1e-9).ceil().max(0.0) as usize;
        lo.min(self.len())..hi.min(self.len())
    }

    pub fn same_grid(&self, other: &SpeedProfile) -> bool {
        self.start == other.start && self.step == other.step && self.len() == other.len()
    }

    pub fn check_grid(&self, other: &SpeedProfile) -> Result<(), ProfileError> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(ProfileError::GridMismatch(self.grid_desc(), other.grid_desc()))
        }
    }

    fn grid_desc(&self) -> String {
        format!("start {} step {} n {}", self.start, self.step, self.len())
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { start: self.start, step: self.step, values }
    }

    /// Sum of `step / v` over grid cells: the time needed to drive the profile.
    pub fn travel_time(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| {
                let mean = 0.5 * (w[0] + w[1]);
                if mean > 0.0 { self.step / mean } else { f64::INFINITY }
            })
            .sum()
    }

    /// Writes `d_m,v_mps,v_kmh`, one row per grid point.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), ProfileError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["d_m", "v_mps", "v_kmh"]).map_err(csv_err)?;
        for (i, v) in self.values.iter().enumerate() {
            w.serialize((self.distance(i), v, mps_to_kmh(*v))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads the format produced by [`write_csv`](Self::write_csv). The grid
    /// is inferred from the first two distances.
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, ProfileError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut ds = Vec::new();
        let mut vs = Vec::new();
        for row in r.deserialize::<(f64, f64, f64)>() {
            let (d, v, _) = row.map_err(csv_err)?;
            ds.push(d);
            vs.push(v);
        }
        if ds.len() < 2 {
            return Err(ProfileError::TooShort(ds.len()));
        }
        let step = ds[1] - ds[0];
        for (i, d) in ds.iter().enumerate() {
            if (ds[0] + i as f64 * step - d).abs() > 1e-6 * step.max(1.0) {
                return Err(ProfileError::Csv(format!("row {i}: distance {d} off the uniform grid")));
            }
        }
        Self::new(ds[0], step, vs)
    }
}

fn csv_err(e: csv::Error) -> ProfileError {
    ProfileError::Csv(e.to_string())
}
