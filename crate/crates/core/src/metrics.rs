//! Intervention rates and profile distances.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{ProfileError, SpeedProfile};
use crate::sim::{DriveLog, InterventionKind};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("drive log is incomplete")]
    IncompleteLog,
    #[error("drive log has zero duration")]
    ZeroDuration,
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Fractions of lap time during which each kind of intervention was active.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InterventionRates {
    pub pedal_ir: f64,
    pub set_speed_ir: f64,
    pub combined_ir: f64,
    pub lap_time: f64,
}

/// Total length of the union of `[start, end]` intervals.
fn union_length(mut spans: Vec<(f64, f64)>) -> f64 {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (s, e) in spans {
        match current {
            Some((cs, ce)) if s <= ce => current = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                current = Some((s, e));
            }
            None => current = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = current {
        total += ce - cs;
    }
    total
}

/// Pedal, set-speed and combined intervention rates of one lap.
///
/// Each rate is the measure of the union of the matching records' time spans
/// over the lap time, so overlapping interventions count once. Brake time
/// runs from the press to reactivation. Set-speed time only includes offsets
/// the driver applied during this lap.
pub fn intervention_rates(log: &DriveLog) -> Result<InterventionRates, MetricsError> {
    if !log.complete {
        return Err(MetricsError::IncompleteLog);
    }
    if !(log.lap_time > 0.0) {
        return Err(MetricsError::ZeroDuration);
    }
    let spans = |keep: &dyn Fn(InterventionKind) -> bool| -> Vec<(f64, f64)> {
        log.interventions
            .iter()
            .filter(|r| keep(r.kind))
            .map(|r| (r.t_start, r.t_end))
            .collect()
    };
    let frac = |spans| (union_length(spans) / log.lap_time).clamp(0.0, 1.0);
    Ok(InterventionRates {
        pedal_ir: frac(spans(&|k| k.is_pedal())),
        set_speed_ir: frac(spans(&|k| k == InterventionKind::SetSpeed)),
        combined_ir: frac(spans(&|_| true)),
        lap_time: log.lap_time,
    })
}

/// One row of an IR evolution table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrRow {
    pub driver_id: String,
    pub lap: String,
    pub pedal_ir: f64,
    pub set_speed_ir: f64,
    pub combined_ir: f64,
    pub lap_time_s: f64,
}

impl IrRow {
    pub fn new(driver_id: &str, lap: &str, rates: &InterventionRates) -> Self {
        Self {
            driver_id: driver_id.to_string(),
            lap: lap.to_string(),
            pedal_ir: rates.pedal_ir,
            set_speed_ir: rates.set_speed_ir,
            combined_ir: rates.combined_ir,
            lap_time_s: rates.lap_time,
        }
    }
}

/// Rates for consecutive laps of one driver, laps numbered from 1.
pub fn ir_evolution(driver_id: &str, logs: &[DriveLog]) -> Result<Vec<IrRow>, MetricsError> {
    logs.iter()
        .enumerate()
        .map(|(k, log)| Ok(IrRow::new(driver_id, &(k + 1).to_string(), &intervention_rates(log)?)))
        .collect()
}

/// Writes `driver_id,lap,pedal_ir,set_speed_ir,combined_ir,lap_time_s`.
pub fn write_ir_csv<W: io::Write>(rows: &[IrRow], writer: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean of each rate over `rows`.
pub fn mean_rates<'a>(rows: impl IntoIterator<Item = &'a IrRow>) -> Option<InterventionRates> {
    let mut n = 0usize;
    let mut acc = InterventionRates::default();
    for r in rows {
        n += 1;
        acc.pedal_ir += r.pedal_ir;
        acc.set_speed_ir += r.set_speed_ir;
        acc.combined_ir += r.combined_ir;
        acc.lap_time += r.lap_time_s;
    }
    (n > 0).then(|| {
        let n = n as f64;
        InterventionRates {
            pedal_ir: acc.pedal_ir / n,
            set_speed_ir: acc.set_speed_ir / n,
            combined_ir: acc.combined_ir / n,
            lap_time: acc.lap_time / n,
        }
    })
}

/// Root mean squared pointwise difference of two profiles on the same grid.
pub fn profile_rmse(a: &SpeedProfile, b: &SpeedProfile) -> Result<f64, MetricsError> {
    a.check_grid(b)?;
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}
