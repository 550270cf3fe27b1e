//! Batch experiments: baseline planning, offline replay, and the two-system
//! study protocol run over a synthetic cohort.
//!
//! Per driver the study drives `laps` laps on the static baseline (system A)
//! plus one lap without interventions, pre-trains on the last A lap, then
//! drives `laps` adaptive laps (system B) with a learning step after each,
//! plus a final lap without interventions.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{make_preference, DriverModel, PerturbationSpec};
use crate::metrics::{intervention_rates, mean_rates, profile_rmse, write_ir_csv, InterventionRates, IrRow, MetricsError};
use crate::planner::{apply_set_speed_offsets, plan_base_profile, PlannerError, PlannerParams};
use crate::profile::{ProfileError, SpeedProfile};
use crate::route::{two_drop_route, RouteError, RouteMap};
use crate::sim::{run_lap, DistanceAction, DistanceScript, DriveLog, NullInputs, SimError, SimParams};
use crate::spaa::{apply_iteration, IterationState, SetSpeedEntry, SetSpeedOffsetMap, SpaaError, StretchParams};
use crate::units::kmh_to_mps;

/// Four gas presses during the two deceleration ramps of the two-drop route,
/// from a driver who wants to slow down later and more gently.
pub const TWO_DROP_PRESSES_JSON: &str = include_str!("../data/two_drop_gas_presses.json");

/// Environment variable that overrides the study seed.
pub const SEED_ENV: &str = "ADAPTIVE_PLDF_SEED";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Spaa(#[from] SpaaError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl ExperimentError {
    /// Input and validation problems, as opposed to I/O or internal failures.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Self::Io { .. })
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.display().to_string(), source }
}

pub fn read_file(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Planner, simulator and adjustment parameters, loadable from TOML or JSON.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentParams {
    pub planner: PlannerParams,
    pub sim: SimParams,
    pub spaa: StretchParams,
}

impl ExperimentParams {
    /// Parses JSON if the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let params: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ExperimentError::Invalid(format!("params: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| ExperimentError::Invalid(format!("params: {e}")))?
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.planner.validate()?;
        self.spaa.validate()?;
        self.spaa.sg_points(self.planner.grid_step)?;
        if !(self.sim.dt > 0.0) {
            return Err(SimError::TickRate(1.0 / self.sim.dt).into());
        }
        Ok(())
    }
}

/// A whole-zone set-speed offset given on the command line as `ZONE=KMH`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneOffset {
    pub zone: usize,
    pub kmh: f64,
}

impl std::str::FromStr for ZoneOffset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (zone, kmh) = s.split_once('=').ok_or_else(|| format!("expected ZONE=KMH, got {s:?}"))?;
        Ok(Self {
            zone: zone.trim().parse().map_err(|e| format!("zone index {zone:?}: {e}"))?,
            kmh: kmh.trim().parse().map_err(|e| format!("offset {kmh:?}: {e}"))?,
        })
    }
}

/// Baseline profile for `map`, with optional whole-zone offsets.
pub fn plan(map: &RouteMap, params: &ExperimentParams, offsets: &[ZoneOffset]) -> Result<SpeedProfile, ExperimentError> {
    let base = plan_base_profile(map, &params.planner)?;
    let mut entries = Vec::with_capacity(offsets.len());
    for o in offsets {
        if o.zone >= map.zones().len() {
            return Err(ExperimentError::Invalid(format!(
                "offset zone {} does not exist (route has {} zones)",
                o.zone,
                map.zones().len()
            )));
        }
        entries.push(SetSpeedEntry {
            start: map.zones()[o.zone].start,
            end: map.zone_end(o.zone),
            offset: kmh_to_mps(o.kmh),
            whole_segment: true,
        });
    }
    Ok(apply_set_speed_offsets(&base, map, &SetSpeedOffsetMap::from_entries(entries), &params.planner)?)
}

/// One learning step on a stored log. The log must have been driven on
/// `baseline` (the planner baseline when `None`).
pub fn replay(
    map: &RouteMap,
    log: &DriveLog,
    baseline: Option<SpeedProfile>,
    params: &ExperimentParams,
) -> Result<SpeedProfile, ExperimentError> {
    let baseline = match baseline {
        Some(b) => b,
        None => plan_base_profile(map, &params.planner)?,
    };
    let state = IterationState::new(baseline);
    Ok(apply_iteration(&state, log, map, &params.planner, &params.spaa)?.baseline)
}

pub fn load_cohort(text: &str) -> Result<Vec<PerturbationSpec>, ExperimentError> {
    let cohort: Vec<PerturbationSpec> =
        serde_json::from_str(text).map_err(|e| ExperimentError::Invalid(format!("cohort: {e}")))?;
    let mut ids: Vec<&str> = cohort.iter().map(|s| s.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(ExperimentError::Invalid(format!("cohort: duplicate driver id {:?}", w[0])));
    }
    Ok(cohort)
}

/// The two-drop scenario after one learning step.
#[derive(Debug, Clone)]
pub struct TwoDropOutcome {
    pub map: RouteMap,
    pub baseline: SpeedProfile,
    pub log: DriveLog,
    pub prepro: SpeedProfile,
    pub adjusted: SpeedProfile,
}

/// Drives the two-drop route once with the bundled gas presses and learns from it.
pub fn two_drop_scenario(params: &ExperimentParams) -> Result<TwoDropOutcome, ExperimentError> {
    let map = two_drop_route();
    let actions: Vec<DistanceAction> =
        serde_json::from_str(TWO_DROP_PRESSES_JSON).expect("bundled press script parses");
    let baseline = plan_base_profile(&map, &params.planner)?;
    let shared = Arc::new(map.clone());
    let log = run_lap(shared, baseline.clone(), "iter0", &mut DistanceScript::new(actions), params.planner, params.sim)?;
    let prepro = crate::spaa::build_prepro_profile(&log, &baseline, &map, &params.spaa);
    let state = apply_iteration(&IterationState::new(baseline.clone()), &log, &map, &params.planner, &params.spaa)?;
    Ok(TwoDropOutcome { map, baseline, log, prepro, adjusted: state.baseline })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub laps_per_system: usize,
    pub master_seed: u64,
    pub params: ExperimentParams,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { laps_per_system: 2, master_seed: 0, params: ExperimentParams::default() }
    }
}

/// Seed actually used: the environment override if set and valid.
pub fn effective_seed(cli_seed: u64) -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(cli_seed)
}

fn mix_seed(master: u64, driver: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ driver;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LapOutcome {
    pub label: String,
    pub system: char,
    pub with_interventions: bool,
    pub rates: InterventionRates,
    #[serde(skip)]
    pub log: DriveLog,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverOutcome {
    pub id: String,
    pub laps: Vec<LapOutcome>,
    /// Distance of each learned baseline (iteration 0 = planner) to the driver's preference.
    pub rmse_by_iteration: Vec<f64>,
    #[serde(skip)]
    pub final_state: IterationState,
    #[serde(skip)]
    pub v_pref: SpeedProfile,
}

impl DriverOutcome {
    pub fn ir_rows(&self) -> Vec<IrRow> {
        self.laps.iter().map(|l| IrRow::new(&self.id, &l.label, &l.rates)).collect()
    }

    /// Whether the preference distance fell at every step from iteration 0 to `upto`.
    pub fn rmse_strictly_decreasing(&self, upto: usize) -> bool {
        self.rmse_by_iteration.len() > upto && self.rmse_by_iteration[..=upto].windows(2).all(|w| w[1] < w[0])
    }
}

/// Runs the full protocol for one driver.
pub fn run_driver(
    map: &Arc<RouteMap>,
    base: &SpeedProfile,
    spec: &PerturbationSpec,
    config: &StudyConfig,
) -> Result<DriverOutcome, ExperimentError> {
    let p = &config.params;
    let seed = mix_seed(config.master_seed, spec.seed);
    let seeded = PerturbationSpec { seed, ..spec.clone() };
    let pref = make_preference(map, base, &seeded, &p.planner);
    let v_pref = pref.v_pref.clone();
    let mut driver = DriverModel::new(pref, map.clone(), p.planner, seed);
    let mut laps = Vec::new();
    let mut lap = |label: String, system: char, profile: &SpeedProfile, id: String, live: bool, driver: &mut DriverModel| {
        let log = if live {
            run_lap(map.clone(), profile.clone(), &id, driver, p.planner, p.sim)?
        } else {
            run_lap(map.clone(), profile.clone(), &id, &mut NullInputs, p.planner, p.sim)?
        };
        let rates = intervention_rates(&log)?;
        laps.push(LapOutcome { label, system, with_interventions: live, rates, log: log.clone() });
        Ok::<DriveLog, ExperimentError>(log)
    };

    let mut last_static = None;
    for k in 1..=config.laps_per_system {
        last_static = Some(lap(format!("A{k}"), 'A', base, "base".into(), true, &mut driver)?);
    }
    lap("A_final".into(), 'A', base, "base".into(), false, &mut driver)?;

    let mut state = IterationState::new(base.clone());
    if let Some(log) = &last_static {
        state = apply_iteration(&state, log, map, &p.planner, &p.spaa)?;
    }
    for k in 1..=config.laps_per_system {
        let log = lap(format!("B{k}"), 'B', &state.baseline, state.profile_id(), true, &mut driver)?;
        state = apply_iteration(&state, &log, map, &p.planner, &p.spaa)?;
    }
    lap("B_final".into(), 'B', &state.baseline, state.profile_id(), false, &mut driver)?;

    let rmse_by_iteration = state
        .history
        .iter()
        .map(|h| profile_rmse(&h.profile, &v_pref))
        .collect::<Result<_, _>>()?;
    Ok(DriverOutcome { id: spec.id.clone(), laps, rmse_by_iteration, final_state: state, v_pref })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortSummary {
    pub drivers: usize,
    pub failed: usize,
    /// Mean over system A laps with interventions.
    pub static_mean: Option<InterventionRates>,
    /// Mean over system B laps with interventions.
    pub adaptive_mean: Option<InterventionRates>,
    pub combined_ir_ratio: Option<f64>,
    /// Mean preference distance per iteration.
    pub mean_rmse_by_iteration: Vec<f64>,
    /// Share of drivers whose preference distance fell from iteration 0 through 2.
    pub rmse_decreasing_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverReport {
    pub id: String,
    pub error: Option<String>,
    pub laps: Vec<LapOutcome>,
    pub rmse_by_iteration: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySummary {
    pub route: String,
    pub master_seed: u64,
    pub laps_per_system: usize,
    pub params: ExperimentParams,
    pub cohort: CohortSummary,
    pub drivers: Vec<DriverReport>,
}

#[derive(Debug)]
pub struct StudyReport {
    pub summary: StudySummary,
    pub outcomes: Vec<Result<DriverOutcome, String>>,
    pub rows: Vec<IrRow>,
}

/// Runs every driver of the cohort (in parallel) and aggregates the results.
/// A failing driver is reported in the summary and does not stop the others.
pub fn run_study(map: &RouteMap, cohort: &[PerturbationSpec], config: &StudyConfig) -> Result<StudyReport, ExperimentError> {
    config.params.validate()?;
    if config.laps_per_system == 0 {
        return Err(ExperimentError::Invalid("laps per system must be at least 1".into()));
    }
    let map = Arc::new(map.clone());
    let base = plan_base_profile(&map, &config.params.planner)?;
    let outcomes: Vec<Result<DriverOutcome, String>> = cohort
        .par_iter()
        .map(|spec| run_driver(&map, &base, spec, config).map_err(|e| e.to_string()))
        .collect();

    let ok: Vec<&DriverOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let rows: Vec<IrRow> = ok.iter().flat_map(|o| o.ir_rows()).collect();
    let interactive = |system: char| -> Vec<IrRow> {
        ok.iter()
            .flat_map(|o| {
                o.laps
                    .iter()
                    .filter(move |l| l.system == system && l.with_interventions)
                    .map(|l| IrRow::new(&o.id, &l.label, &l.rates))
            })
            .collect()
    };
    let static_mean = mean_rates(&interactive('A'));
    let adaptive_mean = mean_rates(&interactive('B'));
    let combined_ir_ratio = match (static_mean, adaptive_mean) {
        (Some(a), Some(b)) if a.combined_ir > 0.0 => Some(b.combined_ir / a.combined_ir),
        _ => None,
    };
    let iterations = ok.iter().map(|o| o.rmse_by_iteration.len()).min().unwrap_or(0);
    let mean_rmse_by_iteration = (0..iterations)
        .map(|k| ok.iter().map(|o| o.rmse_by_iteration[k]).sum::<f64>() / ok.len() as f64)
        .collect();
    let decreasing = ok.iter().filter(|o| o.rmse_strictly_decreasing(2)).count();
    let rmse_decreasing_fraction = if ok.is_empty() { 0.0 } else { decreasing as f64 / ok.len() as f64 };

    let drivers = cohort
        .iter()
        .zip(&outcomes)
        .map(|(spec, o)| match o {
            Ok(o) => DriverReport {
                id: o.id.clone(),
                error: None,
                laps: o.laps.clone(),
                rmse_by_iteration: o.rmse_by_iteration.clone(),
            },
            Err(e) => DriverReport { id: spec.id.clone(), error: Some(e.clone()), laps: vec![], rmse_by_iteration: vec![] },
        })
        .collect();

    Ok(StudyReport {
        summary: StudySummary {
            route: map.name().to_string(),
            master_seed: config.master_seed,
            laps_per_system: config.laps_per_system,
            params: config.params,
            cohort: CohortSummary {
                drivers: cohort.len(),
                failed: outcomes.len() - ok.len(),
                static_mean,
                adaptive_mean,
                combined_ir_ratio,
                mean_rmse_by_iteration,
                rmse_decreasing_fraction,
            },
            drivers,
        },
        outcomes,
        rows,
    })
}

#[derive(Debug, Serialize)]
struct HistoryManifest<'a> {
    driver_id: &'a str,
    params: &'a ExperimentParams,
    iterations: Vec<ManifestIteration>,
    offsets: &'a SetSpeedOffsetMap,
}

#[derive(Debug, Serialize)]
struct ManifestIteration {
    iteration: u32,
    profile_csv: String,
    rmse_to_preference: f64,
    learned_from: Option<crate::spaa::LapSummary>,
}

/// Iteration history of one driver: `profiles/iter<k>.csv` plus `history.json`.
pub fn write_history(
    dir: &Path,
    driver_id: &str,
    state: &IterationState,
    rmse: &[f64],
    params: &ExperimentParams,
) -> Result<(), ExperimentError> {
    let mut iterations = Vec::new();
    for (k, h) in state.history.iter().enumerate() {
        let name = format!("profiles/iter{}.csv", h.iteration);
        write_file(&dir.join(&name), h.profile.to_csv_string())?;
        iterations.push(ManifestIteration {
            iteration: h.iteration,
            profile_csv: name,
            rmse_to_preference: rmse.get(k).copied().unwrap_or(f64::NAN),
            learned_from: h.lap.clone(),
        });
    }
    let manifest = HistoryManifest { driver_id, params, iterations, offsets: &state.offsets };
    write_file(&dir.join("history.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
}

/// Writes the report bundle:
///
/// ```text
/// out/summary.json
/// out/ir_evolution.csv
/// out/<driver_id>/lap<k>.json        (states at 10 Hz)
/// out/<driver_id>/preference.csv
/// out/<driver_id>/profiles/iter<k>.csv
/// out/<driver_id>/history.json
/// ```
pub fn write_study(report: &StudyReport, out: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write_file(&out.join("summary.json"), serde_json::to_string_pretty(&report.summary).expect("summary serializes"))?;
    let mut csv = Vec::new();
    write_ir_csv(&report.rows, &mut csv)?;
    write_file(&out.join("ir_evolution.csv"), csv)?;

    for outcome in report.outcomes.iter().filter_map(|o| o.as_ref().ok()) {
        let dir = out.join(&outcome.id);
        for (k, lap) in outcome.laps.iter().enumerate() {
            write_file(&dir.join(format!("lap{}.json", k + 1)), lap.log.to_json(true))?;
        }
        write_file(&dir.join("preference.csv"), outcome.v_pref.to_csv_string())?;
        write_history(&dir, &outcome.id, &outcome.final_state, &outcome.rmse_by_iteration, &report.summary.params)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::route::demo_route;

    #[test]
    fn params_parse_toml_and_json() {
        let p = ExperimentParams::parse("[planner]\naccel_max = 1.0\n[spaa]\nalpha = 0.3\n").unwrap();
        assert_eq!(p.planner.accel_max, 1.0);
        assert_eq!(p.spaa.alpha, 0.3);
        assert_eq!(p.sim, SimParams::default());
        let p = ExperimentParams::parse(r#"{"spaa": {"max_over_limit": 2.0}}"#).unwrap();
        assert_eq!(p.spaa.max_over_limit, Some(2.0));
        assert!(ExperimentParams::parse("[spaa]\nalpha = 1.5\n").is_err());
    }

    #[test]
    fn zone_offset_parsing() {
        assert_eq!("2=5".parse::<ZoneOffset>().unwrap(), ZoneOffset { zone: 2, kmh: 5.0 });
        assert_eq!("1=-10".parse::<ZoneOffset>().unwrap(), ZoneOffset { zone: 1, kmh: -10.0 });
        assert!("x".parse::<ZoneOffset>().is_err());
    }

    #[test]
    fn plan_demo_grid() {
        let p = plan(&demo_route(), &ExperimentParams::default(), &[]).unwrap();
        assert_eq!(p.len(), 4501);
        assert!(plan(&demo_route(), &ExperimentParams::default(), &[ZoneOffset { zone: 99, kmh: 5.0 }]).is_err());
    }

    #[test]
    fn duplicate_cohort_ids_rejected() {
        assert!(load_cohort(r#"[{"id":"a"},{"id":"a"}]"#).is_err());
        assert_eq!(load_cohort(r#"[{"id":"a"},{"id":"b","seed":3}]"#).unwrap().len(), 2);
    }
}
