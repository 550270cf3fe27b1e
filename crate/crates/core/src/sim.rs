//! Fixed-timestep longitudinal simulation of one lap with driver overrides.
//!
//! Gas overrides the function only while pressed. Brake deactivates it until
//! [`Simulator::reactivate`] is called. The set-speed lever shifts the target
//! by 5 km/h steps until the next limit zone starts.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{apply_set_speed_offsets, PlannerParams};
use crate::profile::SpeedProfile;
use crate::route::RouteMap;
use crate::spaa::{SetSpeedEntry, SetSpeedOffsetMap};
use crate::units::set_speed_step;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("set-speed lever needs an active driving function")]
    PldfInactive,
    #[error("cannot reactivate while the brake is pressed")]
    BrakeHeld,
    #[error("lap already finished")]
    LapFinished,
    #[error("profile covers [{start}, {end}] m but the route is {length} m long")]
    ProfileCoverage { start: f64, end: f64, length: f64 },
    #[error("tick rate must be positive, got {0} Hz")]
    TickRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Fixed tick, s.
    pub dt: f64,
    /// Acceleration at full gas, m/s².
    pub gas_accel_max: f64,
    /// Deceleration at full brake, m/s².
    pub brake_decel_max: f64,
    /// Rolling deceleration with no pedal and the function off, m/s².
    pub coast_drag: f64,
    /// Proportional gain of the speed controller, 1/s.
    pub kp: f64,
    /// Controller acceleration clamp, m/s².
    pub accel_max: f64,
    /// Controller deceleration clamp (positive), m/s².
    pub decel_max: f64,
    /// A lap not finished after this much simulated time is cut off.
    pub max_lap_time: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        let planner = PlannerParams::default();
        Self {
            dt: 0.02,
            gas_accel_max: 2.5,
            brake_decel_max: 4.0,
            coast_drag: 0.3,
            kp: 0.8,
            accel_max: planner.accel_max,
            decel_max: planner.decel_max,
            max_lap_time: 3600.0,
        }
    }
}

impl SimParams {
    pub fn with_tick_hz(mut self, hz: f64) -> Result<Self, SimError> {
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(SimError::TickRate(hz));
        }
        self.dt = 1.0 / hz;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub t: f64,
    pub d: f64,
    pub v: f64,
    pub pldf_active: bool,
    pub gas: f64,
    pub brake: f64,
    /// Live set-speed offset, m/s.
    pub set_speed_offset: f64,
    pub active_limit: f64,
    /// Profile speed the controller aims for at `d`.
    pub target_v: f64,
    /// Active profile value at the state's own `d`.
    pub ref_v: f64,
}

impl SimState {
    pub fn intervening(&self) -> bool {
        self.gas > 0.0 || self.brake > 0.0 || !self.pldf_active || self.set_speed_offset != 0.0
    }
}

/// Pedal positions for one tick, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pedals {
    pub gas: f64,
    pub brake: f64,
}

impl Pedals {
    fn clamped(self) -> Self {
        let clamp = |x: f64| if x.is_finite() { x.clamp(0.0, 1.0) } else { 0.0 };
        Self { gas: clamp(self.gas), brake: clamp(self.brake) }
    }
}

/// Everything a driver can do before one tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DriverInputs {
    pub pedals: Pedals,
    /// Set-speed lever presses, each ±5 km/h.
    pub lever_steps: i32,
    pub reactivate: bool,
}

/// Advances `state` by `dt`. Brake wins over gas; brake deactivates the
/// function. Semi-implicit Euler, speed clamped at zero.
///
/// The controller feeds forward the acceleration the profile asks for over
/// the next tick and corrects the remaining error proportionally.
pub fn step(
    state: &SimState,
    pedals: Pedals,
    profile: &SpeedProfile,
    map: &RouteMap,
    params: &SimParams,
) -> SimState {
    let pedals = pedals.clamped();
    let dt = params.dt;
    let target_v = profile.at(state.d);
    let pldf_active = state.pldf_active && pedals.brake == 0.0;
    let accel = if pedals.brake > 0.0 {
        -pedals.brake * params.brake_decel_max
    } else if pedals.gas > 0.0 {
        pedals.gas * params.gas_accel_max
    } else if pldf_active {
        let feedforward = (profile.at(state.d + state.v * dt) - target_v) / dt;
        (feedforward + params.kp * (target_v - state.v)).clamp(-params.decel_max, params.accel_max)
    } else {
        -params.coast_drag
    };
    let v = (state.v + accel * dt).max(0.0);
    let d = state.d + v * dt;
    SimState {
        t: state.t + dt,
        d,
        v,
        pldf_active,
        gas: pedals.gas,
        brake: pedals.brake,
        set_speed_offset: state.set_speed_offset,
        active_limit: map.legal_speed_clamped(d),
        target_v,
        ref_v: profile.at(d),
    }
}

/// Turns the function back on after a brake deactivation.
pub fn reactivate_pldf(state: &SimState) -> Result<SimState, SimError> {
    if state.brake > 0.0 {
        return Err(SimError::BrakeHeld);
    }
    Ok(SimState { pldf_active: true, ..*state })
}

/// Accumulates `steps` lever presses into the state's offset.
pub fn adjust_set_speed(state: &SimState, steps: i32) -> Result<SimState, SimError> {
    if !state.pldf_active {
        return Err(SimError::PldfInactive);
    }
    let mut offset = state.set_speed_offset + f64::from(steps) * set_speed_step();
    if offset.abs() < 1e-9 {
        offset = 0.0;
    }
    Ok(SimState { set_speed_offset: offset, ..*state })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionKind {
    Gas,
    Brake,
    SetSpeed,
}

impl InterventionKind {
    pub fn is_pedal(self) -> bool {
        matches!(self, Self::Gas | Self::Brake)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    /// Gas pedal returned to zero.
    Released,
    /// Driving function switched back on after a brake.
    Reactivated,
    /// Offset discarded on entering the next limit zone.
    ZoneBoundary,
    /// Lever moved to a different offset (or back to zero).
    LeverChange,
    LapEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub d: f64,
    pub v: f64,
}

/// One driver intervention with its `(d_i, v_i)` trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub kind: InterventionKind,
    pub t_start: f64,
    pub t_end: f64,
    pub samples: Vec<Sample>,
    /// Set-speed offset in m/s; zero for pedal records.
    pub offset: f64,
    pub ended_by: EndReason,
}

impl InterventionRecord {
    fn open(kind: InterventionKind, state: &SimState, offset: f64) -> Self {
        Self {
            kind,
            t_start: state.t,
            t_end: state.t,
            samples: vec![Sample { d: state.d, v: state.v }],
            offset,
            ended_by: EndReason::LapEnd,
        }
    }

    fn close(mut self, t_end: f64, ended_by: EndReason) -> Self {
        self.t_end = t_end;
        self.ended_by = ended_by;
        self
    }

    pub fn d_start(&self) -> f64 {
        self.samples[0].d
    }

    pub fn d_end(&self) -> f64 {
        self.samples[self.samples.len() - 1].d
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }
}

/// A driver action at a given tick, kept so a lap can be replayed exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum InputEvent {
    Pedals { tick: u64, gas: f64, brake: f64 },
    Lever { tick: u64, steps: i32 },
    Reactivate { tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveLog {
    pub route: String,
    pub profile_id: String,
    pub dt: f64,
    pub complete: bool,
    pub lap_time: f64,
    pub states: Vec<SimState>,
    pub interventions: Vec<InterventionRecord>,
    pub inputs: Vec<InputEvent>,
}

impl DriveLog {
    /// JSON export. With `downsample_10hz` only every state on a 0.1 s
    /// boundary (plus the last) is written; interventions stay full resolution.
    pub fn to_json(&self, downsample_10hz: bool) -> String {
        if !downsample_10hz {
            return serde_json::to_string(self).expect("log serializes");
        }
        let stride = ((0.1 / self.dt).round() as usize).max(1);
        let mut thinned = self.clone();
        let last = self.states.len().saturating_sub(1);
        thinned.states = self
            .states
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i == last)
            .map(|(_, s)| *s)
            .collect();
        serde_json::to_string(&thinned).expect("log serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn records(&self, kind: InterventionKind) -> impl Iterator<Item = &InterventionRecord> {
        self.interventions.iter().filter(move |r| r.kind == kind)
    }

    /// Driver speed trace as strictly distance-ascending samples. Standstill
    /// duplicates keep the latest speed.
    pub fn speed_trace(&self) -> Vec<Sample> {
        let mut trace: Vec<Sample> = Vec::with_capacity(self.states.len());
        for s in &self.states {
            match trace.last_mut() {
                Some(last) if s.d <= last.d => last.v = s.v,
                _ => trace.push(Sample { d: s.d, v: s.v }),
            }
        }
        trace
    }
}

/// Supplies driver inputs tick by tick. `None` aborts the lap.
pub trait InputSource {
    fn reset(&mut self) {}
    fn next_inputs(&mut self, state: &SimState) -> Option<DriverInputs>;
}

/// A driver who never touches anything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullInputs;

impl InputSource for NullInputs {
    fn next_inputs(&mut self, _state: &SimState) -> Option<DriverInputs> {
        Some(DriverInputs::default())
    }
}

/// Replays a recorded [`InputEvent`] timeline tick by tick.
#[derive(Debug, Clone)]
pub struct ScriptedInputs {
    events: Vec<InputEvent>,
    cursor: usize,
    tick: u64,
    pedals: Pedals,
}

impl ScriptedInputs {
    pub fn new(mut events: Vec<InputEvent>) -> Self {
        events.sort_by_key(event_tick);
        Self { events, cursor: 0, tick: 0, pedals: Pedals::default() }
    }
}

fn event_tick(e: &InputEvent) -> u64 {
    match *e {
        InputEvent::Pedals { tick, .. } | InputEvent::Lever { tick, .. } | InputEvent::Reactivate { tick } => tick,
    }
}

impl InputSource for ScriptedInputs {
    fn reset(&mut self) {
        self.cursor = 0;
        self.tick = 0;
        self.pedals = Pedals::default();
    }

    fn next_inputs(&mut self, _state: &SimState) -> Option<DriverInputs> {
        let mut inputs = DriverInputs::default();
        while let Some(event) = self.events.get(self.cursor) {
            if event_tick(event) != self.tick {
                break;
            }
            match *event {
                InputEvent::Pedals { gas, brake, .. } => self.pedals = Pedals { gas, brake },
                InputEvent::Lever { steps, .. } => inputs.lever_steps += steps,
                InputEvent::Reactivate { .. } => inputs.reactivate = true,
            }
            self.cursor += 1;
        }
        inputs.pedals = self.pedals;
        self.tick += 1;
        Some(inputs)
    }
}

/// Pedal or lever action triggered by position along the route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum DistanceAction {
    /// Hold the pedals for `from_m <= d < to_m`.
    Pedals { from_m: f64, to_m: f64, gas: f64, brake: f64 },
    /// Lever presses once `d >= at_m`.
    Lever { at_m: f64, steps: i32 },
    /// Reactivate once `d >= at_m`.
    Reactivate { at_m: f64 },
}

/// Inputs scripted by distance rather than tick, for hand-built scenarios.
#[derive(Debug, Clone)]
pub struct DistanceScript {
    actions: Vec<DistanceAction>,
    fired: Vec<bool>,
}

impl DistanceScript {
    pub fn new(actions: Vec<DistanceAction>) -> Self {
        let fired = vec![false; actions.len()];
        Self { actions, fired }
    }
}

impl InputSource for DistanceScript {
    fn reset(&mut self) {
        self.fired.iter_mut().for_each(|f| *f = false);
    }

    fn next_inputs(&mut self, state: &SimState) -> Option<DriverInputs> {
        let mut inputs = DriverInputs::default();
        for (action, fired) in self.actions.iter().zip(self.fired.iter_mut()) {
            match *action {
                DistanceAction::Pedals { from_m, to_m, gas, brake } => {
                    if state.d >= from_m && state.d < to_m {
                        inputs.pedals.gas = inputs.pedals.gas.max(gas);
                        inputs.pedals.brake = inputs.pedals.brake.max(brake);
                    }
                }
                DistanceAction::Lever { at_m, steps } if !*fired && state.d >= at_m => {
                    inputs.lever_steps += steps;
                    *fired = true;
                }
                DistanceAction::Reactivate { at_m } if !*fired && state.d >= at_m => {
                    inputs.reactivate = true;
                    *fired = true;
                }
                _ => {}
            }
        }
        Some(inputs)
    }
}

/// One lap in progress: physics plus intervention bookkeeping.
#[derive(Debug, Clone)]
pub struct Simulator {
    map: Arc<RouteMap>,
    base: SpeedProfile,
    effective: SpeedProfile,
    planner: PlannerParams,
    params: SimParams,
    profile_id: String,
    state: SimState,
    zone: usize,
    tick: u64,
    last_pedals: Pedals,
    states: Vec<SimState>,
    records: Vec<InterventionRecord>,
    open_gas: Option<InterventionRecord>,
    open_brake: Option<InterventionRecord>,
    open_set: Option<InterventionRecord>,
    inputs: Vec<InputEvent>,
    done: bool,
}

impl Simulator {
    pub fn new(
        map: Arc<RouteMap>,
        profile: SpeedProfile,
        profile_id: impl Into<String>,
        planner: PlannerParams,
        params: SimParams,
    ) -> Result<Self, SimError> {
        if !(params.dt > 0.0 && params.dt.is_finite()) {
            return Err(SimError::TickRate(1.0 / params.dt));
        }
        if profile.start() > 0.0 || profile.end() < map.length() {
            return Err(SimError::ProfileCoverage {
                start: profile.start(),
                end: profile.end(),
                length: map.length(),
            });
        }
        let v0 = profile.at(0.0);
        let state = SimState {
            t: 0.0,
            d: 0.0,
            v: v0,
            pldf_active: true,
            gas: 0.0,
            brake: 0.0,
            set_speed_offset: 0.0,
            active_limit: map.legal_speed_clamped(0.0),
            target_v: v0,
            ref_v: v0,
        };
        Ok(Self {
            map,
            effective: profile.clone(),
            base: profile,
            planner,
            params,
            profile_id: profile_id.into(),
            state,
            zone: 0,
            tick: 0,
            last_pedals: Pedals::default(),
            states: vec![state],
            records: Vec::new(),
            open_gas: None,
            open_brake: None,
            open_set: None,
            inputs: Vec::new(),
            done: false,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn map(&self) -> &RouteMap {
        &self.map
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    /// Profile the controller is currently tracking (baseline plus live offset).
    pub fn effective_profile(&self) -> &SpeedProfile {
        &self.effective
    }

    pub fn reactivate(&mut self) -> Result<(), SimError> {
        if self.done {
            return Err(SimError::LapFinished);
        }
        if self.state.pldf_active {
            return Ok(());
        }
        self.state = reactivate_pldf(&self.state)?;
        self.inputs.push(InputEvent::Reactivate { tick: self.tick });
        if let Some(rec) = self.open_brake.take() {
            self.records.push(rec.close(self.state.t, EndReason::Reactivated));
        }
        Ok(())
    }

    pub fn adjust_set_speed(&mut self, steps: i32) -> Result<(), SimError> {
        if self.done {
            return Err(SimError::LapFinished);
        }
        if steps == 0 {
            return Ok(());
        }
        self.state = adjust_set_speed(&self.state, steps)?;
        self.inputs.push(InputEvent::Lever { tick: self.tick, steps });
        if let Some(rec) = self.open_set.take() {
            self.records.push(rec.close(self.state.t, EndReason::LeverChange));
        }
        let offset = self.state.set_speed_offset;
        if offset != 0.0 {
            self.open_set = Some(InterventionRecord::open(InterventionKind::SetSpeed, &self.state, offset));
        }
        self.rebuild_effective();
        Ok(())
    }

    fn rebuild_effective(&mut self) {
        let offset = self.state.set_speed_offset;
        if offset == 0.0 {
            self.effective = self.base.clone();
            return;
        }
        let end = self.map.zone_end(self.zone);
        let start = self.state.d.min(end);
        if start >= end {
            return;
        }
        let offsets = SetSpeedOffsetMap::from_entries(vec![SetSpeedEntry {
            start,
            end,
            offset,
            whole_segment: false,
        }]);
        self.effective = apply_set_speed_offsets(&self.base, &self.map, &offsets, &self.planner)
            .expect("live offset span lies inside the route");
    }

    /// Advances one tick with the given pedal positions.
    pub fn tick(&mut self, pedals: Pedals) -> Result<&SimState, SimError> {
        if self.done {
            return Err(SimError::LapFinished);
        }
        let pedals = pedals.clamped();
        if pedals != self.last_pedals {
            self.inputs.push(InputEvent::Pedals { tick: self.tick, gas: pedals.gas, brake: pedals.brake });
            self.last_pedals = pedals;
        }

        if pedals.gas > 0.0 {
            if self.open_gas.is_none() {
                self.open_gas = Some(InterventionRecord::open(InterventionKind::Gas, &self.state, 0.0));
            }
        } else if let Some(rec) = self.open_gas.take() {
            self.records.push(rec.close(self.state.t, EndReason::Released));
        }
        if pedals.brake > 0.0 && self.open_brake.is_none() {
            self.open_brake = Some(InterventionRecord::open(InterventionKind::Brake, &self.state, 0.0));
        }

        let next = step(&self.state, pedals, &self.effective, &self.map, &self.params);
        self.state = next;
        self.tick += 1;
        let sample = Sample { d: next.d, v: next.v };
        for rec in [&mut self.open_gas, &mut self.open_brake, &mut self.open_set].into_iter().flatten() {
            rec.samples.push(sample);
        }

        let zone = self.map.zone_index_clamped(next.d);
        if zone != self.zone {
            self.zone = zone;
            if self.state.set_speed_offset != 0.0 {
                self.state.set_speed_offset = 0.0;
                if let Some(rec) = self.open_set.take() {
                    self.records.push(rec.close(next.t, EndReason::ZoneBoundary));
                }
                self.rebuild_effective();
                self.state.ref_v = self.effective.at(next.d);
            }
        }

        if next.d >= self.map.length() || next.t >= self.params.max_lap_time {
            self.done = true;
            let t = next.t;
            for rec in [self.open_gas.take(), self.open_brake.take(), self.open_set.take()].into_iter().flatten() {
                self.records.push(rec.close(t, EndReason::LapEnd));
            }
        }
        self.states.push(self.state);
        Ok(&self.state)
    }

    /// Reactivation (skipped while the brake is pressed), lever presses
    /// (skipped while the function is off), then one tick with the pedals.
    pub fn apply(&mut self, inputs: DriverInputs) -> Result<&SimState, SimError> {
        if inputs.reactivate && inputs.pedals.brake == 0.0 {
            self.reactivate()?;
        }
        if inputs.lever_steps != 0 {
            match self.adjust_set_speed(inputs.lever_steps) {
                Ok(()) | Err(SimError::PldfInactive) => {}
                Err(e) => return Err(e),
            }
        }
        self.tick(inputs.pedals)
    }

    /// Closes the lap. Unfinished laps are flagged incomplete.
    pub fn finish(mut self) -> DriveLog {
        let complete = self.done && self.state.d >= self.map.length();
        let t = self.state.t;
        for rec in [self.open_gas.take(), self.open_brake.take(), self.open_set.take()].into_iter().flatten() {
            self.records.push(rec.close(t, EndReason::LapEnd));
        }
        self.records.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        DriveLog {
            route: self.map.name().to_string(),
            profile_id: self.profile_id,
            dt: self.params.dt,
            complete,
            lap_time: t,
            states: self.states,
            interventions: self.records,
            inputs: self.inputs,
        }
    }
}

/// Drives one full lap. Lever presses while the function is off and
/// reactivation requests while braking are ignored, as in the car.
pub fn run_lap(
    map: Arc<RouteMap>,
    profile: SpeedProfile,
    profile_id: &str,
    source: &mut dyn InputSource,
    planner: PlannerParams,
    params: SimParams,
) -> Result<DriveLog, SimError> {
    let mut sim = Simulator::new(map, profile, profile_id, planner, params)?;
    source.reset();
    while !sim.is_done() {
        let Some(inputs) = source.next_inputs(sim.state()) else {
            break;
        };
        sim.apply(inputs)?;
    }
    Ok(sim.finish())
}
