//! One driving session: the route, the learning state and at most one lap in
//! progress. Pure state machine; the server decides when to advance it.

use std::sync::Arc;

use adaptive_pldf::experiment::ExperimentParams;
use adaptive_pldf::metrics::{intervention_rates, InterventionRates};
use adaptive_pldf::planner::plan_base_profile;
use adaptive_pldf::route::RouteMap;
use adaptive_pldf::sim::{DriveLog, DriverInputs, Pedals, Simulator};
use adaptive_pldf::spaa::{apply_iteration, IterationState, LapSummary};
use adaptive_pldf::units::{kmh_to_mps, set_speed_step};
use serde::Serialize;

use crate::protocol::{ClientMsg, ErrorCode, ServerMsg};
use crate::routes::RouteRegistry;

/// Client-facing tick rate, in simulated time.
pub const TICK_HZ: f64 = 20.0;

#[derive(Debug)]
struct LiveLap {
    id: String,
    sim: Simulator,
    pending: DriverInputs,
    next_emit: f64,
}

#[derive(Debug, Clone)]
pub struct CompletedLap {
    pub id: String,
    /// Learning iteration whose profile was driven.
    pub iteration: u32,
    pub rates: InterventionRates,
    pub log: DriveLog,
}

#[derive(Debug)]
pub struct Session {
    id: String,
    params: ExperimentParams,
    route: Option<Arc<RouteMap>>,
    learning: Option<IterationState>,
    lap: Option<LiveLap>,
    laps: Vec<CompletedLap>,
    /// Index into `laps` of the lap the next learning step would use.
    learnable: Option<usize>,
}

/// Manifest served at `/history`.
#[derive(Debug, Clone, Serialize)]
pub struct HistoryManifest {
    pub session_id: String,
    pub route: Option<String>,
    pub iteration: u32,
    pub iterations: Vec<HistoryIteration>,
    pub laps: Vec<HistoryLap>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryIteration {
    pub iteration: u32,
    pub profile_csv: String,
    pub learned_from: Option<LapSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryLap {
    pub lap_id: String,
    pub iteration: u32,
    pub rates: InterventionRates,
    pub log: String,
}

fn err(code: ErrorCode, text: impl Into<String>) -> Vec<ServerMsg> {
    vec![ServerMsg::error(code, text)]
}

fn ack(msg: &ClientMsg) -> ServerMsg {
    ServerMsg::Ack { of: msg.kind().to_string() }
}

impl Session {
    pub fn new(id: impl Into<String>, params: ExperimentParams) -> Self {
        Self { id: id.into(), params, route: None, learning: None, lap: None, laps: Vec::new(), learnable: None }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn route(&self) -> Option<&RouteMap> {
        self.route.as_deref()
    }

    pub fn learning(&self) -> Option<&IterationState> {
        self.learning.as_ref()
    }

    pub fn iteration(&self) -> u32 {
        self.learning.as_ref().map_or(0, |s| s.iteration)
    }

    pub fn lap_running(&self) -> bool {
        self.lap.is_some()
    }

    /// Simulated time of the lap in progress.
    pub fn lap_time(&self) -> Option<f64> {
        self.lap.as_ref().map(|l| l.sim.state().t)
    }

    pub fn laps(&self) -> &[CompletedLap] {
        &self.laps
    }

    pub fn lap(&self, id: &str) -> Option<&CompletedLap> {
        self.laps.iter().find(|l| l.id == id)
    }

    pub fn welcome(&self, resumed: bool) -> ServerMsg {
        ServerMsg::Welcome {
            session_id: self.id.clone(),
            resumed,
            route: self.route.as_ref().map(|r| r.name().to_string()),
            iteration: self.iteration(),
        }
    }

    /// The current profile, if a route is loaded.
    pub fn profile_msg(&self) -> Option<ServerMsg> {
        self.learning.as_ref().map(|s| ServerMsg::profile(s.iteration, &s.baseline))
    }

    /// Drops a lap in progress, as when the client disconnects.
    pub fn abort_lap(&mut self) -> bool {
        self.lap.take().is_some()
    }

    /// Answers one client message.
    pub fn handle(&mut self, msg: ClientMsg, routes: &RouteRegistry) -> Vec<ServerMsg> {
        match &msg {
            ClientMsg::Input { gas, brake } => {
                let Some(lap) = self.lap.as_mut() else {
                    return err(ErrorCode::NoLap, "no lap is running");
                };
                if !(gas.is_finite() && brake.is_finite()) {
                    return err(ErrorCode::BadMsg, "pedal positions must be finite");
                }
                lap.pending.pedals = Pedals { gas: gas.clamp(0.0, 1.0), brake: brake.clamp(0.0, 1.0) };
                vec![ack(&msg)]
            }
            ClientMsg::Lever { delta_kmh } => {
                let Some(lap) = self.lap.as_mut() else {
                    return err(ErrorCode::NoLap, "no lap is running");
                };
                let steps = kmh_to_mps(*delta_kmh) / set_speed_step();
                if !(steps.is_finite() && steps != 0.0 && (steps - steps.round()).abs() < 1e-9) {
                    return err(ErrorCode::BadMsg, "lever moves in nonzero multiples of 5 km/h");
                }
                if !lap.sim.state().pldf_active && !lap.pending.reactivate {
                    return err(ErrorCode::PldfInactive, "the driving function is off; reactivate first");
                }
                lap.pending.lever_steps += steps.round() as i32;
                vec![ack(&msg)]
            }
            ClientMsg::Reactivate => {
                let Some(lap) = self.lap.as_mut() else {
                    return err(ErrorCode::NoLap, "no lap is running");
                };
                if lap.pending.pedals.brake > 0.0 {
                    return err(ErrorCode::Braking, "release the brake before reactivating");
                }
                lap.pending.reactivate = true;
                vec![ack(&msg)]
            }
            ClientMsg::StartLap => {
                if self.lap.is_some() {
                    return err(ErrorCode::LapRunning, "a lap is already running");
                }
                let (Some(route), Some(learning)) = (&self.route, &self.learning) else {
                    return err(ErrorCode::NoRoute, "load a route first");
                };
                let id = format!("lap{}", self.laps.len() + 1);
                let sim = Simulator::new(
                    route.clone(),
                    learning.baseline.clone(),
                    learning.profile_id(),
                    self.params.planner,
                    self.params.sim,
                );
                match sim {
                    Ok(sim) => {
                        let first = ServerMsg::tick(sim.state());
                        self.lap = Some(LiveLap { id, sim, pending: DriverInputs::default(), next_emit: 1.0 / TICK_HZ });
                        vec![ack(&msg), first]
                    }
                    Err(e) => err(ErrorCode::Internal, e.to_string()),
                }
            }
            ClientMsg::AbortLap => {
                if self.abort_lap() {
                    vec![ack(&msg)]
                } else {
                    err(ErrorCode::NoLap, "no lap is running")
                }
            }
            ClientMsg::ApplySpaa => {
                if self.lap.is_some() {
                    return err(ErrorCode::LapRunning, "learning waits until the lap is over");
                }
                let (Some(route), Some(learning), Some(k)) = (&self.route, &self.learning, self.learnable) else {
                    return err(ErrorCode::NothingToLearn, "no completed lap on the current profile");
                };
                let p = &self.params;
                match apply_iteration(learning, &self.laps[k].log, route, &p.planner, &p.spaa) {
                    Ok(next) => {
                        self.learning = Some(next);
                        self.learnable = None;
                        vec![ack(&msg), self.profile_msg().expect("route loaded")]
                    }
                    Err(e) => err(ErrorCode::Internal, e.to_string()),
                }
            }
            ClientMsg::ResetLearning => {
                if self.lap.is_some() {
                    return err(ErrorCode::LapRunning, "cannot reset during a lap");
                }
                let Some(route) = self.route.clone() else {
                    return err(ErrorCode::NoRoute, "load a route first");
                };
                match self.start_learning(route) {
                    Ok(()) => vec![ack(&msg), self.profile_msg().expect("route loaded")],
                    Err(e) => e,
                }
            }
            ClientMsg::LoadRoute { name } => {
                if self.lap.is_some() {
                    return err(ErrorCode::LapRunning, "cannot change route during a lap");
                }
                let Some(route) = routes.get(name) else {
                    return err(ErrorCode::UnknownRoute, format!("no route named {name:?}"));
                };
                match self.start_learning(route) {
                    Ok(()) => vec![ack(&msg), self.profile_msg().expect("route loaded")],
                    Err(e) => e,
                }
            }
        }
    }

    fn start_learning(&mut self, route: Arc<RouteMap>) -> Result<(), Vec<ServerMsg>> {
        let base = plan_base_profile(&route, &self.params.planner).map_err(|e| err(ErrorCode::Internal, e.to_string()))?;
        self.learning = Some(IterationState::new(base));
        self.route = Some(route);
        self.learnable = None;
        Ok(())
    }

    /// Advances the lap until simulated time reaches `until` (or the lap
    /// ends), at most `max_ticks` ticks. Emits a tick message on every
    /// 1/20 s boundary of simulated time and `lap_done` at the end.
    pub fn advance(&mut self, until: f64, max_ticks: usize) -> Vec<ServerMsg> {
        let mut out = Vec::new();
        let Some(lap) = self.lap.as_mut() else {
            return out;
        };
        let dt = lap.sim.params().dt;
        for _ in 0..max_ticks {
            if lap.sim.is_done() || lap.sim.state().t + 0.5 * dt > until {
                break;
            }
            let held = DriverInputs { pedals: lap.pending.pedals, ..DriverInputs::default() };
            let inputs = std::mem::replace(&mut lap.pending, held);
            match lap.sim.apply(inputs) {
                Ok(state) => {
                    if state.t + 1e-9 >= lap.next_emit || lap.sim.is_done() {
                        out.push(ServerMsg::tick(lap.sim.state()));
                        while lap.next_emit <= lap.sim.state().t + 1e-9 {
                            lap.next_emit += 1.0 / TICK_HZ;
                        }
                    }
                }
                Err(e) => {
                    out.push(ServerMsg::error(ErrorCode::Internal, e.to_string()));
                    self.lap = None;
                    return out;
                }
            }
        }
        if lap.sim.is_done() {
            let lap = self.lap.take().expect("lap present");
            let log = lap.sim.finish();
            match intervention_rates(&log) {
                Ok(rates) => {
                    let iteration = self.iteration();
                    out.push(ServerMsg::LapDone { lap_id: lap.id.clone(), rates });
                    self.learnable = log.complete.then_some(self.laps.len());
                    self.laps.push(CompletedLap { id: lap.id, iteration, rates, log });
                }
                Err(e) => out.push(ServerMsg::error(ErrorCode::Internal, e.to_string())),
            }
        }
        out
    }

    pub fn history(&self) -> HistoryManifest {
        let iterations = self
            .learning
            .iter()
            .flat_map(|s| &s.history)
            .map(|h| HistoryIteration {
                iteration: h.iteration,
                profile_csv: format!("/profile/{}?session={}", h.iteration, self.id),
                learned_from: h.lap.clone(),
            })
            .collect();
        let laps = self
            .laps
            .iter()
            .map(|l| HistoryLap {
                lap_id: l.id.clone(),
                iteration: l.iteration,
                rates: l.rates,
                log: format!("/log/{}?session={}", l.id, self.id),
            })
            .collect();
        HistoryManifest {
            session_id: self.id.clone(),
            route: self.route.as_ref().map(|r| r.name().to_string()),
            iteration: self.iteration(),
            iterations,
            laps,
        }
    }

    /// CSV of the profile learned at `iteration`.
    pub fn profile_csv(&self, iteration: u32) -> Option<String> {
        let learning = self.learning.as_ref()?;
        learning.history.iter().find(|h| h.iteration == iteration).map(|h| h.profile.to_csv_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use adaptive_pldf::sim::{run_lap, ScriptedInputs};

    fn loaded() -> (Session, RouteRegistry) {
        let routes = RouteRegistry::builtin();
        let mut s = Session::new("s1", ExperimentParams::default());
        let out = s.handle(ClientMsg::LoadRoute { name: "two-drop".into() }, &routes);
        assert!(matches!(out[1], ServerMsg::Profile { iteration: 0, .. }));
        (s, routes)
    }

    fn code(out: &[ServerMsg]) -> Option<ErrorCode> {
        out.iter().find_map(|m| if let ServerMsg::Error { code, .. } = m { Some(*code) } else { None })
    }

    #[test]
    fn needs_route_and_lap() {
        let routes = RouteRegistry::builtin();
        let mut s = Session::new("s1", ExperimentParams::default());
        assert_eq!(code(&s.handle(ClientMsg::StartLap, &routes)), Some(ErrorCode::NoRoute));
        assert_eq!(code(&s.handle(ClientMsg::Input { gas: 1.0, brake: 0.0 }, &routes)), Some(ErrorCode::NoLap));
        assert_eq!(
            code(&s.handle(ClientMsg::LoadRoute { name: "nowhere".into() }, &routes)),
            Some(ErrorCode::UnknownRoute)
        );
        assert_eq!(code(&s.handle(ClientMsg::ApplySpaa, &routes)), Some(ErrorCode::NothingToLearn));
    }

    #[test]
    fn quiet_lap_streams_ticks_at_twenty_hertz() {
        let (mut s, routes) = loaded();
        s.handle(ClientMsg::StartLap, &routes);
        assert_eq!(code(&s.handle(ClientMsg::StartLap, &routes)), Some(ErrorCode::LapRunning));
        assert_eq!(code(&s.handle(ClientMsg::ApplySpaa, &routes)), Some(ErrorCode::LapRunning));
        let out = s.advance(f64::INFINITY, usize::MAX);
        let times: Vec<f64> = out.iter().filter_map(|m| if let ServerMsg::Tick { t, .. } = m { Some(*t) } else { None }).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        // 50 Hz physics decimated to 20 Hz: gaps of two or three physics ticks
        assert!(times.windows(2).all(|w| w[1] - w[0] <= 0.06 + 1e-9));
        let lap_time = *times.last().unwrap();
        assert!((times.len() as f64 - lap_time * TICK_HZ).abs() <= 2.0);
        match out.last() {
            Some(ServerMsg::LapDone { lap_id, rates }) => {
                assert_eq!(lap_id, "lap1");
                assert_eq!(rates.combined_ir, 0.0);
            }
            other => panic!("expected lap_done, got {other:?}"),
        }
        assert!(!s.lap_running());
    }

    #[test]
    fn lever_and_reactivation_rules() {
        let (mut s, routes) = loaded();
        s.handle(ClientMsg::StartLap, &routes);
        assert_eq!(code(&s.handle(ClientMsg::Lever { delta_kmh: 7.0 }, &routes)), Some(ErrorCode::BadMsg));
        assert_eq!(code(&s.handle(ClientMsg::Lever { delta_kmh: 0.0 }, &routes)), Some(ErrorCode::BadMsg));
        assert_eq!(code(&s.handle(ClientMsg::Lever { delta_kmh: -5.0 }, &routes)), None);
        s.handle(ClientMsg::Input { gas: 0.0, brake: 0.5 }, &routes);
        s.advance(1.0, usize::MAX);
        assert_eq!(code(&s.handle(ClientMsg::Lever { delta_kmh: 5.0 }, &routes)), Some(ErrorCode::PldfInactive));
        assert_eq!(code(&s.handle(ClientMsg::Reactivate, &routes)), Some(ErrorCode::Braking));
        s.handle(ClientMsg::Input { gas: 0.0, brake: 0.0 }, &routes);
        assert_eq!(code(&s.handle(ClientMsg::Reactivate, &routes)), None);
        assert_eq!(code(&s.handle(ClientMsg::Lever { delta_kmh: 5.0 }, &routes)), None);
    }

    #[test]
    fn recorded_inputs_replay_the_lap() {
        let (mut s, routes) = loaded();
        s.handle(ClientMsg::StartLap, &routes);
        let script: [(f64, ClientMsg); 6] = [
            (5.0, ClientMsg::Input { gas: 0.4, brake: 0.0 }),
            (9.0, ClientMsg::Input { gas: 0.0, brake: 0.0 }),
            (15.0, ClientMsg::Lever { delta_kmh: -10.0 }),
            (30.0, ClientMsg::Input { gas: 0.0, brake: 0.3 }),
            (32.0, ClientMsg::Input { gas: 0.0, brake: 0.0 }),
            (33.0, ClientMsg::Reactivate),
        ];
        for (t, msg) in script {
            s.advance(t, usize::MAX);
            assert_eq!(code(&s.handle(msg, &routes)), None);
        }
        s.advance(f64::INFINITY, usize::MAX);
        let lap = &s.laps()[0];
        assert!(lap.log.complete);
        // gas, set-speed (closed by the zone boundary), brake
        assert_eq!(lap.log.interventions.len(), 3);

        let learning = s.learning().unwrap();
        let p = ExperimentParams::default();
        let replayed = run_lap(
            Arc::new(s.route().unwrap().clone()),
            learning.baseline.clone(),
            &learning.profile_id(),
            &mut ScriptedInputs::new(lap.log.inputs.clone()),
            p.planner,
            p.sim,
        )
        .unwrap();
        assert_eq!(replayed, lap.log);
    }

    #[test]
    fn learning_and_reset() {
        let (mut s, routes) = loaded();
        s.handle(ClientMsg::StartLap, &routes);
        s.advance(20.0, usize::MAX);
        s.handle(ClientMsg::Input { gas: 0.5, brake: 0.0 }, &routes);
        s.advance(24.0, usize::MAX);
        s.handle(ClientMsg::Input { gas: 0.0, brake: 0.0 }, &routes);
        s.advance(f64::INFINITY, usize::MAX);
        let out = s.handle(ClientMsg::ApplySpaa, &routes);
        assert!(matches!(out[1], ServerMsg::Profile { iteration: 1, .. }));
        assert_eq!(code(&s.handle(ClientMsg::ApplySpaa, &routes)), Some(ErrorCode::NothingToLearn));
        assert_ne!(s.profile_csv(1), s.profile_csv(0));
        let out = s.handle(ClientMsg::ResetLearning, &routes);
        assert!(matches!(out[1], ServerMsg::Profile { iteration: 0, .. }));
        assert_eq!(s.iteration(), 0);
        assert_eq!(s.history().laps.len(), 1);
    }
}
