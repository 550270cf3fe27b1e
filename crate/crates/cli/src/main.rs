//! `pldf`: plan baselines, run synthetic studies, replay logs and serve live sessions.
//!
//! Exit codes: 0 on success, 2 on invalid input, 1 on any other failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use adaptive_pldf::driver::{PerturbationSpec, DEFAULT_COHORT_JSON};
use adaptive_pldf::experiment::{
    effective_seed, load_cohort, plan, read_file, replay, run_study, write_study, ExperimentError, ExperimentParams,
    StudyConfig, ZoneOffset,
};
use adaptive_pldf::profile::SpeedProfile;
use adaptive_pldf::route::{demo_route, load_route, RouteMap};
use adaptive_pldf::sim::DriveLog;
use adaptive_pldf::units::kmh_to_mps;
use clap::{Args, Parser, Subcommand};
use pldf_session::{AppState, RouteRegistry, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "pldf", version, about = "Adaptive predictive longitudinal driving function testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plan the baseline profile of a route and write it as CSV.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Whole-zone set-speed offset, `ZONE=KMH` (zone index from 0). Repeatable.
        #[arg(long = "offset", value_name = "ZONE=KMH")]
        offsets: Vec<ZoneOffset>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the two-system study over a driver cohort and write the report bundle.
    Study {
        #[command(flatten)]
        common: Common,
        /// Cohort JSON; the bundled 20-driver cohort when omitted.
        #[arg(long)]
        cohort: Option<PathBuf>,
        /// Laps with interventions per system.
        #[arg(long, default_value_t = 2)]
        laps: usize,
        /// Master seed. ADAPTIVE_PLDF_SEED overrides it.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one learning step to a stored drive log and write the adjusted profile.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Drive log JSON.
        #[arg(long)]
        log: PathBuf,
        /// Profile CSV the log was driven on; the planner baseline when omitted.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve live driving sessions over HTTP and a websocket.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory of route JSON files; the bundled routes when omitted.
        #[arg(long)]
        route_dir: Option<PathBuf>,
        /// Simulated seconds per wall-clock second; 0 runs unpaced.
        #[arg(long, default_value_t = 1.0)]
        pace: f64,
        /// Planner, simulator and learning parameters (TOML or JSON).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Simulator tick rate, Hz.
        #[arg(long)]
        tick_hz: Option<f64>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Route JSON; the bundled demo route when omitted.
    #[arg(long)]
    route: Option<PathBuf>,
    /// Planner, simulator and learning parameters (TOML or JSON).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Cap learned speeds at this many km/h above the legal limit.
    #[arg(long, value_name = "KMH")]
    max_over_limit: Option<f64>,
    /// Simulator tick rate, Hz.
    #[arg(long)]
    tick_hz: Option<f64>,
}

enum Failure {
    Input(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

/// Reads an input file; a missing or unreadable input is an input error.
fn read_input(path: &Path) -> Result<String, Failure> {
    read_file(path).map_err(input)
}

fn load_params(path: Option<&Path>, max_over_limit: Option<f64>, tick_hz: Option<f64>) -> Result<ExperimentParams, Failure> {
    let mut params = match path {
        Some(p) => ExperimentParams::parse(&read_input(p)?)?,
        None => ExperimentParams::default(),
    };
    if let Some(kmh) = max_over_limit {
        if !(kmh >= 0.0 && kmh.is_finite()) {
            return Err(input(format!("--max-over-limit must be a non-negative number of km/h, got {kmh}")));
        }
        params.spaa.max_over_limit = Some(kmh_to_mps(kmh));
    }
    if let Some(hz) = tick_hz {
        params.sim = params.sim.with_tick_hz(hz).map_err(input)?;
    }
    params.validate()?;
    Ok(params)
}

impl Common {
    fn route(&self) -> Result<RouteMap, Failure> {
        match &self.route {
            Some(p) => load_route(&read_input(p)?).map_err(|e| input(format!("{}: {e}", p.display()))),
            None => Ok(demo_route()),
        }
    }

    fn params(&self) -> Result<ExperimentParams, Failure> {
        load_params(self.params.as_deref(), self.max_over_limit, self.tick_hz)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Plan { common, offsets, out } => {
            let profile = plan(&common.route()?, &common.params()?, &offsets)?;
            emit(out.as_deref(), &profile.to_csv_string())
        }
        Command::Study { common, cohort, laps, seed, out } => {
            let map = common.route()?;
            let params = common.params()?;
            let cohort: Vec<PerturbationSpec> = match &cohort {
                Some(p) => load_cohort(&read_input(p)?)?,
                None => load_cohort(DEFAULT_COHORT_JSON)?,
            };
            let config = StudyConfig { laps_per_system: laps, master_seed: effective_seed(seed), params };
            let report = run_study(&map, &cohort, &config)?;
            write_study(&report, &out)?;
            let c = &report.summary.cohort;
            println!(
                "{} drivers ({} failed), seed {}, combined IR static {:.4} adaptive {:.4}, written to {}",
                c.drivers,
                c.failed,
                config.master_seed,
                c.static_mean.map_or(f64::NAN, |r| r.combined_ir),
                c.adaptive_mean.map_or(f64::NAN, |r| r.combined_ir),
                out.display()
            );
            Ok(())
        }
        Command::Replay { common, log, baseline, out } => {
            let map = common.route()?;
            let params = common.params()?;
            let log = DriveLog::from_json(&read_input(&log)?).map_err(|e| input(format!("{}: {e}", log.display())))?;
            let baseline = match &baseline {
                Some(p) => Some(
                    SpeedProfile::read_csv(read_input(p)?.as_bytes()).map_err(|e| input(format!("{}: {e}", p.display())))?,
                ),
                None => None,
            };
            let adjusted = replay(&map, &log, baseline, &params)?;
            emit(out.as_deref(), &adjusted.to_csv_string())
        }
        Command::Serve { port, route_dir, pace, params, tick_hz } => {
            let params = load_params(params.as_deref(), None, tick_hz)?;
            let routes = match &route_dir {
                Some(dir) => RouteRegistry::from_dir(dir).map_err(input)?,
                None => RouteRegistry::builtin(),
            };
            if !(pace >= 0.0 && pace.is_finite()) {
                return Err(input(format!("--pace must be 0 or positive, got {pace}")));
            }
            let config = ServiceConfig {
                pace: (pace > 0.0).then_some(pace),
                resume_timeout: Duration::from_secs(120),
                params,
            };
            let app = AppState::new(routes, config).map_err(input)?;
            tracing_subscriber::fmt().with_target(false).init();
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
                    .await
                    .map_err(|e| Failure::Runtime(format!("port {port}: {e}")))?;
                eprintln!("listening on {}", listener.local_addr().map_err(|e| Failure::Runtime(e.to_string()))?);
                pldf_session::serve(listener, app).await.map_err(|e| Failure::Runtime(e.to_string()))
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
