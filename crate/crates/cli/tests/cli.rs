use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use adaptive_pldf::experiment::{two_drop_scenario, ExperimentParams};
use adaptive_pldf::planner::{plan_base_profile, PlannerParams};
use adaptive_pldf::profile::SpeedProfile;
use adaptive_pldf::route::demo_route;
use adaptive_pldf::sim::{run_lap, NullInputs, SimParams};
use adaptive_pldf::units::kmh_to_mps;

fn pldf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pldf")).args(args).env_remove("ADAPTIVE_PLDF_SEED").output().unwrap()
}

fn core_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core").join(rel)
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn profile(csv: &str) -> SpeedProfile {
    SpeedProfile::read_csv(csv.as_bytes()).unwrap()
}

#[test]
fn plan_demo_route() {
    let csv = stdout(&pldf(&["plan"]));
    assert_eq!(csv.lines().count(), 1 + 4501);
    let base = plan_base_profile(&demo_route(), &PlannerParams::default()).unwrap();
    assert_eq!(csv, base.to_csv_string());
    let route = core_file("data/demo_route.json");
    assert_eq!(stdout(&pldf(&["plan", "--route", route.to_str().unwrap()])), csv);
}

#[test]
fn plan_offset_shifts_the_zone_straight() {
    let plain = profile(&stdout(&pldf(&["plan"])));
    let shifted = profile(&stdout(&pldf(&["plan", "--offset", "0=10"])));
    // a point on the straight part of zone 0
    let i = 100;
    assert!((shifted.values()[i] - plain.values()[i] - kmh_to_mps(10.0)).abs() < 1e-9);
    let lowered = profile(&stdout(&pldf(&["plan", "--offset", "0=-10"])));
    assert!((plain.values()[i] - lowered.values()[i] - kmh_to_mps(10.0)).abs() < 1e-9);
    // outside zone 0 and its ramps nothing moves
    assert_eq!(shifted.values()[4000], plain.values()[4000]);
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name":"x","length_m":100,"limit_zones":[{"start_m":10,"limit_kmh":50}],"curvature":[{"d_m":0,"kappa_inv_m":0}]}"#).unwrap();
    let params = dir.path().join("p.toml");
    std::fs::write(&params, "[spaa]\nalpha = 3.0\n").unwrap();
    for args in [
        vec!["plan", "--route", bad.to_str().unwrap()],
        vec!["plan", "--route", "/nonexistent/route.json"],
        vec!["plan", "--offset", "99=5"],
        vec!["plan", "--params", params.to_str().unwrap()],
        vec!["plan", "--tick-hz", "0"],
        vec!["study", "--out", dir.path().to_str().unwrap(), "--laps", "0"],
        vec!["serve", "--pace", "-1"],
        vec!["serve", "--route-dir", "/nonexistent"],
    ] {
        let out = pldf(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn replay_of_a_quiet_lap_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let map = demo_route();
    let base = plan_base_profile(&map, &PlannerParams::default()).unwrap();
    let log = run_lap(Arc::new(map), base, "base", &mut NullInputs, PlannerParams::default(), SimParams::default()).unwrap();
    let log_path = dir.path().join("lap.json");
    std::fs::write(&log_path, log.to_json(false)).unwrap();
    let replayed = stdout(&pldf(&["replay", "--log", log_path.to_str().unwrap()]));
    assert_eq!(replayed, stdout(&pldf(&["plan"])));

    let mut truncated = log.clone();
    truncated.states.truncate(truncated.states.len() / 2);
    truncated.complete = false;
    std::fs::write(&log_path, truncated.to_json(false)).unwrap();
    assert_eq!(pldf(&["replay", "--log", log_path.to_str().unwrap()]).status.code(), Some(2));

    std::fs::write(&log_path, log.to_json(false)).unwrap();
    let other = core_file("data/two_drop_route.json");
    let out = pldf(&["replay", "--log", log_path.to_str().unwrap(), "--route", other.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_of_the_two_drop_log_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = two_drop_scenario(&ExperimentParams::default()).unwrap();
    let log_path = dir.path().join("two_drop.json");
    std::fs::write(&log_path, scenario.log.to_json(false)).unwrap();
    let route = core_file("data/two_drop_route.json");
    let csv = stdout(&pldf(&["replay", "--log", log_path.to_str().unwrap(), "--route", route.to_str().unwrap()]));
    let golden = std::fs::read_to_string(core_file("tests/golden/two_drop_adjusted.csv")).unwrap();
    let (got, want) = (profile(&csv), profile(&golden));
    assert_eq!(got.len(), want.len());
    let worst = got.values().iter().zip(want.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-9, "deviates from golden by {worst}");
}

#[test]
fn study_writes_bundle_and_honours_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort.json");
    std::fs::write(&cohort, r#"[{"id":"x1","seed":1,"straights":{"count":1,"offsets_kmh":[10]}},{"id":"x2","seed":2}]"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_pldf"))
        .args(["study", "--cohort", cohort.to_str().unwrap(), "--seed", "3", "--out", out_dir.to_str().unwrap()])
        .env("ADAPTIVE_PLDF_SEED", "99")
        .output()
        .unwrap();
    stdout(&out);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["master_seed"], 99);
    assert_eq!(summary["cohort"]["drivers"], 2);
    for rel in ["ir_evolution.csv", "x1/lap1.json", "x1/profiles/iter0.csv", "x2/history.json"] {
        assert!(out_dir.join(rel).exists(), "missing {rel}");
    }
}

#[test]
fn serve_answers_http() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pldf"))
        .args(["serve", "--port", "0", "--pace", "0"])
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server printed its address").unwrap();
        if let Some(addr) = line.strip_prefix("listening on ") {
            break addr.trim().replace("0.0.0.0", "127.0.0.1");
        }
    };
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /routes HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    let _ = child.wait();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("two-drop"));
}
