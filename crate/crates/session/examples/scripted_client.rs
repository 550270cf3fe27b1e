//! Starts the session service in-process, drives one lap of the two-drop
//! route with a short gas press, asks for a learning step and prints the
//! message flow.
//!
//! cargo run -p adaptive-pldf-session --example scripted_client

use futures::{SinkExt, StreamExt};
use pldf_session::{AppState, RouteRegistry, ServerMsg, ServiceConfig};
use serde_json::json;
use tokio_tungstenite::tungstenite::Message;

#[tokio::main]
async fn main() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind");
    let addr = listener.local_addr().expect("bound");
    let config = ServiceConfig { pace: Some(20.0), ..ServiceConfig::default() };
    let app = AppState::new(RouteRegistry::builtin(), config).expect("valid config");
    tokio::spawn(pldf_session::serve(listener, app));

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/session")).await.expect("connect");
    let send = |v: serde_json::Value| Message::text(v.to_string());
    ws.send(send(json!({"type": "load_route", "name": "two-drop"}))).await.expect("send");
    ws.send(send(json!({"type": "start_lap"}))).await.expect("send");

    let mut pressed = false;
    let mut released = false;
    let mut ticks = 0;
    while let Some(Ok(frame)) = ws.next().await {
        let Message::Text(text) = frame else { continue };
        let msg: ServerMsg = serde_json::from_str(&text).expect("server speaks the protocol");
        match &msg {
            ServerMsg::Tick { t, d_m, v_kmh, target_kmh, .. } => {
                ticks += 1;
                if ticks % 100 == 0 {
                    println!("t {t:6.2} s  d {d_m:7.1} m  v {v_kmh:5.1} km/h  target {target_kmh:5.1} km/h");
                }
                if !pressed && *d_m > 560.0 {
                    ws.send(send(json!({"type": "input", "gas": 0.3, "brake": 0.0}))).await.expect("send");
                    pressed = true;
                } else if pressed && !released && *d_m > 640.0 {
                    ws.send(send(json!({"type": "input", "gas": 0.0, "brake": 0.0}))).await.expect("send");
                    released = true;
                }
            }
            ServerMsg::LapDone { lap_id, rates } => {
                println!("{lap_id} done after {ticks} ticks: pedal IR {:.3}", rates.pedal_ir);
                ws.send(send(json!({"type": "apply_spaa"}))).await.expect("send");
            }
            ServerMsg::Profile { iteration, points } if *iteration > 0 => {
                let at = |d: f64| points.iter().find(|p| p.d_m >= d).map_or(f64::NAN, |p| p.v_kmh);
                println!("profile {iteration}: {:.1} km/h at 650 m, {:.1} km/h at 700 m", at(650.0), at(700.0));
                break;
            }
            other => println!("{}", serde_json::to_string(other).expect("serializes")),
        }
    }
}
