//! Live walkthrough over WebSocket. The network loop and the simulation run
//! on separate threads and talk only through two channels: inputs flow to
//! the simulation, which drains them at tick boundaries, and finished
//! messages flow back out.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Result};
use pcgmeta_core::camera::CameraConfig;
use pcgmeta_core::npc::AgentKind;
use pcgmeta_core::pvs::ChainRecord;
use pcgmeta_core::sim::{Input, Npc, Overlays, Scenario, Sim, TickEvents, TickState, Violations};
use pcgmeta_core::voxel::LayeredGrid;
use pcgmeta_core::{DungeonId, ElementId, EntityId, Vec3, World};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

use crate::io::{to_canonical_value, GridRecord};

/// Envelope for every message in either direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    pub payload: Value,
}

#[derive(Clone, Debug)]
pub struct ServeOptions {
    /// Camera, agents and parameters for the session; timeline and duration
    /// are ignored.
    pub scenario: Scenario,
    /// Throttle ticks to the tick rate.
    pub realtime: bool,
    /// End the session after this many ticks.
    pub max_ticks: Option<u64>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions { scenario: Scenario::default(), realtime: true, max_ticks: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Snapshot<'a> {
    pub seed: u64,
    pub tick_rate: f64,
    pub player_height: f64,
    pub dungeons: &'a [pcgmeta_core::Dungeon],
    pub connectors: &'a [pcgmeta_core::Connector],
    pub elements: &'a [pcgmeta_core::Element],
    pub lights: &'a [pcgmeta_core::PointLight],
    pub grids: Vec<GridRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub id: EntityId,
    pub kind: AgentKind,
    pub position: Vec3,
    pub heading: Vec3,
    pub mode: String,
    pub dungeon: DungeonId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<Vec3>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub position: Vec3,
    pub target: Vec3,
    pub phase: pcgmeta_core::camera::CameraPhase,
    pub path: Vec<Vec3>,
    pub dungeon: DungeonId,
    pub altitude: f64,
    pub distance: f64,
    pub down_angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub tick: u64,
    pub player: AgentView,
    pub camera: CameraView,
    pub agents: Vec<AgentView>,
    pub visible_count: usize,
    pub visible_dynamic_count: usize,
    pub visible_statics: Vec<ElementId>,
    pub visible_dynamics: Vec<EntityId>,
    pub portal_chain: Vec<ChainRecord>,
    pub events: TickEvents,
    pub violations: Violations,
    pub overlays: Overlays,
}

fn agent_view(a: &pcgmeta_core::npc::AgentState, segments: Vec<Vec3>) -> AgentView {
    AgentView {
        id: a.id,
        kind: a.kind,
        position: a.position,
        heading: a.heading,
        mode: a.mode.name().into(),
        dungeon: a.dungeon,
        segments,
    }
}

impl Frame {
    pub fn of(s: &TickState, cam: &CameraConfig) -> Self {
        Frame {
            tick: s.tick,
            player: agent_view(&s.player, Vec::new()),
            camera: CameraView {
                position: s.rig.position,
                target: s.rig.target,
                phase: s.rig.phase,
                path: s.rig.path.clone(),
                dungeon: s.rig.dungeon,
                altitude: cam.altitude,
                distance: cam.desired_distance,
                down_angle: cam.down_angle,
            },
            agents: s
                .npcs
                .iter()
                .map(|n| match n {
                    Npc::Agent(a) => agent_view(a, Vec::new()),
                    Npc::Serpent(sp) => agent_view(&sp.head, sp.segments.iter().map(|q| q.position).collect()),
                })
                .collect(),
            visible_count: s.visible.statics.len(),
            visible_dynamic_count: s.visible.dynamics.len(),
            visible_statics: s.visible.statics.clone(),
            visible_dynamics: s.visible.dynamics.clone(),
            portal_chain: s.visible.chain.clone(),
            events: s.events,
            violations: s.violations,
            overlays: s.held.overlays.unwrap_or_default(),
        }
    }
}

/// Decodes a client message into an input, or explains why it was refused.
pub fn parse_client_message(text: &str) -> Result<Input, String> {
    let m: WireMessage = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
    if m.kind != "input" {
        return Err(format!("unsupported message type `{}`", m.kind));
    }
    let i: Input = serde_json::from_value(m.payload).map_err(|e| format!("malformed input payload: {e}"))?;
    if let Some(v) = i.move_xz {
        if !v.iter().all(|x| x.is_finite()) {
            return Err("move must be finite".into());
        }
    }
    Ok(i)
}

enum Inbound {
    Input(Input),
    Closed,
}

type Outbound = (&'static str, Value);

fn run_simulation(
    world: &World,
    grids: &[LayeredGrid],
    opts: &ServeOptions,
    inbox: Receiver<Inbound>,
    outbox: Sender<Outbound>,
) -> Result<u64> {
    let sc = &opts.scenario;
    let mut sim = Sim::new(world, grids, sc, false).map_err(|e| anyhow!("session setup failed: {e}"))?;
    let snap = Snapshot {
        seed: world.seed,
        tick_rate: sc.tick_rate,
        player_height: world.config.style.player_height,
        dungeons: &world.dungeons,
        connectors: &world.connectors,
        elements: &world.elements,
        lights: &world.lights,
        grids: grids.iter().map(GridRecord::encode).collect(),
    };
    if outbox.send(("snapshot", to_canonical_value(&snap)?)).is_err() {
        return Ok(0);
    }
    let period = Duration::from_secs_f64(1.0 / sc.tick_rate);
    let start = Instant::now();
    loop {
        if opts.max_ticks.is_some_and(|m| sim.state.tick >= m) {
            return Ok(sim.state.tick);
        }
        if opts.realtime {
            let due = start + period * (sim.state.tick as u32);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        let mut input = Input::default();
        loop {
            match inbox.try_recv() {
                Ok(Inbound::Input(i)) => input.merge(&i),
                Ok(Inbound::Closed) | Err(TryRecvError::Disconnected) => return Ok(sim.state.tick),
                Err(TryRecvError::Empty) => break,
            }
        }
        let before = sim.state.violations.subsystem_errors;
        sim.step(&input);
        let frame = Frame::of(&sim.state, &sim.scenario.camera);
        if input.camera.is_some() && frame.violations.subsystem_errors > before {
            let _ = outbox.send(("error", json!({ "message": "camera change rejected", "tick": frame.tick })));
        }
        if outbox.send(("frame", to_canonical_value(&frame)?)).is_err() {
            return Ok(sim.state.tick);
        }
    }
}

fn send(ws: &mut WebSocket<TcpStream>, seq: &mut u64, kind: &str, payload: Value) -> Result<()> {
    *seq += 1;
    let msg = WireMessage { kind: kind.into(), seq: *seq, payload };
    match ws.send(Message::text(serde_json::to_string(&msg)?)) {
        Ok(()) => Ok(()),
        Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => Ok(()),
        Err(e) => Err(e.into()),
    }
}

/// Serves one session on an accepted connection. Returns the number of
/// ticks simulated.
pub fn serve_session(stream: TcpStream, world: &World, grids: &[LayeredGrid], opts: &ServeOptions) -> Result<u64> {
    stream.set_nodelay(true).ok();
    let mut ws = tungstenite::accept(stream).map_err(|e| anyhow!("handshake failed: {e}"))?;
    ws.get_mut().set_nonblocking(true)?;
    let (in_tx, in_rx) = mpsc::channel();
    let (out_tx, out_rx) = mpsc::channel::<Outbound>();
    thread::scope(|scope| {
        let sim = scope.spawn(move || run_simulation(world, grids, opts, in_rx, out_tx));
        let mut seq = 0u64;
        let net: Result<()> = (|| loop {
            let mut idle = true;
            loop {
                match ws.read() {
                    Ok(Message::Text(t)) => {
                        idle = false;
                        match parse_client_message(t.as_str()) {
                            Ok(i) => {
                                let _ = in_tx.send(Inbound::Input(i));
                            }
                            Err(m) => send(&mut ws, &mut seq, "error", json!({ "message": m }))?,
                        }
                    }
                    Ok(Message::Binary(_)) => send(&mut ws, &mut seq, "error", json!({ "message": "binary frames are not supported" }))?,
                    Ok(Message::Close(_)) => {
                        let _ = in_tx.send(Inbound::Closed);
                    }
                    Ok(_) => idle = false,
                    Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => break,
                    Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                        let _ = in_tx.send(Inbound::Closed);
                        return Ok(());
                    }
                    Err(e) => {
                        let _ = in_tx.send(Inbound::Closed);
                        return Err(e.into());
                    }
                }
            }
            loop {
                match out_rx.try_recv() {
                    Ok((kind, payload)) => {
                        idle = false;
                        send(&mut ws, &mut seq, kind, payload)?;
                    }
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => {
                        let _ = ws.close(None);
                        for _ in 0..200 {
                            match ws.flush() {
                                Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => {
                                    thread::sleep(Duration::from_millis(1))
                                }
                                _ => break,
                            }
                        }
                        return Ok(());
                    }
                }
            }
            match ws.flush() {
                Ok(()) => {}
                Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => {}
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                    let _ = in_tx.send(Inbound::Closed);
                    return Ok(());
                }
                Err(e) => return Err(e.into()),
            }
            if idle {
                thread::sleep(Duration::from_millis(1));
            }
        })();
        let _ = in_tx.send(Inbound::Closed);
        let ticks = sim.join().map_err(|_| anyhow!("simulation thread panicked"))??;
        net.map(|_| ticks)
    })
}

/// Accepts sessions one at a time, forever.
pub fn serve(listener: TcpListener, world: &World, grids: &[LayeredGrid], opts: &ServeOptions) -> Result<()> {
    for stream in listener.incoming() {
        match stream {
            Ok(s) => {
                if let Err(e) = serve_session(s, world, grids, opts) {
                    eprintln!("session ended: {e:#}");
                }
            }
            Err(e) => eprintln!("accept failed: {e}"),
        }
    }
    Ok(())
}
