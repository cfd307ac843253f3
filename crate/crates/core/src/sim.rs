//! Fixed-step scenario simulation tying player motion, NPCs, camera and
//! visibility together, with per-tick trace records and optional audits.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{spawn_camera, update_camera, CameraConfig, CameraEnv, CameraPhase, CameraRig, Subject};
use crate::geometry::{sphere_intersects_volume, Category, RayScene};
use crate::math::{self, Vec3};
use crate::metastore::MetaStore;
use crate::npc::*;
use crate::pvs::{view_basis, half_angles, visible_set_cached, DoorStates, DynamicEntity, PvsCache, PvsConfig, ViewPose, VisibleSet};
use crate::voxel::LayeredGrid;
use crate::world::{DungeonId, ElementId, EntityId, World};

pub const PLAYER_ID: EntityId = EntityId(0);
/// Largest floor rise the walking player climbs in one tick.
pub const MAX_STEP_UP: f64 = 0.5;
const AUDIT_RAYS: u32 = 64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraChange {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub altitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub down_angle: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Overlays {
    pub graph: bool,
    pub voxels: bool,
    pub portals: bool,
    pub visible: bool,
}

/// Player input. `move` is held until replaced; `fly` and `land` act once.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Input {
    #[serde(rename = "move", skip_serializing_if = "Option::is_none")]
    pub move_xz: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "core::ops::Not::not")]
    pub fly: bool,
    #[serde(skip_serializing_if = "core::ops::Not::not")]
    pub land: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraChange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlays: Option<Overlays>,
}

impl Input {
    /// Folds a later input into this one: held values and camera fields are
    /// last-writer-wins, fly toggles cancel in pairs, land requests stick.
    pub fn merge(&mut self, later: &Input) {
        if later.move_xz.is_some() {
            self.move_xz = later.move_xz;
        }
        self.fly ^= later.fly;
        self.land |= later.land;
        if let Some(c) = &later.camera {
            let mine = self.camera.get_or_insert_with(CameraChange::default);
            mine.altitude = c.altitude.or(mine.altitude);
            mine.distance = c.distance.or(mine.distance);
            mine.down_angle = c.down_angle.or(mine.down_angle);
        }
        if later.overlays.is_some() {
            self.overlays = later.overlays;
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == Input::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedInput {
    pub tick: u64,
    pub input: Input,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub dungeon: u32,
    /// Spawn offset from the dungeon center in the xz plane.
    #[serde(default)]
    pub offset: [f64; 2],
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentParams {
    pub bat: BatParams,
    pub scorpion: ScorpionParams,
    pub serpent: SerpentParams,
    pub mummy: MummyParams,
    pub player: PlayerParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub world: String,
    pub grids: String,
    pub tick_rate: f64,
    pub duration: u64,
    pub camera: CameraConfig,
    pub pvs: PvsConfig,
    pub pvs_cache: bool,
    pub aspect: f64,
    pub player: AgentSpec,
    /// Feet height above the ground while flying.
    pub fly_height: f64,
    pub agents: Vec<AgentSpec>,
    pub params: AgentParams,
    pub timeline: Vec<TimedInput>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            world: String::new(),
            grids: String::new(),
            tick_rate: 60.0,
            duration: 0,
            camera: CameraConfig::default(),
            pvs: PvsConfig::default(),
            pvs_cache: true,
            aspect: 16.0 / 9.0,
            player: AgentSpec { kind: AgentKind::Player, dungeon: 0, offset: [0.0, 0.0], yaw: 0.0 },
            fly_height: 1.5,
            agents: Vec::new(),
            params: AgentParams::default(),
            timeline: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("timeline ticks must be ascending")]
    Timeline,
    #[error("tick rate must be positive")]
    TickRate,
    #[error("invalid camera configuration")]
    Camera,
    #[error("spawn dungeon {0} does not exist")]
    NoDungeon(u32),
    #[error("no free spawn point for entity {0}")]
    Spawn(u32),
    #[error("grids do not match the world")]
    Grids,
    #[error("camera could not be placed")]
    CameraSpawn,
}

/// Append-only invariant counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    pub camera_clip: u64,
    pub npc_clip: u64,
    pub player_clip: u64,
    pub pvs_miss: u64,
    pub serpent_spacing: u64,
    pub subsystem_errors: u64,
}

impl Violations {
    pub fn total(&self) -> u64 {
        self.camera_clip + self.npc_clip + self.player_clip + self.pvs_miss + self.serpent_spacing + self.subsystem_errors
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickEvents {
    pub retrigger: bool,
    pub flip_turns: u32,
    pub gate_crossing: bool,
    pub pvs_cache_hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Npc {
    Agent(AgentState),
    Serpent(SerpentState),
}

impl Npc {
    pub fn state(&self) -> &AgentState {
        match self {
            Npc::Agent(a) => a,
            Npc::Serpent(s) => &s.head,
        }
    }

    /// Bounding sphere for visibility.
    pub fn bounds(&self, p: &AgentParams) -> (Vec3, f64) {
        match self {
            Npc::Agent(a) => (a.position, agent_radius(a.kind, p)),
            Npc::Serpent(s) => {
                let pts: Vec<Vec3> = core::iter::once(s.head.position).chain(s.segments.iter().map(|q| q.position)).collect();
                let c = pts.iter().fold(Vec3::ZERO, |acc, q| acc + *q) * (1.0 / pts.len() as f64);
                let r = pts.iter().map(|q| q.distance(c)).fold(0.0, f64::max);
                (c, r + p.serpent.radius)
            }
        }
    }
}

pub fn agent_radius(kind: AgentKind, p: &AgentParams) -> f64 {
    match kind {
        AgentKind::Bat => p.bat.radius,
        AgentKind::Scorpion => p.scorpion.radius,
        AgentKind::SerpentHead => p.serpent.radius,
        AgentKind::Mummy => p.mummy.radius,
        AgentKind::Player => p.player.radius,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickState {
    pub tick: u64,
    pub player: AgentState,
    pub npcs: Vec<Npc>,
    pub rig: CameraRig,
    pub visible: VisibleSet,
    pub events: TickEvents,
    pub violations: Violations,
    /// Input currently held.
    pub held: Input,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: EntityId,
    pub kind: AgentKind,
    pub pos: Vec3,
    pub mode: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub player: Vec3,
    pub player_mode: String,
    pub player_dungeon: DungeonId,
    pub camera: Vec3,
    pub camera_phase: CameraPhase,
    pub visible_static: usize,
    pub visible_dynamic: usize,
    pub chain: usize,
    pub agents: Vec<AgentRecord>,
    pub events: TickEvents,
    pub violations: Violations,
}

impl TraceRecord {
    pub fn of(s: &TickState) -> Self {
        TraceRecord {
            tick: s.tick,
            player: s.player.position,
            player_mode: s.player.mode.name().into(),
            player_dungeon: s.player.dungeon,
            camera: s.rig.position,
            camera_phase: s.rig.phase,
            visible_static: s.visible.statics.len(),
            visible_dynamic: s.visible.dynamics.len(),
            chain: s.visible.chain.len(),
            agents: s
                .npcs
                .iter()
                .map(|n| {
                    let a = n.state();
                    AgentRecord { id: a.id, kind: a.kind, pos: a.position, mode: a.mode.name().into() }
                })
                .collect(),
            events: s.events,
            violations: s.violations,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ticks: u64,
    pub mean_visible_static: f64,
    pub max_visible_static: usize,
    pub mean_visible_dynamic: f64,
    pub max_visible_dynamic: usize,
    pub total_static: usize,
    pub culled_fraction: f64,
    pub camera_path_length: f64,
    pub flip_turns: u64,
    pub gate_crossings: u64,
    pub retriggers: u64,
    pub pvs_cache_hits: u64,
    pub violations: Violations,
}

/// Body center of a player standing at `feet`.
pub fn body_center(feet: Vec3, height: f64) -> Vec3 {
    feet + Vec3::Y * (0.5 * height)
}

/// Player kinematics shared by the simulator and the tour builder.
pub struct PlayerMotion<'a, 'w> {
    pub nw: &'a NpcWorld<'w>,
    pub store: &'a MetaStore<'w>,
    pub params: &'a PlayerParams,
    pub height: f64,
    pub fly_height: f64,
}

impl PlayerMotion<'_, '_> {
    fn ground(&self, d: DungeonId, p: Vec3) -> Option<f64> {
        self.store.height_at(d, p.x, p.z)
    }

    fn begin_landing(&self, s: &mut AgentState) {
        if let Some(plan) = plan_landing_path(self.nw, self.store, s.position, self.height, self.params) {
            s.mode = AgentMode::Landing { waypoints: plan.waypoints, next: 1, up: plan.up };
        }
    }

    pub fn step(&self, s: &AgentState, mv: [f64; 2], fly: bool, land: bool, dt: f64) -> AgentState {
        let mut n = s.clone();
        let mut m = Vec3::new(mv[0], 0.0, mv[1]);
        if m.length() > 1.0 {
            m = m.normalize_or_zero();
        }
        if m.length() > 1e-12 {
            n.heading = m.normalize_or_zero();
        }
        match (&s.mode, fly, land) {
            (AgentMode::Flying, true, _) | (AgentMode::Flying, _, true) => self.begin_landing(&mut n),
            (AgentMode::Walking | AgentMode::Idle, true, _) => n.mode = AgentMode::Flying,
            _ => {}
        }
        let feet = n.position;
        match n.mode.clone() {
            AgentMode::Landing { waypoints, next, up } => {
                let last = *waypoints.last().unwrap_or(&feet);
                let mut budget = landing_speed(feet.y - last.y, self.params) * dt;
                let mut pos = feet;
                let mut k = next;
                while budget > 0.0 && k < waypoints.len() {
                    let seg = pos.distance(waypoints[k]);
                    if seg <= budget {
                        pos = waypoints[k];
                        budget -= seg;
                        k += 1;
                    } else {
                        pos = pos.lerp(waypoints[k], budget / seg);
                        budget = 0.0;
                    }
                }
                n.position = pos;
                n.speed = pos.distance(feet) / dt;
                if k >= waypoints.len() {
                    n.mode = AgentMode::Walking;
                    n.up = up;
                } else {
                    n.mode = AgentMode::Landing { waypoints, next: k, up };
                }
            }
            AgentMode::Flying => {
                let disp = m * (self.params.fly_speed * dt);
                let out = validate_player_motion(self.nw, self.store, feet, disp, self.height, self.params);
                let mut pos = feet + out;
                if let Some(d) = self.store.dungeon_of_point(body_center(pos, self.height)) {
                    if let Some(g) = self.ground(d, pos) {
                        let want = g + self.fly_height;
                        let dy = (want - pos.y).clamp(-self.params.fly_speed * dt, self.params.fly_speed * dt);
                        let lifted = pos + Vec3::Y * dy;
                        let c = body_center(lifted, self.height);
                        if self.store.dungeon_of_point(c).is_some() && !self.nw.inside_any_volume(c) {
                            pos = lifted;
                        }
                    }
                }
                n.speed = pos.distance(feet) / dt;
                n.position = pos;
            }
            _ => {
                n.mode = AgentMode::Walking;
                let disp = m * (self.params.walk_speed * dt);
                let out = validate_player_motion(self.nw, self.store, feet, disp, self.height, self.params);
                let mut pos = feet + out;
                let d = self.store.dungeon_of_point(body_center(pos, self.height));
                match d.and_then(|d| self.ground(d, pos)) {
                    Some(g) if g - feet.y <= MAX_STEP_UP => pos.y = g,
                    _ => pos = feet,
                }
                let c = body_center(pos, self.height);
                if self.store.dungeon_of_point(c).is_none() || self.nw.inside_any_volume(c) {
                    pos = feet;
                }
                n.speed = pos.distance(feet) / dt;
                n.position = pos;
            }
        }
        if let Some(d) = self.store.dungeon_of_point(body_center(n.position, self.height)) {
            n.dungeon = d;
        }
        n
    }
}

/// Free spawn point near the requested one, searched on rings.
fn find_spawn(nw: &NpcWorld, store: &MetaStore, d: DungeonId, want: Vec3, r: f64) -> Option<Vec3> {
    let mut cands = vec![want];
    for ring in 1..=12 {
        let rr = 0.5 * ring as f64;
        for k in 0..12 {
            cands.push(want + Vec3::from_yaw(math::PI / 6.0 * k as f64) * rr);
        }
    }
    cands.into_iter().find(|p| store.dungeon_of_point(*p) == Some(d) && nw.sphere_free(d, *p, r + 0.05) && !nw.inside_any_volume(*p))
}

pub struct Sim<'w> {
    pub world: &'w World,
    pub scenario: Scenario,
    pub env: CameraEnv<'w>,
    pub nw: NpcWorld<'w>,
    pub tags: MetaStore<'w>,
    pub doors: DoorStates,
    pub cache: PvsCache,
    pub state: TickState,
    pub audit: bool,
    audit_scene: RayScene<'w>,
    mesh_owner: BTreeMap<usize, ElementId>,
    obstacles: Vec<usize>,
    columns: Vec<usize>,
    dt: f64,
}

impl<'w> Sim<'w> {
    pub fn new(world: &'w World, grids: &'w [LayeredGrid], scenario: &Scenario, audit: bool) -> Result<Self, SimError> {
        if !(scenario.tick_rate > 0.0) {
            return Err(SimError::TickRate);
        }
        if scenario.timeline.windows(2).any(|w| w[1].tick < w[0].tick) {
            return Err(SimError::Timeline);
        }
        if !scenario.camera.is_valid() {
            return Err(SimError::Camera);
        }
        if grids.len() != world.dungeons.len() || grids.iter().enumerate().any(|(i, g)| g.dungeon.index() != i) {
            return Err(SimError::Grids);
        }
        let env = CameraEnv::new(world, grids);
        let nw = NpcWorld::new(world, grids);
        let mut tags = MetaStore::new(world);
        let ph = world.config.style.player_height;
        let p = &scenario.params;

        let spawn_at = |tags: &MetaStore, spec: &AgentSpec, y_above_floor: f64, r: f64, id: u32| -> Result<(DungeonId, Vec3), SimError> {
            let dg = world.dungeons.get(spec.dungeon as usize).ok_or(SimError::NoDungeon(spec.dungeon))?;
            let base = dg.center + Vec3::new(spec.offset[0], 0.0, spec.offset[1]);
            let probe_y = dg.floor_altitude() + y_above_floor.max(0.5 * ph);
            let found = find_spawn(&nw, tags, dg.id, base.with_y(probe_y), r).ok_or(SimError::Spawn(id))?;
            let g = tags.height_at(dg.id, found.x, found.z).unwrap_or(dg.floor_altitude());
            Ok((dg.id, found.with_y(g + y_above_floor)))
        };

        let (pd, feet_probe) = spawn_at(&tags, &scenario.player, 0.0, p.player.radius, 0)?;
        let mut player = AgentState::new(PLAYER_ID, AgentKind::Player, feet_probe, scenario.player.yaw, pd);
        player.mode = AgentMode::Walking;
        tags.tag_entity(PLAYER_ID, body_center(player.position, ph)).map_err(|_| SimError::Spawn(0))?;

        let mut npcs = Vec::new();
        for (k, spec) in scenario.agents.iter().enumerate() {
            let id = EntityId(k as u32 + 1);
            let (y, r) = match spec.kind {
                AgentKind::Bat => (0.5 * (p.bat.altitude.0 + p.bat.altitude.1), p.bat.radius),
                AgentKind::Scorpion => (p.scorpion.body_offset, p.scorpion.radius),
                AgentKind::SerpentHead => (p.serpent.ride_height, p.serpent.radius + 0.1),
                AgentKind::Mummy => (0.9, p.mummy.radius),
                AgentKind::Player => return Err(SimError::Spawn(id.0)),
            };
            let (d, pos) = spawn_at(&tags, spec, y, r, id.0)?;
            let a = AgentState::new(id, spec.kind, pos, spec.yaw, d);
            tags.tag_entity(id, pos).map_err(|_| SimError::Spawn(id.0))?;
            npcs.push(match spec.kind {
                AgentKind::SerpentHead => Npc::Serpent(SerpentState::spawn(a, &p.serpent)),
                _ => Npc::Agent(a),
            });
        }

        let subject = Subject { feet: player.position, yaw: player.yaw() };
        let rig = spawn_camera(&env, &subject, &scenario.camera).map_err(|_| SimError::CameraSpawn)?;
        let audit_scene = RayScene::new(world.elements.iter().map(|e| (e.deploy_mesh.index(), &world.meshes[e.deploy_mesh.index()])));
        let mesh_owner = world.elements.iter().map(|e| (e.deploy_mesh.index(), e.id)).collect();
        let obstacles = world.elements.iter().enumerate().filter(|(_, e)| e.category.is_obstacle()).map(|(i, _)| i).collect();
        let columns = world.elements.iter().enumerate().filter(|(_, e)| e.category == Category::Column).map(|(i, _)| i).collect();
        let mut sim = Sim {
            world,
            scenario: scenario.clone(),
            env,
            nw,
            tags,
            doors: DoorStates::default(),
            cache: PvsCache::new(scenario.pvs.cache_capacity),
            state: TickState {
                tick: 0,
                player,
                npcs,
                rig,
                visible: VisibleSet::default(),
                events: TickEvents::default(),
                violations: Violations::default(),
                held: Input::default(),
            },
            audit,
            audit_scene,
            mesh_owner,
            obstacles,
            columns,
            dt: 1.0 / scenario.tick_rate,
        };
        let (vis, _) = sim.visibility();
        sim.state.visible = vis.unwrap_or_default();
        Ok(sim)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn player_height(&self) -> f64 {
        self.world.config.style.player_height
    }

    pub fn view_pose(&self) -> ViewPose {
        let r = &self.state.rig;
        let mut look = (r.target - r.position).normalize_or_zero();
        if look.length() < 0.5 {
            look = Vec3::from_yaw(self.state.player.yaw());
        }
        ViewPose { position: r.position, look, fov: self.scenario.camera.fov, aspect: self.scenario.aspect }
    }

    fn dynamics(&self) -> Vec<DynamicEntity> {
        let ph = self.player_height();
        let mut out = vec![DynamicEntity { id: PLAYER_ID, center: body_center(self.state.player.position, ph), radius: 0.5 * ph }];
        for n in &self.state.npcs {
            let (c, r) = n.bounds(&self.scenario.params);
            out.push(DynamicEntity { id: n.state().id, center: c, radius: r });
        }
        out
    }

    fn visibility(&mut self) -> (Option<VisibleSet>, bool) {
        let pose = self.view_pose();
        let dyns = self.dynamics();
        let cfg = self.scenario.pvs;
        let r = if self.scenario.pvs_cache {
            visible_set_cached(&pose, self.world, &self.tags, &self.doors, &dyns, &cfg, &mut self.cache)
        } else {
            crate::pvs::compute_visible_set(&pose, self.world, &self.tags, &self.doors, &dyns, &cfg).map(|s| (s, false))
        };
        match r {
            Ok((s, hit)) => (Some(s), hit),
            Err(_) => (None, false),
        }
    }

    /// Applies a camera configuration change; invalid results are ignored.
    fn apply_camera_change(&mut self, c: &CameraChange) -> bool {
        let mut cfg = self.scenario.camera.clone();
        if let Some(a) = c.altitude {
            cfg.altitude = a;
        }
        if let Some(d) = c.distance {
            cfg.desired_distance = d;
        }
        if let Some(a) = c.down_angle {
            cfg.down_angle = a;
        }
        if cfg.is_valid() && cfg.altitude.is_finite() && cfg.down_angle.is_finite() {
            self.scenario.camera = cfg;
            true
        } else {
            false
        }
    }

    /// One tick: player, NPCs by id, camera, visibility, retagging, audits.
    pub fn step(&mut self, input: &Input) -> &TickState {
        let dt = self.dt;
        let ph = self.player_height();
        let mut events = TickEvents::default();
        let mut v = self.state.violations;
        if let Some(m) = input.move_xz {
            self.state.held.move_xz = Some(m);
        }
        if let Some(o) = input.overlays {
            self.state.held.overlays = Some(o);
        }
        if let Some(c) = &input.camera {
            if !self.apply_camera_change(c) {
                v.subsystem_errors += 1;
            }
        }

        // Player.
        let motion = PlayerMotion {
            nw: &self.nw,
            store: &self.tags,
            params: &self.scenario.params.player,
            height: ph,
            fly_height: self.scenario.fly_height,
        };
        let mv = self.state.held.move_xz.unwrap_or([0.0, 0.0]);
        let player = motion.step(&self.state.player, mv, input.fly, input.land, dt);

        // NPCs in id order; later ones see the earlier ones' new states.
        let p = &self.scenario.params;
        let mut npcs: Vec<Npc> = self.state.npcs.clone();
        for i in 0..npcs.len() {
            let others: Vec<AgentState> = npcs.iter().map(|n| n.state().clone()).collect();
            let next = match &npcs[i] {
                Npc::Agent(a) => match a.kind {
                    AgentKind::Bat => bat_update(a, &player, &self.nw, &self.tags, &p.bat, dt).map(|(s, dec)| {
                        if matches!(dec, Decision::FlipTurn(_)) && !matches!(a.mode, AgentMode::FlipTurn { .. }) {
                            events.flip_turns += 1;
                        }
                        Npc::Agent(s)
                    }),
                    AgentKind::Scorpion => scorpion_update(a, &player, &others, &self.nw, &self.tags, &p.scorpion, dt).map(Npc::Agent),
                    AgentKind::Mummy => mummy_update(a, &player, &self.nw, &self.tags, &p.mummy, dt).map(Npc::Agent),
                    _ => Ok(Npc::Agent(a.clone())),
                },
                Npc::Serpent(s) => serpent_update(s, &player, &self.nw, &self.tags, &p.serpent, dt).map(Npc::Serpent),
            };
            match next {
                Ok(n) => npcs[i] = n,
                Err(_) => v.subsystem_errors += 1,
            }
        }

        // Camera.
        let subject = Subject { feet: player.position, yaw: player.yaw() };
        let old_rig = self.state.rig.clone();
        let rig = update_camera(&self.env, &old_rig, &subject, &self.scenario.camera, dt);
        let replanned = rig.path != old_rig.path && !(rig.path.len() + 1 == old_rig.path.len() || rig.path.is_empty());
        events.retrigger = (rig.retrigger && !old_rig.retrigger) || (old_rig.retrigger && replanned);

        self.state.player = player;
        self.state.npcs = npcs;
        self.state.rig = rig;

        // Visibility, then retagging.
        let (vis, hit) = self.visibility();
        events.pvs_cache_hit = hit;
        match vis {
            Some(s) => self.state.visible = s,
            None => {
                v.subsystem_errors += 1;
                self.state.visible = VisibleSet::default();
            }
        }
        let before = self.tags.tag_of(PLAYER_ID);
        match self.tags.tag_entity(PLAYER_ID, body_center(self.state.player.position, ph)) {
            Ok(d) => events.gate_crossing = before.is_some_and(|b| b != d),
            Err(_) => v.subsystem_errors += 1,
        }
        for n in &self.state.npcs {
            let a = n.state();
            if self.tags.tag_entity(a.id, a.position).is_err() {
                v.subsystem_errors += 1;
            }
        }

        if self.audit {
            self.run_audits(&mut v);
        }
        self.state.tick += 1;
        self.state.events = events;
        self.state.violations = v;
        &self.state
    }

    fn run_audits(&self, v: &mut Violations) {
        let w = self.world;
        let ph = self.player_height();
        let p = &self.scenario.params;
        if self.env.sphere_clips(self.state.rig.position, self.scenario.camera.radius) {
            v.camera_clip += 1;
        }
        let center = body_center(self.state.player.position, ph);
        if self.tags.dungeon_of_point(center).is_none() || self.obstacles.iter().any(|&i| w.elements[i].volume.obb.contains_point_strict(center)) {
            v.player_clip += 1;
        }
        for n in &self.state.npcs {
            match n {
                Npc::Agent(a) => {
                    let r = agent_radius(a.kind, p);
                    if self.obstacles.iter().any(|&i| sphere_intersects_volume(a.position, r, &w.elements[i].volume)) {
                        v.npc_clip += 1;
                    }
                }
                Npc::Serpent(s) => {
                    let mut prev = s.head.position;
                    for q in &s.segments {
                        if (q.position.distance(prev) - p.serpent.link).abs() > 1e-3 {
                            v.serpent_spacing += 1;
                        }
                        prev = q.position;
                        if self.columns.iter().any(|&i| sphere_intersects_volume(q.position, p.serpent.radius, &w.elements[i].volume)) {
                            v.npc_clip += 1;
                        }
                    }
                }
            }
        }
        // Visibility soundness on a few deterministic frustum rays.
        let pose = self.view_pose();
        if self.tags.dungeon_of_point(pose.position).is_some() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.state.tick);
            let (right, up) = view_basis(pose.look);
            let (h, vv) = half_angles(pose.fov, pose.aspect);
            for _ in 0..AUDIT_RAYS {
                let x = rng.gen_range(-1.0..1.0) * math::tan(h);
                let y = rng.gen_range(-1.0..1.0) * math::tan(vv);
                let dir = (pose.look + right * x + up * y).normalize_or_zero();
                if let Some(hit) = self.audit_scene.cast(pose.position, dir, f64::INFINITY) {
                    if let Some(e) = self.mesh_owner.get(&hit.mesh) {
                        if self.state.visible.statics.binary_search(e).is_err() {
                            v.pvs_miss += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Running totals for scenario metrics.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    m: Metrics,
    sum_static: f64,
    sum_dynamic: f64,
    last_camera: Option<Vec3>,
}

impl MetricsAccumulator {
    pub fn new(world: &World) -> Self {
        MetricsAccumulator { m: Metrics { total_static: world.elements.len(), ..Default::default() }, ..Default::default() }
    }

    pub fn start(&mut self, s: &TickState) {
        self.last_camera = Some(s.rig.position);
    }

    pub fn record(&mut self, s: &TickState) {
        let m = &mut self.m;
        m.ticks += 1;
        let (vs, vd) = (s.visible.statics.len(), s.visible.dynamics.len());
        self.sum_static += vs as f64;
        self.sum_dynamic += vd as f64;
        m.max_visible_static = m.max_visible_static.max(vs);
        m.max_visible_dynamic = m.max_visible_dynamic.max(vd);
        if let Some(prev) = self.last_camera {
            m.camera_path_length += prev.distance(s.rig.position);
        }
        self.last_camera = Some(s.rig.position);
        m.flip_turns += s.events.flip_turns as u64;
        m.gate_crossings += s.events.gate_crossing as u64;
        m.retriggers += s.events.retrigger as u64;
        m.pvs_cache_hits += s.events.pvs_cache_hit as u64;
        m.violations = s.violations;
    }

    pub fn finish(mut self) -> Metrics {
        let t = self.m.ticks as f64;
        if self.m.ticks > 0 {
            self.m.mean_visible_static = self.sum_static / t;
            self.m.mean_visible_dynamic = self.sum_dynamic / t;
            if self.m.total_static > 0 {
                self.m.culled_fraction = 1.0 - self.m.mean_visible_static / self.m.total_static as f64;
            }
        }
        self.m
    }
}

/// Merged input for each tick of a timeline.
pub fn inputs_at(timeline: &[TimedInput], tick: u64, cursor: &mut usize) -> Input {
    let mut out = Input::default();
    while *cursor < timeline.len() && timeline[*cursor].tick <= tick {
        if timeline[*cursor].tick == tick {
            out.merge(&timeline[*cursor].input);
        }
        *cursor += 1;
    }
    out
}

/// Runs a scenario, handing each trace record to `sink`.
pub fn run_scenario(
    world: &World,
    grids: &[LayeredGrid],
    scenario: &Scenario,
    audit: bool,
    mut sink: impl FnMut(&TraceRecord),
) -> Result<Metrics, SimError> {
    let mut acc = MetricsAccumulator::new(world);
    if scenario.duration == 0 {
        // Validate inputs without simulating.
        Sim::new(world, grids, scenario, audit)?;
        return Ok(acc.finish());
    }
    let mut sim = Sim::new(world, grids, scenario, audit)?;
    acc.start(&sim.state);
    let mut cursor = 0;
    for t in 0..scenario.duration {
        let input = inputs_at(&scenario.timeline, t, &mut cursor);
        let s = sim.step(&input);
        sink(&TraceRecord::of(s));
        acc.record(s);
    }
    Ok(acc.finish())
}

// ---------------------------------------------------------------- tours

#[derive(Clone, Copy, Debug, PartialEq)]
enum TourStep {
    Go(Vec3),
    Fly,
    Land,
}

fn opening_point(c: &crate::world::Connector, d: DungeonId) -> Vec3 {
    let u = if c.endpoints.0 == d { 0.0 } else { c.length };
    c.point(u, 0.0, c.floor_at(u))
}

fn room_loop(world: &World, d: DungeonId, fly: bool) -> Vec<TourStep> {
    let dg = &world.dungeons[d.index()];
    let mut out = Vec::new();
    if fly {
        out.push(TourStep::Go(dg.center));
        out.push(TourStep::Fly);
    }
    let cols: Vec<_> = world.elements_of(d).filter(|e| e.category == Category::Column).collect();
    if cols.is_empty() {
        let r = dg.apothem * 0.5;
        for k in 0..=8 {
            out.push(TourStep::Go(dg.center + Vec3::from_yaw(math::PI / 4.0 * k as f64) * r));
        }
    } else {
        for c in cols {
            let cc = c.volume.obb.center.with_y(dg.floor_altitude());
            let r = c.volume.obb.half_extents.x.max(c.volume.obb.half_extents.z) + 1.1;
            let start = ((cc - dg.center).flat().normalize_or_zero()).yaw() + math::PI;
            for k in 0..=8 {
                out.push(TourStep::Go(cc + Vec3::from_yaw(start + math::PI / 4.0 * k as f64) * r));
            }
        }
    }
    if fly {
        out.push(TourStep::Land);
    }
    out
}

/// A scripted walk through every dungeon in progression order (and back,
/// while time remains): passages crossed on foot, column formations
/// circled, every other room toured in flight.
pub fn tour_scenario(world: &World, grids: &[LayeredGrid], ticks: u64, base: &Scenario) -> Result<Scenario, SimError> {
    let store = MetaStore::new(world);
    let mut order = store.progression_order();
    if order.is_empty() {
        return Err(SimError::NoDungeon(0));
    }
    let back: Vec<DungeonId> = order.iter().rev().skip(1).copied().collect();
    let mut steps = Vec::new();
    let mut full = order.clone();
    full.extend(back);
    order = full;
    for (i, &d) in order.iter().enumerate() {
        if i > 0 {
            let prev = order[i - 1];
            if let Some(c) = world.connectors.iter().find(|c| c.other(prev) == Some(d)) {
                steps.push(TourStep::Go(opening_point(c, prev)));
                steps.push(TourStep::Go(c.point(c.cross_at, 0.0, c.floor_at(c.cross_at))));
                steps.push(TourStep::Go(opening_point(c, d)));
            }
        }
        steps.extend(room_loop(world, d, i % 2 == 1));
        if let Some(&next) = order.get(i + 1) {
            if let Some(c) = world.connectors.iter().find(|c| c.other(d) == Some(next)) {
                let o = opening_point(c, d);
                let inward = (world.dungeons[d.index()].center - o).flat().normalize_or_zero();
                steps.push(TourStep::Go(o + inward * 1.5));
            }
        }
    }

    let mut sc = base.clone();
    sc.duration = ticks;
    sc.player = AgentSpec { kind: AgentKind::Player, dungeon: order[0].0, offset: [0.0, 0.0], yaw: 0.0 };
    sc.timeline = Vec::new();
    let sim = Sim::new(world, grids, &sc, false)?;
    let motion = PlayerMotion {
        nw: &sim.nw,
        store: &sim.tags,
        params: &sc.params.player,
        height: sim.player_height(),
        fly_height: sc.fly_height,
    };
    let mut player = sim.state.player.clone();
    let dt = sim.dt();
    let mut held = [0.0, 0.0];
    let mut k = 0usize;
    let mut since_progress = 0u32;
    let mut best = f64::INFINITY;
    for t in 0..ticks {
        let mut input = Input::default();
        // Discrete actions take one tick each.
        loop {
            match steps.get(k % steps.len()) {
                Some(TourStep::Fly) if matches!(player.mode, AgentMode::Walking) => {
                    input.fly = true;
                    k += 1;
                    break;
                }
                Some(TourStep::Land) if matches!(player.mode, AgentMode::Flying) => {
                    input.land = true;
                    k += 1;
                    break;
                }
                Some(TourStep::Fly) | Some(TourStep::Land) => {
                    if matches!(player.mode, AgentMode::Landing { .. }) {
                        break;
                    }
                    k += 1;
                }
                _ => break,
            }
        }
        let mut want = [0.0, 0.0];
        if !matches!(player.mode, AgentMode::Landing { .. }) {
            if let Some(TourStep::Go(target)) = steps.get(k % steps.len()) {
                let to = (*target - player.position).flat();
                let dist = to.length();
                if dist < 0.3 || since_progress > 90 {
                    k += 1;
                    since_progress = 0;
                    best = f64::INFINITY;
                } else {
                    let dir = to * (1.0 / dist);
                    want = [dir.x, dir.z];
                    if dist < best - 0.05 {
                        best = dist;
                        since_progress = 0;
                    } else {
                        since_progress += 1;
                    }
                }
            }
        }
        let delta = (want[0] - held[0]).abs() + (want[1] - held[1]).abs();
        if delta > 0.05 || (want == [0.0, 0.0] && held != [0.0, 0.0]) {
            held = want;
            input.move_xz = Some(held);
        }
        if !input.is_empty() {
            sc.timeline.push(TimedInput { tick: t, input: input.clone() });
        }
        player = motion.step(&player, held, input.fly, input.land, dt);
    }
    Ok(sc)
}
