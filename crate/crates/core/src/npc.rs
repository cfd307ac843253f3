//! Creature and player motion driven by the world metadata: probe distances
//! against obstacle faces, support planes for crawlers, a clearance field
//! for serpents, and wall sliding for the player.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{sphere_intersects_volume, Category, Obb, Plane, PlaneRole, RayScene};
use crate::math::{self, Vec3, PI};
use crate::metastore::MetaStore;
use crate::voxel::LayeredGrid;
use crate::world::{ConnectorId, ConnectorKind, DungeonId, EntityId, HeadingConstraint, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Bat,
    Scorpion,
    SerpentHead,
    Mummy,
    Player,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub heading: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AgentMode {
    Idle,
    Pursue,
    Attack,
    Hold,
    FlipTurn { remaining: f64 },
    Transit { connector: ConnectorId, waypoints: Vec<Pose>, next: usize },
    Walking,
    Flying,
    Landing { waypoints: Vec<Vec3>, next: usize, up: Vec3 },
}

impl AgentMode {
    pub fn name(&self) -> &'static str {
        match self {
            AgentMode::Idle => "idle",
            AgentMode::Pursue => "pursue",
            AgentMode::Attack => "attack",
            AgentMode::Hold => "hold",
            AgentMode::FlipTurn { .. } => "flip_turn",
            AgentMode::Transit { .. } => "transit",
            AgentMode::Walking => "walking",
            AgentMode::Flying => "flying",
            AgentMode::Landing { .. } => "landing",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: EntityId,
    pub kind: AgentKind,
    /// Body center for creatures, feet for the player.
    pub position: Vec3,
    pub heading: Vec3,
    pub up: Vec3,
    pub speed: f64,
    pub dungeon: DungeonId,
    pub mode: AgentMode,
}

impl AgentState {
    pub fn new(id: EntityId, kind: AgentKind, position: Vec3, yaw: f64, dungeon: DungeonId) -> Self {
        AgentState {
            id,
            kind,
            position,
            heading: Vec3::from_yaw(yaw),
            up: Vec3::Y,
            speed: 0.0,
            dungeon,
            mode: AgentMode::Idle,
        }
    }

    pub fn yaw(&self) -> f64 {
        self.heading.yaw()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "magnitude", rename_all = "snake_case")]
pub enum Decision {
    Advance(f64),
    TurnLeft(f64),
    TurnRight(f64),
    FlipTurn(f64),
    Hold,
    Attack,
    Land,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum NpcError {
    #[error("agent is outside every dungeon")]
    Unresolved,
    #[error("no support plane under the agent")]
    NoSupport,
}

/// Distance (world units) from each cell of a grid layer to the nearest
/// solid cell, capped at a few cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    pub origin: (f64, f64),
    pub cell: f64,
    pub nx: u32,
    pub nz: u32,
    pub cap: f64,
    pub values: Vec<f64>,
}

impl DistanceField {
    const REACH: i64 = 8;

    pub fn from_grid(g: &LayeredGrid, layer: u32) -> Self {
        let v = g.voxel_size;
        let cap = Self::REACH as f64 * v;
        let mut values = vec![cap; g.cells_per_layer()];
        for iz in 0..g.nz as i64 {
            for ix in 0..g.nx as i64 {
                let mut best = cap;
                for dz in -Self::REACH..=Self::REACH {
                    for dx in -Self::REACH..=Self::REACH {
                        if g.is_solid_at(layer, ix + dx, iz + dz) {
                            // Gap between the cell centers' boxes.
                            let gx = (dx.abs() - 1).max(0) as f64;
                            let gz = (dz.abs() - 1).max(0) as f64;
                            let d = if dx == 0 && dz == 0 { 0.0 } else { math::sqrt(gx * gx + gz * gz) * v };
                            best = best.min(d);
                        }
                    }
                }
                values[(iz * g.nx as i64 + ix) as usize] = best;
            }
        }
        DistanceField { origin: (g.origin.x, g.origin.z), cell: v, nx: g.nx, nz: g.nz, cap, values }
    }

    /// Clearance at `p`; zero outside the field.
    pub fn at(&self, p: Vec3) -> f64 {
        let fx = math::floor((p.x - self.origin.0) / self.cell);
        let fz = math::floor((p.z - self.origin.1) / self.cell);
        if fx < 0.0 || fz < 0.0 || fx >= self.nx as f64 || fz >= self.nz as f64 {
            return 0.0;
        }
        self.values[fz as usize * self.nx as usize + fx as usize]
    }
}

/// Per-dungeon lookups shared by all agents.
pub struct NpcWorld<'w> {
    pub world: &'w World,
    near: Vec<Vec<usize>>,
    obstacles: Vec<Vec<usize>>,
    scenes: Vec<RayScene<'w>>,
    pub fields: Vec<DistanceField>,
}

fn support_category(c: Category) -> bool {
    matches!(c, Category::Floor | Category::StairStep | Category::StairBase)
}

impl<'w> NpcWorld<'w> {
    /// `grids` indexed by dungeon id; the middle layer feeds the clearance field.
    pub fn new(world: &'w World, grids: &[LayeredGrid]) -> Self {
        let mut near = Vec::new();
        let mut obstacles = Vec::new();
        let mut scenes = Vec::new();
        for d in &world.dungeons {
            let mut ids: Vec<usize> = world
                .elements
                .iter()
                .enumerate()
                .filter(|(_, e)| e.dungeon == d.id || e.connector.is_some_and(|c| d.connectors.contains(&c)))
                .map(|(i, _)| i)
                .collect();
            ids.sort_unstable();
            let obs: Vec<usize> = ids.iter().copied().filter(|i| world.elements[*i].category.is_obstacle()).collect();
            scenes.push(RayScene::new(obs.iter().map(|i| {
                let m = world.elements[*i].deploy_mesh.index();
                (*i, &world.meshes[m])
            })));
            near.push(ids);
            obstacles.push(obs);
        }
        let fields = grids
            .iter()
            .map(|g| DistanceField::from_grid(g, (g.layer_altitudes.len() / 2) as u32))
            .collect();
        NpcWorld { world, near, obstacles, scenes, fields }
    }

    /// Horizontal distance to the first obstacle face along `dir`, capped.
    pub fn probe(&self, d: DungeonId, origin: Vec3, dir: Vec3, max: f64) -> f64 {
        let dir = dir.flat().normalize_or_zero();
        self.scenes[d.index()].cast(origin, dir, max).map_or(max, |h| h.t)
    }

    /// Whether a sphere stays clear of every obstacle volume near `d`.
    pub fn sphere_free(&self, d: DungeonId, p: Vec3, r: f64) -> bool {
        !self.obstacles[d.index()].iter().any(|i| sphere_intersects_volume(p, r, &self.world.elements[*i].volume))
    }

    /// Whether a sphere clears every column and torch volume near `d`.
    pub fn clear_of_columns(&self, d: DungeonId, p: Vec3, r: f64) -> bool {
        !self.obstacles[d.index()].iter().any(|i| {
            let e = &self.world.elements[*i];
            matches!(e.category, Category::Column | Category::Torch) && sphere_intersects_volume(p, r, &e.volume)
        })
    }

    /// Whether `p` lies inside any static element volume.
    pub fn inside_any_volume(&self, p: Vec3) -> bool {
        self.world.elements.iter().any(|e| e.volume.contains_point(p, 0.0) && e.volume.obb.contains_point_strict(p))
    }

    /// Highest walkable face under `p` (not above it by more than `reach`),
    /// as the plane carried by its element.
    pub fn support_plane(&self, d: DungeonId, p: Vec3, reach: f64) -> Option<Plane> {
        let mut best: Option<(f64, Plane)> = None;
        for i in &self.near[d.index()] {
            let e = &self.world.elements[*i];
            if !support_category(e.category) {
                continue;
            }
            for f in &e.faces {
                let n = f.normal();
                if n.y < 0.5 {
                    continue;
                }
                let pl = f.plane(PlaneRole::Floor);
                let y = (pl.offset - n.x * p.x - n.z * p.z) / n.y;
                let q = Vec3::new(p.x, y, p.z);
                if y > p.y + reach || !f.contains_coplanar(q, 1e-9) {
                    continue;
                }
                if best.map_or(true, |(by, _)| y > by) {
                    let carried = e
                        .planes
                        .iter()
                        .find(|c| matches!(c.role, PlaneRole::Floor | PlaneRole::Step | PlaneRole::Base) && c.normal.dot(n) > 1.0 - 1e-9)
                        .copied()
                        .unwrap_or(pl);
                    best = Some((y, carried));
                }
            }
        }
        best.map(|(_, p)| p)
    }

    /// Wall-like faces (not columns or torches) within `r` of `p`, with
    /// their outward normals.
    pub fn walls_near(&self, d: DungeonId, p: Vec3, r: f64) -> Vec<Vec3> {
        let mut out = Vec::new();
        for i in &self.obstacles[d.index()] {
            let e = &self.world.elements[*i];
            if matches!(e.category, Category::Column | Category::Torch) {
                continue;
            }
            for f in &e.faces {
                if f.distance_to_point(p) < r {
                    out.push(f.normal());
                }
            }
        }
        out
    }

    /// Columns and torches whose volume a sphere at `p` touches.
    pub fn columns_hit(&self, d: DungeonId, p: Vec3, r: f64) -> Vec<Obb> {
        self.obstacles[d.index()]
            .iter()
            .map(|i| &self.world.elements[*i])
            .filter(|e| matches!(e.category, Category::Column | Category::Torch) && sphere_intersects_volume(p, r, &e.volume))
            .map(|e| e.volume.obb)
            .collect()
    }
}

fn turn_toward(yaw: f64, target: f64, max: f64) -> f64 {
    math::wrap_angle(target - yaw).clamp(-max, max)
}

fn turn_decision(turn: f64, speed: f64) -> Decision {
    if turn < -1e-12 {
        Decision::TurnLeft(-turn)
    } else if turn > 1e-12 {
        Decision::TurnRight(turn)
    } else {
        Decision::Advance(speed)
    }
}

// ---------------------------------------------------------------- bats

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatParams {
    pub d_front: f64,
    pub d_side: f64,
    pub altitude: (f64, f64),
    pub turn_rate: f64,
    pub attack_range: f64,
    pub speed: f64,
    pub climb_rate: f64,
    pub flip_duration: f64,
    pub radius: f64,
    /// Radius of the side-turn arcs around gates.
    pub arc_radius: f64,
}

impl Default for BatParams {
    fn default() -> Self {
        BatParams {
            d_front: 1.2,
            d_side: 0.8,
            altitude: (1.5, 2.5),
            turn_rate: 3.0,
            attack_range: 1.0,
            speed: 3.0,
            climb_rate: 1.5,
            flip_duration: 0.6,
            radius: 0.3,
            arc_radius: 1.5,
        }
    }
}

/// Front, left and right probe distances from the bat's flat heading.
pub fn bat_probes(nw: &NpcWorld, d: DungeonId, s: &AgentState, max: f64) -> (f64, f64, f64) {
    let h = s.heading.flat().normalize_or_zero();
    (
        nw.probe(d, s.position, h, max),
        nw.probe(d, s.position, h.rotate_y(-PI / 2.0), max),
        nw.probe(d, s.position, h.rotate_y(PI / 2.0), max),
    )
}

/// The dead-end rule: blocked ahead and no room on either side.
pub fn flip_rule(front: f64, left: f64, right: f64, p: &BatParams) -> bool {
    front < p.d_front && left < p.d_side && right < p.d_side
}

fn probe_reach(p: &BatParams) -> f64 {
    4.0 * p.d_front.max(p.d_side)
}

pub fn bat_update(
    s: &AgentState,
    player: &AgentState,
    nw: &NpcWorld,
    store: &MetaStore,
    p: &BatParams,
    dt: f64,
) -> Result<(AgentState, Decision), NpcError> {
    let d = store.dungeon_of_point(s.position).ok_or(NpcError::Unresolved)?;
    let mut n = s.clone();
    n.dungeon = d;
    let (front, left, right) = bat_probes(nw, d, s, probe_reach(p));
    let rule = flip_rule(front, left, right, p);
    if rule && !matches!(n.mode, AgentMode::FlipTurn { .. }) {
        n.mode = AgentMode::FlipTurn { remaining: p.flip_duration };
    }
    let mut decision;
    let mut step = Vec3::ZERO;
    match n.mode.clone() {
        AgentMode::FlipTurn { remaining } => {
            // In-place half turn to the left.
            let dtheta = PI * dt.min(remaining.max(0.0)) / p.flip_duration;
            n.heading = n.heading.rotate_y(-dtheta).normalize_or_zero();
            let left_over = remaining - dt;
            n.mode = if left_over > 1e-12 { AgentMode::FlipTurn { remaining: left_over } } else { AgentMode::Pursue };
            n.speed = 0.0;
            decision = if rule { Decision::FlipTurn(left_over.max(0.0)) } else { Decision::TurnLeft(dtheta) };
        }
        AgentMode::Transit { connector, waypoints, next } => {
            let mut next = next;
            let mut budget = p.speed * dt;
            let mut pos = n.position;
            while budget > 0.0 && next < waypoints.len() {
                let w = waypoints[next];
                let seg = pos.distance(w.position);
                if seg <= budget {
                    pos = w.position;
                    n.heading = w.heading;
                    budget -= seg;
                    next += 1;
                } else {
                    let dir = (w.position - pos) / seg;
                    pos += dir * budget;
                    if dir.flat().length() > 1e-9 {
                        n.heading = dir.flat().normalize_or_zero();
                    }
                    budget = 0.0;
                }
            }
            step = pos - n.position;
            n.mode = if next >= waypoints.len() {
                AgentMode::Pursue
            } else {
                AgentMode::Transit { connector, waypoints, next }
            };
            n.speed = p.speed;
            decision = Decision::Advance(p.speed);
        }
        _ => {
            let head = player.position + Vec3::Y * 1.6;
            if player.dungeon != d {
                if let Some(c) = store
                    .neighbors_of(d)
                    .unwrap_or_default()
                    .into_iter()
                    .find(|(c, o)| *o == player.dungeon && matches!(nw.world.connector(*c).kind, ConnectorKind::Gate | ConnectorKind::Door))
                {
                    let wps = bat_gate_transition(nw.world, c.0, d, s.position, p);
                    n.mode = AgentMode::Transit { connector: c.0, waypoints: wps, next: 0 };
                    return Ok((n, Decision::Advance(p.speed)));
                }
            }
            if s.position.distance(head) < p.attack_range {
                n.mode = AgentMode::Attack;
                n.speed = 0.0;
                return Ok((n, Decision::Attack));
            }
            n.mode = AgentMode::Pursue;
            let yaw = s.yaw();
            let to = (head - s.position).flat();
            let target = if to.length() > 1e-9 { to.yaw() } else { yaw };
            let mut turn = turn_toward(yaw, target, p.turn_rate * dt);
            match store.heading_constraint(d, s.position, yaw + turn) {
                HeadingConstraint::ConstrainedLeft => turn -= 0.5 * p.turn_rate * dt,
                HeadingConstraint::ConstrainedRight => turn += 0.5 * p.turn_rate * dt,
                _ => {}
            }
            n.heading = Vec3::from_yaw(yaw + turn);
            decision = turn_decision(turn, p.speed);
            if store.heading_constraint(d, s.position, yaw + turn) == HeadingConstraint::Forbidden {
                n.speed = 0.0;
                if matches!(decision, Decision::Advance(_)) {
                    decision = Decision::Hold;
                }
            } else {
                n.speed = p.speed;
                step = n.heading * (p.speed * dt);
            }
        }
    }
    // Altitude band above the support.
    if !matches!(n.mode, AgentMode::Transit { .. }) {
        if let Some(h) = store.height_at(d, s.position.x + step.x, s.position.z + step.z) {
            let y = s.position.y;
            let (lo, hi) = (h + p.altitude.0, h + p.altitude.1);
            let goal = y.clamp(lo, hi);
            step.y = (goal - y).clamp(-p.climb_rate * dt, p.climb_rate * dt);
        }
    }
    let cand = n.position + step;
    let ok = step.length() == 0.0
        || store.dungeon_of_point(cand).is_some_and(|nd| nw.sphere_free(d, cand, p.radius) && nw.sphere_free(nd, cand, p.radius));
    if ok {
        n.position = cand;
    } else {
        n.speed = 0.0;
        if let AgentMode::Transit { .. } = n.mode {
            n.mode = AgentMode::Pursue;
        }
        if matches!(decision, Decision::Advance(_)) {
            decision = Decision::Hold;
        }
    }
    n.dungeon = store.dungeon_of_point(n.position).unwrap_or(d);
    Ok((n, decision))
}

/// Path through a gate or door: approach parallel to the wall at cruising
/// altitude, descend to the opening while turning 90 degrees onto the
/// passage axis, cross, and mirror the maneuver on the far side.
pub fn bat_gate_transition(world: &World, c: ConnectorId, from: DungeonId, bat: Vec3, p: &BatParams) -> Vec<Pose> {
    let conn = world.connector(c);
    let forward = conn.endpoints.0 == from;
    let axis = if forward { conn.axis } else { -conn.axis };
    let lateral = Vec3::new(-axis.z, 0.0, axis.x);
    let mid = conn.point(conn.cross_at, 0.0, 0.0).flat();
    let (near_half, far_half) = if forward { (conn.cross_at, conn.length - conn.cross_at) } else { (conn.length - conn.cross_at, conn.cross_at) };
    let r = p.arc_radius;
    let margin = r + 0.5;
    let floor = world.dungeons[from.index()].floor_altitude();
    let cruise = floor + 0.5 * (p.altitude.0 + p.altitude.1);
    let gate_y = floor + 0.5 * conn.heights.0.min(conn.heights.1);
    let side = if (bat - mid).dot(lateral) < 0.0 { -1.0 } else { 1.0 };
    let at = |s: f64, v: f64, y: f64| (mid + axis * s + lateral * v).with_y(y);
    const N: usize = 8;
    let mut out = Vec::new();
    let s_near = near_half + margin;
    for k in 0..=N {
        let th = 0.5 * PI * k as f64 / N as f64;
        let y = cruise + (gate_y - cruise) * (k as f64 / N as f64);
        let pos = at(-s_near - r * math::cos(th), side * r * (1.0 - math::sin(th)), y);
        let heading = (axis * math::sin(th) - lateral * (side * math::cos(th))).normalize_or_zero();
        out.push(Pose { position: pos, heading });
    }
    out.push(Pose { position: at(0.0, 0.0, gate_y), heading: axis });
    let s_far = far_half + margin;
    for k in (0..=N).rev() {
        let th = 0.5 * PI * k as f64 / N as f64;
        let y = cruise + (gate_y - cruise) * (k as f64 / N as f64);
        let pos = at(s_far + r * math::cos(th), side * r * (1.0 - math::sin(th)), y);
        let heading = (axis * math::sin(th) + lateral * (side * math::cos(th))).normalize_or_zero();
        out.push(Pose { position: pos, heading });
    }
    out
}

// ----------------------------------------------------------- scorpions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorpionParams {
    pub speed: f64,
    pub radius: f64,
    pub body_offset: f64,
    pub separation: f64,
    pub sting_range: f64,
    /// Fraction of the remaining tilt removed per second.
    pub up_rate: f64,
}

impl Default for ScorpionParams {
    fn default() -> Self {
        ScorpionParams { speed: 1.5, radius: 0.35, body_offset: 0.25, separation: 0.525, sting_range: 0.9, up_rate: 8.0 }
    }
}

/// Horizontal sliding move: drops the component into touched walls and
/// skirts columns on a fixed side. Shared by every walker.
pub fn slide_move(nw: &NpcWorld, d: DungeonId, center: Vec3, disp: Vec3, radius: f64) -> Vec3 {
    let mut out = disp;
    let len = disp.length();
    if len < 1e-15 {
        return Vec3::ZERO;
    }
    // Columns: swing onto the tangent of the nearest surface point, side from
    // the heading/offset cross product.
    let hits = nw.columns_hit(d, center + out, radius);
    if let Some(c) = hits.first() {
        let mut off = (c.closest_point(center) - center).flat();
        if off.length() < 1e-9 {
            off = (c.center - center).flat();
        }
        let side = if out.flat().cross(off).y >= 0.0 { 1.0 } else { -1.0 };
        let t = Vec3::new(-off.z, 0.0, off.x).normalize_or_zero() * side;
        out = t * out.flat().length();
    }
    // Walls: remove inward normal components.
    for _ in 0..3 {
        let mut changed = false;
        for n in nw.walls_near(d, center + out, radius) {
            let into = out.dot(n);
            if into < 0.0 {
                out -= n * into;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    out
}

pub fn scorpion_update(
    s: &AgentState,
    player: &AgentState,
    others: &[AgentState],
    nw: &NpcWorld,
    store: &MetaStore,
    p: &ScorpionParams,
    dt: f64,
) -> Result<AgentState, NpcError> {
    let d = store.dungeon_of_point(s.position).ok_or(NpcError::Unresolved)?;
    let mut n = s.clone();
    n.dungeon = d;
    let support = nw.support_plane(d, s.position, p.body_offset + 0.3).ok_or(NpcError::NoSupport)?;
    let to = (player.position - s.position).flat();
    let attack = to.length() < p.sting_range;
    let mut want = if attack { Vec3::ZERO } else { to.normalize_or_zero() };
    for o in others {
        if o.id == s.id || o.kind != AgentKind::Scorpion {
            continue;
        }
        let off = (s.position - o.position).flat();
        let dist = off.length();
        if dist < p.separation {
            let away = if dist > 1e-9 {
                off / dist
            } else {
                // Coincident: split along a direction fixed by the id order.
                let a = if s.id < o.id { 0.0 } else { PI };
                Vec3::from_yaw(a)
            };
            want += away * (2.0 * (1.0 + (p.separation - dist) / p.separation));
        }
    }
    n.mode = if attack { AgentMode::Attack } else { AgentMode::Pursue };
    let mut step = Vec3::ZERO;
    if want.length() > 1e-12 {
        let dir = want.normalize_or_zero();
        let raw = dir * (p.speed * dt);
        step = slide_move(nw, d, s.position, raw, p.radius);
        if !nw.sphere_free(d, s.position + step, p.radius) {
            step = Vec3::ZERO;
        }
    }
    let mut pos = s.position + step;
    let sup = nw.support_plane(d, pos, p.body_offset + 0.3).unwrap_or(support);
    // Project onto the support plane, then lift along its normal.
    let off = sup.normal.dot(pos) - sup.offset;
    pos -= sup.normal * off;
    pos += sup.normal * p.body_offset;
    match store.dungeon_of_point(pos) {
        Some(nd) if nw.sphere_free(nd, pos, p.radius) || step.length() == 0.0 => {
            n.position = pos;
            n.dungeon = nd;
        }
        _ => {}
    }
    let k = (p.up_rate * dt).min(1.0);
    let up = n.up.lerp(sup.normal, k).normalize_or_zero();
    n.up = if up.distance(sup.normal) < 1e-9 { sup.normal } else { up };
    if step.flat().length() > 1e-12 {
        let h = step - n.up * step.dot(n.up);
        n.heading = h.normalize_or_zero();
    }
    n.speed = step.length() / dt.max(1e-12);
    Ok(n)
}

// ------------------------------------------------------------ serpents

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SerpentParams {
    pub segments: usize,
    pub link: f64,
    pub amplitude: f64,
    pub wavelength: f64,
    pub speed: f64,
    pub radius: f64,
    pub turn_rate: f64,
    pub clearance: f64,
    pub lookahead: f64,
    pub ride_height: f64,
}

impl Default for SerpentParams {
    fn default() -> Self {
        SerpentParams {
            segments: 12,
            link: 0.5,
            amplitude: 0.3,
            wavelength: 3.0,
            speed: 1.8,
            radius: 0.25,
            turn_rate: 2.0,
            clearance: 0.6,
            lookahead: 1.0,
            ride_height: 0.3,
        }
    }
}

/// Extra sphere margin when checking head moves, so the polyline between
/// two checked head positions stays clear.
pub const SERPENT_MARGIN: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerpentState {
    pub head: AgentState,
    /// Head position without the lateral wave.
    pub base: Vec3,
    /// Arc length traveled by `base`.
    pub s: f64,
    /// Past head positions, newest first.
    pub history: VecDeque<Vec3>,
    pub segments: Vec<Pose>,
}

impl SerpentState {
    /// Chain laid out straight behind the head.
    pub fn spawn(head: AgentState, p: &SerpentParams) -> Self {
        let tail = head.position - head.heading.flat().normalize_or_zero() * (p.link * p.segments as f64 * 2.0);
        let mut st = SerpentState {
            base: head.position,
            head,
            s: 0.0,
            history: VecDeque::from([tail]),
            segments: Vec::new(),
        };
        st.history.push_front(st.head.position);
        st.segments = place_segments(&st.history, p);
        st
    }
}

/// Segments at exact chord spacing `link` along the head's trail.
pub fn place_segments(history: &VecDeque<Vec3>, p: &SerpentParams) -> Vec<Pose> {
    let mut out = Vec::with_capacity(p.segments);
    let mut prev = history[0];
    let mut idx = 0usize;
    let mut cursor = history[0];
    for _ in 0..p.segments {
        let mut found = None;
        while found.is_none() {
            let (a, b) = if idx + 1 < history.len() {
                (cursor, history[idx + 1])
            } else {
                // Past the end: extend straight.
                let dir = if history.len() > 1 {
                    (history[history.len() - 1] - history[history.len() - 2]).normalize_or_zero()
                } else {
                    Vec3::X
                };
                (cursor, cursor + dir * (2.0 * p.link))
            };
            let ab = b - a;
            let fa = a - prev;
            // |fa + t ab| = link, first crossing with t in [0, 1].
            let qa = ab.length_squared();
            let qb = 2.0 * fa.dot(ab);
            let qc = fa.length_squared() - p.link * p.link;
            if qa > 1e-18 {
                let disc = qb * qb - 4.0 * qa * qc;
                if disc >= 0.0 {
                    let t = (-qb + math::sqrt(disc)) / (2.0 * qa);
                    if (0.0..=1.0).contains(&t) {
                        found = Some((a + ab * t, ab));
                        cursor = a + ab * t;
                        continue;
                    }
                }
            }
            if idx + 1 < history.len() {
                idx += 1;
                cursor = history[idx];
            } else {
                cursor = b;
            }
        }
        let (pos, ab) = found.unwrap();
        let heading = (prev - pos).normalize_or_zero();
        let _ = ab;
        out.push(Pose { position: pos, heading });
        prev = pos;
    }
    out
}

fn prune_history(h: &mut VecDeque<Vec3>, keep: f64) {
    let mut acc = 0.0;
    let mut cut = h.len();
    for i in 1..h.len() {
        acc += h[i].distance(h[i - 1]);
        if acc > keep {
            cut = i + 1;
            break;
        }
    }
    h.truncate(cut.max(2));
}

pub fn serpent_update(
    st: &SerpentState,
    player: &AgentState,
    nw: &NpcWorld,
    store: &MetaStore,
    p: &SerpentParams,
    dt: f64,
) -> Result<SerpentState, NpcError> {
    let d = store.dungeon_of_point(st.head.position).ok_or(NpcError::Unresolved)?;
    let mut n = st.clone();
    n.head.dungeon = d;
    let yaw = st.head.yaw();
    let to = (player.position - st.base).flat();
    let toward = if to.length() > 1e-9 { to.yaw() } else { yaw };
    let field = &nw.fields[d.index()];
    let usable = |a: f64| {
        let ahead = st.base + Vec3::from_yaw(a) * p.lookahead;
        store.heading_constraint(d, st.base, a) != HeadingConstraint::Forbidden && field.at(ahead) >= p.clearance
    };
    let choice = [toward, yaw, toward + PI].into_iter().find(|a| usable(*a));
    let Some(target) = choice else {
        n.head.mode = AgentMode::Hold;
        n.head.speed = 0.0;
        return Ok(n);
    };
    let new_yaw = yaw + turn_toward(yaw, target, p.turn_rate * dt);
    let dir = Vec3::from_yaw(new_yaw);
    let ds = p.speed * dt;
    let mut base = st.base + dir * ds;
    if let Some(h) = store.height_at(d, base.x, base.z) {
        base.y = h + p.ride_height;
    }
    let s = st.s + ds;
    let wave = p.amplitude * math::sin(2.0 * PI * s / p.wavelength);
    let head = base + Vec3::from_yaw(new_yaw + PI / 2.0) * wave;
    let moved = head.distance(st.head.position);
    let nd = store.dungeon_of_point(head);
    let clear = nd.is_some_and(|nd| nw.sphere_free(d, head, p.radius + SERPENT_MARGIN) && nw.sphere_free(nd, head, p.radius + SERPENT_MARGIN));
    if !clear || moved > 2.0 * SERPENT_MARGIN {
        n.head.mode = AgentMode::Hold;
        n.head.speed = 0.0;
        return Ok(n);
    }
    n.base = base;
    n.s = s;
    n.head.position = head;
    n.head.heading = dir;
    n.head.speed = p.speed;
    n.head.mode = AgentMode::Pursue;
    n.head.dungeon = nd.unwrap_or(d);
    n.history.push_front(head);
    prune_history(&mut n.history, p.link * p.segments as f64 * 8.0);
    n.segments = place_segments(&n.history, p);
    Ok(n)
}

// -------------------------------------------------------------- mummies

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MummyParams {
    pub speed: f64,
    pub radius: f64,
    pub turn_rate: f64,
    pub reach: f64,
}

impl Default for MummyParams {
    fn default() -> Self {
        MummyParams { speed: 1.2, radius: 0.4, turn_rate: 2.0, reach: 1.0 }
    }
}

/// Pursues the player on foot, sliding along walls.
pub fn mummy_update(s: &AgentState, player: &AgentState, nw: &NpcWorld, store: &MetaStore, p: &MummyParams, dt: f64) -> Result<AgentState, NpcError> {
    let d = store.dungeon_of_point(s.position).ok_or(NpcError::Unresolved)?;
    let mut n = s.clone();
    n.dungeon = d;
    let to = (player.position - s.position).flat();
    if to.length() < p.reach {
        n.mode = AgentMode::Attack;
        n.speed = 0.0;
        return Ok(n);
    }
    let yaw = s.yaw();
    let new_yaw = yaw + turn_toward(yaw, to.yaw(), p.turn_rate * dt);
    n.heading = Vec3::from_yaw(new_yaw);
    let step = slide_move(nw, d, s.position, n.heading * (p.speed * dt), p.radius);
    let mut pos = s.position + step;
    if let Some(h) = store.height_at(d, pos.x, pos.z) {
        pos.y = h + s.position.y - store.height_at(d, s.position.x, s.position.z).unwrap_or(h);
    }
    match store.dungeon_of_point(pos) {
        Some(nd) if nw.sphere_free(d, pos, p.radius) && nw.sphere_free(nd, pos, p.radius) => {
            n.position = pos;
            n.dungeon = nd;
            n.speed = step.length() / dt.max(1e-12);
            n.mode = AgentMode::Pursue;
        }
        _ => {
            n.speed = 0.0;
            n.mode = AgentMode::Hold;
        }
    }
    Ok(n)
}

// --------------------------------------------------------------- player

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlayerParams {
    pub radius: f64,
    pub walk_speed: f64,
    pub fly_speed: f64,
    /// Upper bound on the vertical speed at touch-down.
    pub soft_landing: f64,
    /// Deceleration used near the ground.
    pub landing_decel: f64,
    pub landing_step: f64,
}

impl Default for PlayerParams {
    fn default() -> Self {
        PlayerParams { radius: 0.4, walk_speed: 4.0, fly_speed: 4.0, soft_landing: 0.6, landing_decel: 6.0, landing_step: 0.25 }
    }
}

/// Corrects an intended displacement of the player (feet position, body
/// center at half height). Walls remove the inward component, columns
/// deflect tangentially, and the end point never lies inside a volume.
pub fn validate_player_motion(nw: &NpcWorld, store: &MetaStore, feet: Vec3, disp: Vec3, height: f64, p: &PlayerParams) -> Vec3 {
    let center = feet + Vec3::Y * (0.5 * height);
    let Some(d) = store.dungeon_of_point(center) else {
        return Vec3::ZERO;
    };
    let mut out = slide_move(nw, d, center, disp, p.radius);
    for _ in 0..8 {
        let end = center + out;
        if out.length() == 0.0 {
            break;
        }
        let region = store.dungeon_of_point(end).is_some();
        if region && !nw.inside_any_volume(end) && nw.clear_of_columns(d, end, p.radius) {
            return out;
        }
        out = out * 0.5;
    }
    let end = center + out;
    if out.length() > 0.0 && (store.dungeon_of_point(end).is_none() || nw.inside_any_volume(end)) {
        return Vec3::ZERO;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandingPlan {
    /// Feet positions, altitude never increasing; the last one touches down.
    pub waypoints: Vec<Vec3>,
    /// Up vector at touch-down (the support plane normal).
    pub up: Vec3,
}

/// Descent from an airborne feet position to supported ground: straight
/// down when the column of space below is clear, otherwise toward the
/// nearest clear touch-down point in a widening cone.
pub fn plan_landing_path(nw: &NpcWorld, store: &MetaStore, feet: Vec3, height: f64, p: &PlayerParams) -> Option<LandingPlan> {
    let center = feet + Vec3::Y * (0.5 * height);
    let d = store.dungeon_of_point(center)?;
    let mut offsets = vec![Vec3::ZERO];
    for ring in 1..=4 {
        let r = 0.5 * ring as f64;
        for k in 0..8 {
            offsets.push(Vec3::from_yaw(PI / 4.0 * k as f64) * r);
        }
    }
    for off in offsets {
        let (x, z) = (feet.x + off.x, feet.z + off.z);
        let Some(h) = store.height_at(d, x, z) else { continue };
        if h > feet.y + 1e-9 {
            continue;
        }
        let touch = Vec3::new(x, h, z);
        let drop = feet.y - h;
        let n = math::ceil(drop / p.landing_step).max(1.0) as usize;
        let pts: Vec<Vec3> = (0..=n).map(|k| feet.lerp(touch, k as f64 / n as f64)).collect();
        let ok = pts.iter().all(|q| {
            let c = *q + Vec3::Y * (0.5 * height);
            store.dungeon_of_point(c).is_some() && !nw.inside_any_volume(c) && nw.clear_of_columns(d, c, p.radius)
        }) && pts.windows(2).all(|w| {
            let c = w[0].lerp(w[1], 0.5) + Vec3::Y * (0.5 * height);
            nw.clear_of_columns(d, c, p.radius)
        });
        if ok {
            let up = nw.support_plane(d, touch + Vec3::Y * 0.01, 0.05).map_or(Vec3::Y, |pl| pl.normal);
            return Some(LandingPlan { waypoints: pts, up });
        }
    }
    None
}

/// Vertical speed while descending with `remaining` height left.
pub fn landing_speed(remaining: f64, p: &PlayerParams) -> f64 {
    math::sqrt(p.soft_landing * p.soft_landing + 2.0 * p.landing_decel * remaining.max(0.0)).min(p.fly_speed)
}
