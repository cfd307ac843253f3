//! Third-person tracking camera: candidate sampling around the player,
//! grid path planning between positions, and distance-adaptive animation.
//!
//! Planning runs on a dilated copy of each dungeon's layered grid: a cell is
//! usable only when its whole 3x3 neighbourhood is empty. With a collision
//! radius below the voxel size, any point inside a usable cell keeps the
//! camera sphere clear of solid cells, so paths that only cross usable cells
//! never clip.

use alloc::collections::{BTreeSet, BinaryHeap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geometry::{point_aabb_distance, sphere_intersects_volume, RayScene};
use crate::math::{self, Vec3};
use crate::metastore::MetaStore;
use crate::voxel::{Cell, LayeredGrid};
use crate::world::{ConnectorId, DungeonId, World};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    /// Camera height above the player's feet.
    pub altitude: f64,
    pub desired_distance: f64,
    pub down_angle: f64,
    pub fov: f64,
    pub radius: f64,
    pub ring: (f64, f64),
    pub zones: u32,
    pub zone_step_deg: f64,
    pub radii: u32,
    pub altitudes: u32,
    pub retrigger: (f64, f64),
    pub base_speed: f64,
    pub weights: (f64, f64, f64),
    /// Largest angle between the camera offset and the behind direction
    /// that an idle camera tolerates.
    pub max_off_axis_deg: f64,
    /// Extra zone pairs added per failed planning attempt, capped here.
    pub max_widen: u32,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            altitude: 2.4,
            desired_distance: 4.0,
            down_angle: 0.3,
            fov: 1.2,
            radius: 0.35,
            ring: (2.5, 5.5),
            zones: 5,
            zone_step_deg: 30.0,
            radii: 4,
            altitudes: 3,
            retrigger: (2.0, 7.5),
            base_speed: 5.0,
            weights: (0.5, 0.3, 0.2),
            max_off_axis_deg: 75.0,
            max_widen: 2,
        }
    }
}

impl CameraConfig {
    pub fn samples_per_zone(&self) -> u32 {
        self.radii * self.altitudes
    }

    pub fn is_valid(&self) -> bool {
        self.radius > 0.0
            && 0.0 < self.ring.0
            && self.ring.0 < self.ring.1
            && self.retrigger.0 < self.desired_distance
            && self.desired_distance < self.retrigger.1
            && self.zones > 0
            && self.radii > 0
            && self.altitudes > 0
            && self.base_speed > 0.0
    }
}

/// What the camera follows: feet position and facing yaw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub feet: Vec3,
    pub yaw: f64,
}

impl Subject {
    pub fn head(&self, player_height: f64) -> Vec3 {
        self.feet + Vec3::Y * (player_height - 0.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CameraPhase {
    Idle,
    Animating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub position: Vec3,
    pub target: Vec3,
    pub phase: CameraPhase,
    /// Remaining waypoints, next first.
    pub path: Vec<Vec3>,
    pub speed: f64,
    pub retrigger: bool,
    /// Grid the camera currently plans in.
    pub dungeon: DungeonId,
    pub widen: u32,
    pub saturated: bool,
}

impl CameraRig {
    pub fn new(position: Vec3, target: Vec3, dungeon: DungeonId) -> Self {
        CameraRig {
            position,
            target,
            phase: CameraPhase::Idle,
            path: Vec::new(),
            speed: 0.0,
            retrigger: false,
            dungeon,
            widen: 0,
            saturated: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    pub cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CameraError {
    #[error("player position is outside every dungeon")]
    Unresolved,
    #[error("no acceptable camera position")]
    Saturated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reject {
    OutsideGrid,
    /// Cell not usable for planning.
    Cramped,
    Collision,
    Occluded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub position: Vec3,
    pub offset: f64,
    pub radius: f64,
    pub reject: Option<Reject>,
    pub score: f64,
}

/// Static data the camera queries every tick.
pub struct CameraEnv<'w> {
    pub world: &'w World,
    pub store: MetaStore<'w>,
    pub grids: &'w [LayeredGrid],
    /// Dilated grids used for planning, same order as `grids`.
    pub plan: Vec<LayeredGrid>,
    obstacles: Vec<usize>,
    scene: RayScene<'w>,
}

impl<'w> CameraEnv<'w> {
    /// `grids` must be indexed by dungeon id.
    pub fn new(world: &'w World, grids: &'w [LayeredGrid]) -> Self {
        assert!(grids.iter().enumerate().all(|(i, g)| g.dungeon.index() == i), "grids must be indexed by dungeon");
        let obstacles = world
            .elements
            .iter()
            .enumerate()
            .filter(|(_, e)| e.category.is_obstacle())
            .map(|(i, _)| i)
            .collect();
        let scene = RayScene::new(world.elements.iter().map(|e| (e.deploy_mesh.index(), &world.meshes[e.deploy_mesh.index()])));
        CameraEnv {
            world,
            store: MetaStore::new(world),
            grids,
            plan: grids.iter().map(LayeredGrid::dilated).collect(),
            obstacles,
            scene,
        }
    }

    pub fn player_height(&self) -> f64 {
        self.world.config.style.player_height
    }

    /// Sphere against obstacle volumes (walls, columns, torches, gates, ...).
    pub fn sphere_hits_obstacle(&self, p: Vec3, r: f64) -> bool {
        self.obstacles.iter().any(|i| sphere_intersects_volume(p, r, &self.world.elements[*i].volume))
    }

    /// Free-space distance from `p` to the nearest obstacle volume.
    pub fn obstacle_distance(&self, p: Vec3) -> f64 {
        self.obstacles
            .iter()
            .map(|i| self.world.elements[*i].volume.obb.distance_to_point(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn occluded(&self, a: Vec3, b: Vec3) -> bool {
        let d = b - a;
        let len = d.length();
        len > 1e-9 && self.scene.cast(a, d / len, len - 1e-6).is_some()
    }

    /// No-clip audit: does a sphere at `p` touch any solid cell of the grid
    /// it stands in, or any static element volume?
    pub fn sphere_clips(&self, p: Vec3, r: f64) -> bool {
        let Some(d) = self.store.dungeon_of_point(p) else {
            return true;
        };
        if sphere_clips_grid(&self.grids[d.index()], p, r) {
            return true;
        }
        self.world.elements.iter().any(|e| sphere_intersects_volume(p, r, &e.volume))
    }
}

/// Sphere against the solid cell boxes of one grid. Space outside the grid
/// or its layer slabs counts as solid.
pub fn sphere_clips_grid(g: &LayeredGrid, p: Vec3, r: f64) -> bool {
    if g.layer_altitudes.is_empty() {
        return true;
    }
    let lo = g.layer_altitudes[0] - g.layer_half;
    let hi = g.layer_altitudes[g.layer_altitudes.len() - 1] + g.layer_half;
    if p.y - r < lo || p.y + r > hi {
        return true;
    }
    let v = g.voxel_size;
    let x0 = math::floor((p.x - r - g.origin.x) / v) as i64;
    let x1 = math::floor((p.x + r - g.origin.x) / v) as i64;
    let z0 = math::floor((p.z - r - g.origin.z) / v) as i64;
    let z1 = math::floor((p.z + r - g.origin.z) / v) as i64;
    for (layer, a) in g.layer_altitudes.iter().enumerate() {
        if p.y + r <= a - g.layer_half || p.y - r >= a + g.layer_half {
            continue;
        }
        for iz in z0..=z1 {
            for ix in x0..=x1 {
                if !g.is_solid_at(layer as u32, ix, iz) {
                    continue;
                }
                let min = Vec3::new(g.origin.x + ix as f64 * v, a - g.layer_half, g.origin.z + iz as f64 * v);
                let max = min + Vec3::new(v, 2.0 * g.layer_half, v);
                if point_aabb_distance(p, min, max) < r {
                    return true;
                }
            }
        }
    }
    false
}

fn zone_offset(k: u32, step: f64) -> f64 {
    let m = k.div_ceil(2) as f64;
    if k % 2 == 1 {
        -m * step
    } else {
        m * step
    }
}

/// Every sample in the fixed order zone, radius, altitude, with its verdict.
pub fn enumerate_candidates(env: &CameraEnv, subject: &Subject, cfg: &CameraConfig, widen: u32) -> Result<Vec<Candidate>, CameraError> {
    let ph = env.player_height();
    let body = subject.feet + Vec3::Y * (ph * 0.5);
    let d = env.store.dungeon_of_point(body).ok_or(CameraError::Unresolved)?;
    let plan = &env.plan[d.index()];
    let head = subject.head(ph);
    let step = cfg.zone_step_deg.to_radians();
    let spacing = plan.layer_spacing();
    let nominal = subject.feet.y + cfg.altitude;
    let behind = subject.yaw + math::PI;
    let mut out = Vec::new();
    for k in 0..cfg.zones + 2 * widen {
        let offset = zone_offset(k, step);
        let dir = Vec3::from_yaw(behind + offset);
        for i in 0..cfg.radii {
            let r = if cfg.radii == 1 {
                0.5 * (cfg.ring.0 + cfg.ring.1)
            } else {
                cfg.ring.0 + (cfg.ring.1 - cfg.ring.0) * i as f64 / (cfg.radii - 1) as f64
            };
            for a in 0..cfg.altitudes {
                let raw = (subject.feet.flat() + dir * r).with_y(nominal + zone_offset(a, spacing));
                let mut c = Candidate { position: raw, offset, radius: r, reject: None, score: 0.0 };
                match plan.cell_of(raw) {
                    None => c.reject = Some(Reject::OutsideGrid),
                    Some(cell) => {
                        c.position = raw.with_y(plan.layer_altitudes[cell.layer as usize]);
                        if plan.is_solid(cell) {
                            c.reject = Some(Reject::Cramped);
                        } else if env.sphere_hits_obstacle(c.position, cfg.radius) {
                            c.reject = Some(Reject::Collision);
                        } else if env.occluded(c.position, head) {
                            c.reject = Some(Reject::Occluded);
                        }
                    }
                }
                if c.reject.is_none() {
                    let align = 0.5 * (1.0 + math::cos(offset));
                    let margin = (env.obstacle_distance(c.position) - cfg.radius).clamp(0.0, cfg.ring.1) / cfg.ring.1;
                    let miss = (c.position.distance(head) - cfg.desired_distance).abs() + (c.position.y - nominal).abs();
                    let close = 1.0 - (miss / cfg.desired_distance).min(1.0);
                    c.score = cfg.weights.0 * align + cfg.weights.1 * margin + cfg.weights.2 * close;
                }
                out.push(c);
            }
        }
    }
    Ok(out)
}

/// Highest-scoring accepted sample; the earliest wins ties.
pub fn sample_best_position(env: &CameraEnv, subject: &Subject, cfg: &CameraConfig, widen: u32) -> Result<Vec3, CameraError> {
    let all = enumerate_candidates(env, subject, cfg, widen)?;
    let mut best: Option<&Candidate> = None;
    for c in all.iter().filter(|c| c.reject.is_none()) {
        if best.map_or(true, |b| c.score > b.score) {
            best = Some(c);
        }
    }
    best.map(|c| c.position).ok_or(CameraError::Saturated)
}

fn cell_index(g: &LayeredGrid, c: Cell) -> usize {
    c.layer as usize * g.cells_per_layer() + c.iz as usize * g.nx as usize + c.ix as usize
}

pub fn vertical_step_cost(g: &LayeredGrid) -> f64 {
    g.layer_spacing() / g.voxel_size
}

/// Moves out of `c` with their kind: 0 orthogonal, 1 diagonal, 2 vertical.
pub fn grid_moves(g: &LayeredGrid, c: Cell) -> Vec<(Cell, u8)> {
    let mut out = Vec::with_capacity(10);
    let (x, z) = (c.ix as i64, c.iz as i64);
    let open = |dx: i64, dz: i64| !g.is_solid_at(c.layer, x + dx, z + dz);
    for dz in -1..=1i64 {
        for dx in -1..=1i64 {
            if (dx, dz) == (0, 0) || !open(dx, dz) {
                continue;
            }
            let diagonal = dx != 0 && dz != 0;
            if diagonal && !(open(dx, 0) && open(0, dz)) {
                continue;
            }
            let n = Cell { layer: c.layer, ix: (x + dx) as u32, iz: (z + dz) as u32 };
            out.push((n, if diagonal { 1 } else { 0 }));
        }
    }
    for dl in [-1i64, 1] {
        let l = c.layer as i64 + dl;
        if l >= 0 && !g.is_solid_at(l as u32, x, z) {
            out.push((Cell { layer: l as u32, ..c }, 2));
        }
    }
    out
}

fn move_cost(kind: u8, vertical: f64) -> f64 {
    match kind {
        0 => 1.0,
        1 => core::f64::consts::SQRT_2,
        _ => vertical,
    }
}

fn octile(a: Cell, b: Cell, vertical: f64) -> f64 {
    let dx = (a.ix as f64 - b.ix as f64).abs();
    let dz = (a.iz as f64 - b.iz as f64).abs();
    let dl = (a.layer as f64 - b.layer as f64).abs();
    dx.max(dz) + (core::f64::consts::SQRT_2 - 1.0) * dx.min(dz) + dl * vertical
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    h: f64,
    index: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // Reversed for a min-heap on (f, h, index).
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f).then(o.h.total_cmp(&self.h)).then(o.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Optimal 8-connected path with vertical layer steps. The reported cost
/// is summed from step counts so equal-cost paths agree bit for bit.
pub fn astar(g: &LayeredGrid, start: Cell, goal: Cell) -> Option<GridPath> {
    if !g.in_range(start) || !g.in_range(goal) || g.is_solid(start) || g.is_solid(goal) {
        return None;
    }
    let vertical = vertical_step_cost(g);
    let n = g.cells_per_layer() * g.layer_altitudes.len();
    let mut best = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<(Cell, u8)>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let s = cell_index(g, start);
    best[s] = 0.0;
    let h0 = octile(start, goal, vertical);
    heap.push(Open { f: h0, h: h0, index: s });
    let mut cells = vec![start; n];
    cells[s] = start;
    while let Some(Open { index, .. }) = heap.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        let c = cells[index];
        if c == goal {
            let mut path = vec![goal];
            let mut counts = [0u32; 3];
            let mut at = index;
            while let Some((p, kind)) = parent[at] {
                counts[kind as usize] += 1;
                path.push(p);
                at = cell_index(g, p);
            }
            path.reverse();
            let cost = counts[0] as f64 + counts[1] as f64 * core::f64::consts::SQRT_2 + counts[2] as f64 * vertical;
            return Some(GridPath { cells: path, cost });
        }
        for (m, kind) in grid_moves(g, c) {
            let mi = cell_index(g, m);
            if closed[mi] {
                continue;
            }
            let ng = best[index] + move_cost(kind, vertical);
            if ng < best[mi] {
                best[mi] = ng;
                parent[mi] = Some((c, kind));
                cells[mi] = m;
                let h = octile(m, goal, vertical);
                heap.push(Open { f: ng + h, h, index: mi });
            }
        }
    }
    None
}

/// True when every cell the horizontal segment crosses is empty in layer
/// `layer` of `g`.
pub fn segment_clear(g: &LayeredGrid, layer: u32, a: Vec3, b: Vec3) -> bool {
    g.cells_on_segment(a, b).into_iter().all(|(x, z)| !g.is_solid_at(layer, x, z))
}

/// Shortcuts by grid line of sight, then rounds each corner once (points at
/// 75% / 25% of the adjacent segments) where the cut stays on empty cells of
/// `plan` and the sphere at both new points clears `raw`.
pub fn smooth_path(path: &GridPath, plan: &LayeredGrid, raw: &LayeredGrid, radius: f64) -> Vec<Vec3> {
    let cells = &path.cells;
    if cells.len() <= 1 {
        return cells.iter().map(|c| plan.world_of(*c)).collect();
    }
    let mut kept = vec![cells[0]];
    let mut i = 0;
    while i + 1 < cells.len() {
        let mut j = cells.len() - 1;
        while j > i + 1 && !plan.line_of_sight(cells[i], cells[j]) {
            j -= 1;
        }
        kept.push(cells[j]);
        i = j;
    }
    let pts: Vec<Vec3> = kept.iter().map(|c| plan.world_of(*c)).collect();
    let mut out = vec![pts[0]];
    for k in 1..pts.len() - 1 {
        let (a, w, b) = (pts[k - 1], pts[k], pts[k + 1]);
        let layer = kept[k].layer;
        let flat = a.y == w.y && w.y == b.y;
        let turn = (w - a).flat().cross((b - w).flat()).length() > 1e-12;
        if flat && turn {
            let p1 = a.lerp(w, 0.75);
            let p2 = w.lerp(b, 0.25);
            if segment_clear(plan, layer, p1, p2) && !sphere_clips_grid(raw, p1, radius) && !sphere_clips_grid(raw, p2, radius) {
                out.push(p1);
                out.push(p2);
                continue;
            }
        }
        out.push(w);
    }
    out.push(pts[pts.len() - 1]);
    out
}

/// Planned route: the grid path of each leg and the world waypoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub legs: Vec<(DungeonId, GridPath)>,
    pub waypoints: Vec<Vec3>,
}

fn dungeon_route(env: &CameraEnv, from: DungeonId, to: DungeonId) -> Option<Vec<(ConnectorId, DungeonId)>> {
    let mut prev: Vec<Option<(ConnectorId, DungeonId)>> = vec![None; env.world.dungeons.len()];
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([from]);
    seen.insert(from);
    while let Some(d) = queue.pop_front() {
        if d == to {
            let mut out = Vec::new();
            let mut at = to;
            while let Some((c, p)) = prev[at.index()] {
                out.push((c, at));
                at = p;
            }
            out.reverse();
            return Some(out);
        }
        for (c, n) in env.store.neighbors_of(d)? {
            if seen.insert(n) {
                prev[n.index()] = Some((c, d));
                queue.push_back(n);
            }
        }
    }
    None
}

/// Cell on a connector's cross plane usable in both grids.
fn handoff(env: &CameraEnv, c: ConnectorId, a: DungeonId, b: DungeonId, near_y: f64) -> Option<(Cell, Cell)> {
    let conn = env.world.connector(c);
    let (ga, gb) = (&env.plan[a.index()], &env.plan[b.index()]);
    let mut alts: Vec<f64> = ga
        .layer_altitudes
        .iter()
        .copied()
        .filter(|y| gb.layer_altitudes.iter().any(|z| (z - y).abs() < 1e-9))
        .collect();
    alts.sort_by(|p, q| (p - near_y).abs().total_cmp(&(q - near_y).abs()));
    let half = conn.width_at(conn.cross_at) * 0.5;
    let v = ga.voxel_size;
    for y in alts {
        let mut k = 0i64;
        while (k as f64) * v <= half {
            for off in if k == 0 { vec![0.0] } else { vec![-(k as f64) * v, k as f64 * v] } {
                let p = conn.point(conn.cross_at, off, y);
                if let (Some(ca), Some(cb)) = (ga.cell_of(p), gb.cell_of(p)) {
                    if !ga.is_solid(ca) && !gb.is_solid(cb) {
                        return Some((ca, cb));
                    }
                }
            }
            k += 1;
        }
    }
    None
}

/// Plans from `from` (in grid `from_d`) to `goal` (in grid `to_d`), chaining
/// grids through cross-plane handoff cells.
pub fn plan_route(env: &CameraEnv, from_d: DungeonId, from: Vec3, to_d: DungeonId, goal: Vec3, radius: f64) -> Option<Route> {
    let hops = dungeon_route(env, from_d, to_d)?;
    let mut legs = Vec::new();
    let mut waypoints = vec![from];
    let mut d = from_d;
    let mut start = env.plan[d.index()].cell_of(from)?;
    for (c, next) in hops {
        let (exit, entry) = handoff(env, c, d, next, from.y)?;
        let path = astar(&env.plan[d.index()], start, exit)?;
        waypoints.extend(smooth_path(&path, &env.plan[d.index()], &env.grids[d.index()], radius));
        legs.push((d, path));
        d = next;
        start = entry;
    }
    let end = env.plan[d.index()].cell_of(goal)?;
    let path = astar(&env.plan[d.index()], start, end)?;
    waypoints.extend(smooth_path(&path, &env.plan[d.index()], &env.grids[d.index()], radius));
    legs.push((d, path));
    waypoints.push(goal);
    waypoints.dedup_by(|a, b| a.distance(*b) < 1e-12);
    Some(Route { legs, waypoints })
}

/// A grid in which `p` lies in a usable cell: the dungeon holding `p`
/// first, then `hint`, then any other.
pub fn usable_grid(env: &CameraEnv, p: Vec3, hint: DungeonId) -> Option<DungeonId> {
    let usable = |d: DungeonId| env.plan[d.index()].cell_of(p).is_some_and(|c| !env.plan[d.index()].is_solid(c));
    let first = env.store.dungeon_of_point(p);
    first
        .into_iter()
        .chain([hint])
        .chain(env.world.dungeons.iter().map(|d| d.id))
        .find(|d| usable(*d))
}

fn distance_ok(cfg: &CameraConfig, d: f64) -> bool {
    d >= cfg.retrigger.0 && d <= cfg.retrigger.1
}

/// Moves the rig along its waypoints at a speed scaled by the distance to
/// the player. `dt <= 0` leaves the rig untouched.
pub fn animate_step(rig: &CameraRig, subject: &Subject, cfg: &CameraConfig, player_height: f64, dt: f64) -> CameraRig {
    if !(dt > 0.0) {
        return rig.clone();
    }
    let mut r = rig.clone();
    let head = subject.head(player_height);
    let dist = r.position.distance(head);
    r.speed = cfg.base_speed * (dist / cfg.desired_distance).clamp(0.5, 3.0);
    r.target = head;
    if r.phase == CameraPhase::Animating {
        let mut budget = r.speed * dt;
        while budget > 0.0 && !r.path.is_empty() {
            let next = r.path[0];
            let seg = r.position.distance(next);
            if seg <= budget {
                r.position = next;
                r.path.remove(0);
                budget -= seg;
            } else {
                r.position = r.position.lerp(next, budget / seg);
                budget = 0.0;
            }
        }
        if r.path.is_empty() {
            r.phase = CameraPhase::Idle;
            r.retrigger = false;
        } else if !distance_ok(cfg, r.position.distance(head)) {
            r.retrigger = true;
        }
    }
    r
}

/// Whether an idle camera may stay where it is.
pub fn acceptable(env: &CameraEnv, rig: &CameraRig, subject: &Subject, cfg: &CameraConfig) -> bool {
    let head = subject.head(env.player_height());
    if !distance_ok(cfg, rig.position.distance(head)) || env.occluded(rig.position, head) {
        return false;
    }
    let off = (rig.position - subject.feet).flat();
    if off.length() < 1e-9 {
        return false;
    }
    let behind = Vec3::from_yaw(subject.yaw + math::PI);
    let cos = off.dot(behind) / off.length();
    cos >= math::cos(cfg.max_off_axis_deg.to_radians())
}

/// Initial placement: the best sample when one exists, else the usable
/// cell nearest to the player's head.
pub fn spawn_camera(env: &CameraEnv, subject: &Subject, cfg: &CameraConfig) -> Result<CameraRig, CameraError> {
    let ph = env.player_height();
    let head = subject.head(ph);
    let d = env.store.dungeon_of_point(subject.feet + Vec3::Y * (ph * 0.5)).ok_or(CameraError::Unresolved)?;
    let pos = match sample_best_position(env, subject, cfg, 0) {
        Ok(p) => p,
        Err(_) => {
            let g = &env.plan[d.index()];
            let mut best: Option<(f64, Vec3)> = None;
            for layer in 0..g.layer_altitudes.len() as u32 {
                for iz in 0..g.nz {
                    for ix in 0..g.nx {
                        let c = Cell { layer, ix, iz };
                        if g.is_solid(c) {
                            continue;
                        }
                        let p = g.world_of(c);
                        let dd = p.distance(head);
                        if best.map_or(true, |(b, _)| dd < b) {
                            best = Some((dd, p));
                        }
                    }
                }
            }
            best.ok_or(CameraError::Saturated)?.1
        }
    };
    Ok(CameraRig::new(pos, head, d))
}

/// One tick: re-sample and re-plan when idle and unhappy or retriggered,
/// then animate.
pub fn update_camera(env: &CameraEnv, rig: &CameraRig, subject: &Subject, cfg: &CameraConfig, dt: f64) -> CameraRig {
    let mut r = rig.clone();
    let ph = env.player_height();
    let replan = match r.phase {
        CameraPhase::Idle => !acceptable(env, &r, subject, cfg),
        CameraPhase::Animating => r.retrigger,
    };
    if replan {
        let body = subject.feet + Vec3::Y * (ph * 0.5);
        match (env.store.dungeon_of_point(body), sample_best_position(env, subject, cfg, r.widen)) {
            (Some(pd), Ok(goal)) => {
                // While moving, the new plan starts at the next waypoint so
                // the segment in progress stays valid.
                let from = r.path.first().copied().unwrap_or(r.position);
                let from_d = usable_grid(env, from, r.dungeon);
                match from_d.and_then(|fd| plan_route(env, fd, from, pd, goal, cfg.radius)) {
                    Some(route) => {
                        let mut path = Vec::new();
                        if r.phase == CameraPhase::Animating {
                            path.push(from);
                        }
                        path.extend(route.waypoints.into_iter().skip(1));
                        r.path = path;
                        r.phase = if r.path.is_empty() { CameraPhase::Idle } else { CameraPhase::Animating };
                        r.dungeon = pd;
                        r.widen = 0;
                        r.saturated = false;
                        r.retrigger = false;
                    }
                    None => r.widen = (r.widen + 1).min(cfg.max_widen),
                }
            }
            (_, Err(CameraError::Saturated)) => {
                r.saturated = true;
                r.widen = (r.widen + 1).min(cfg.max_widen);
            }
            _ => r.saturated = true,
        }
    }
    animate_step(&r, subject, cfg, ph, dt)
}
