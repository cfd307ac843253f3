//! Guided generation of the dungeon graph, its annotated elements, the two
//! mesh sets and the torch lights.
//!
//! Footprints are tangential convex polygons: every wall sits at the same
//! distance (the apothem) from the center, and each connection gets a wall
//! whose normal points straight at the neighbour's center. Corridors run
//! along the center line; their faces are split at the bisector plane so
//! each half is tagged to the dungeon on that side.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::geometry::{
    clip_polygon, BoundingVolume, Category, ConvexPolygon3, MeshBuffer, Obb, Plane, PlaneRole,
};
use crate::math::{self, Vec3, PI, TAU};
use crate::rng::{self, DetRng};
use crate::world::*;

/// Thickness of the slab volume behind every planar element.
pub const SLAB: f64 = 0.05;
/// Length of the flat landing at each end of a staircase.
pub const LANDING: f64 = 0.8;
pub const MAX_SIDES: u32 = 9;
/// Minimum passage length on each side of the cross plane.
pub const MIN_HALF_PASSAGE: f64 = 1.0;
const MIN_GAP: f64 = 40.0;
const MAX_GAP: f64 = 120.0;
/// Wall-to-wall turns in this band (degrees) are rejected to avoid right angles.
const FORBIDDEN_GAP: (f64, f64) = (85.0, 95.0);
const OPENING_MARGIN: f64 = 0.3;
const TORCH_LIGHT_OFFSET: f64 = 0.5;
const TORCH_HALF: Vec3 = Vec3::new(0.1, 0.2, 0.12);
const TORCH_MOUNT: f64 = 2.2;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config declares no dungeons")]
    Empty,
    #[error("duplicate dungeon id {0}")]
    DuplicateId(u32),
    #[error("dungeon ids must be 0..{0} without gaps")]
    SparseIds(usize),
    #[error("dungeon {0}: side_count {1} outside 5..=9")]
    SideCount(u32, u32),
    #[error("dungeon {0}: invalid radius range")]
    Radius(u32),
    #[error("progression indices are not a permutation of 0..{0}")]
    Progression(usize),
    #[error("connection references unknown dungeon {0}")]
    UnknownDungeon(u32),
    #[error("connection from {0} to itself")]
    SelfLoop(u32),
    #[error("duplicate connection between {0} and {1}")]
    DuplicateConnection(u32, u32),
    #[error("connection graph is disconnected: dungeon {0} unreachable from dungeon 0")]
    Disconnected(u32),
    #[error("dungeons {0} and {1} differ in floor altitude; only stairs may join them")]
    AltitudeMismatch(u32, u32),
    #[error("stairs between {0} and {1} need distinct floor altitudes and the stairs flag on both")]
    Stairs(u32, u32),
    #[error("either every dungeon or none may set an explicit position")]
    MixedPositions,
    #[error("automatic layout only handles chains in progression order; {0}-{1} is not consecutive")]
    AutoLayout(u32, u32),
    #[error("dungeons {0} and {1} are too close for their connector")]
    TooClose(u32, u32),
    #[error("footprints of dungeons {0} and {1} overlap")]
    Overlap(u32, u32),
    #[error("dungeon {0}: connections leave no valid wall arrangement with {1} sides")]
    Angles(u32, u32),
    #[error("dungeon {0}: opening toward dungeon {1} does not fit on its wall")]
    OpeningFit(u32, u32),
    #[error("invalid style: {0}")]
    Style(&'static str),
}

/// A generated world plus non-fatal diagnostics.
#[derive(Clone, Debug)]
pub struct Generated {
    pub world: World,
    pub warnings: Vec<String>,
}

pub fn generate_world(config: &WorldConfig) -> Result<World, ConfigError> {
    generate_world_report(config).map(|g| g.world)
}

fn ordered(r: (f64, f64)) -> bool {
    r.0.is_finite() && r.1.is_finite() && r.0 <= r.1
}

fn draw(rng: &mut DetRng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.gen_range(r.0..=r.1)
    } else {
        r.0
    }
}

/// Minimum interior height: room for the player twice over and for lintels.
pub fn min_interior_height(style: &StyleConfig) -> f64 {
    (2.0 * style.player_height).max(style.opening_height.1 + 0.6).max(style.camera_altitude.1 + 0.9)
}

pub fn validate(config: &WorldConfig) -> Result<(), ConfigError> {
    let n = config.dungeons.len();
    if n == 0 {
        return Err(ConfigError::Empty);
    }
    let mut ids = BTreeSet::new();
    for d in &config.dungeons {
        if !ids.insert(d.id) {
            return Err(ConfigError::DuplicateId(d.id));
        }
        if d.side_count < 5 || d.side_count > MAX_SIDES {
            return Err(ConfigError::SideCount(d.id, d.side_count));
        }
        if !ordered(d.radius) || d.radius.0 <= 0.0 {
            return Err(ConfigError::Radius(d.id));
        }
    }
    if ids.iter().copied().ne(0..n as u32) {
        return Err(ConfigError::SparseIds(n));
    }
    let prog: BTreeSet<u32> = config.dungeons.iter().map(|d| d.progression).collect();
    if prog.len() != n || prog.iter().copied().ne(0..n as u32) {
        return Err(ConfigError::Progression(n));
    }
    let s = &config.style;
    let ranges = [
        s.wall_height,
        s.ceiling_incline_deg,
        s.column_density,
        s.column_radius,
        s.opening_width,
        s.opening_height,
        s.corridor_length,
        s.camera_altitude,
    ];
    if ranges.iter().any(|r| !ordered(*r)) {
        return Err(ConfigError::Style("every range needs finite min <= max"));
    }
    if s.voxel_size <= 0.0 || s.grid_layers == 0 {
        return Err(ConfigError::Style("voxel_size must be positive and grid_layers at least 1"));
    }
    if s.stair_steps % 2 == 0 {
        return Err(ConfigError::Style("stair_steps must be odd"));
    }
    if s.wall_height.0 < min_interior_height(s) {
        return Err(ConfigError::Style("wall_height below the minimum interior height"));
    }
    if s.ceiling_incline_deg.0 < 0.0 || s.ceiling_incline_deg.1 >= 45.0 {
        return Err(ConfigError::Style("ceiling incline must lie in [0, 45) degrees"));
    }
    if s.column_radius.0 <= 0.0 || s.opening_width.0 <= 0.0 || s.corridor_length.0 <= 0.0 {
        return Err(ConfigError::Style("column radius, opening width and corridor length must be positive"));
    }
    if s.torch_intensity <= 0.0 {
        return Err(ConfigError::Style("torch_intensity must be positive"));
    }

    let mut pairs = BTreeSet::new();
    for c in &config.connections {
        for e in [c.from, c.to] {
            if e as usize >= n {
                return Err(ConfigError::UnknownDungeon(e));
            }
        }
        if c.from == c.to {
            return Err(ConfigError::SelfLoop(c.from));
        }
        if !pairs.insert((c.from.min(c.to), c.from.max(c.to))) {
            return Err(ConfigError::DuplicateConnection(c.from, c.to));
        }
        let find = |id: u32| config.dungeons.iter().find(|d| d.id == id).expect("validated id");
        let (a, b) = (find(c.from), find(c.to));
        let same = a.floor_altitude == b.floor_altitude;
        if c.kind == ConnectorKind::Stairs {
            if same || !a.stairs || !b.stairs {
                return Err(ConfigError::Stairs(c.from, c.to));
            }
        } else if !same {
            return Err(ConfigError::AltitudeMismatch(c.from, c.to));
        }
    }
    // breadth-first reachability from dungeon 0
    let mut seen = vec![false; n];
    let mut queue = alloc::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for c in &config.connections {
            let (a, b) = (c.from as usize, c.to as usize);
            let v = if a == u { b } else if b == u { a } else { continue };
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(ConfigError::Disconnected(i as u32));
    }
    let explicit = config.dungeons.iter().filter(|d| d.position.is_some()).count();
    if explicit != 0 && explicit != n {
        return Err(ConfigError::MixedPositions);
    }
    Ok(())
}

struct RoomParams {
    apothem: f64,
    height: f64,
    incline: f64,
    tilt: f64,
    density: f64,
    column_radius: f64,
}

struct PassageParams {
    widths: (f64, f64),
    heights: (f64, f64),
    length: f64,
}

fn min_passage_length(kind: ConnectorKind, style: &StyleConfig) -> f64 {
    match kind {
        ConnectorKind::Stairs => 2.0 * LANDING + 0.3 * style.stair_steps as f64,
        _ => 1.0,
    }
}

fn gap_ok(g: f64) -> bool {
    g >= MIN_GAP - 1e-9 && g <= MAX_GAP + 1e-9 && !(g >= FORBIDDEN_GAP.0 && g <= FORBIDDEN_GAP.1)
}

/// Splits an arc of `total` degrees into `m` valid gaps, jittered.
fn split_arc(total: f64, m: usize, rng: &mut DetRng) -> Option<Vec<f64>> {
    if m == 1 {
        return gap_ok(total).then(|| vec![total]);
    }
    for _ in 0..64 {
        let raw: Vec<f64> = (0..m).map(|_| 1.0 + rng.gen_range(-0.12..0.12)).collect();
        let sum: f64 = raw.iter().sum();
        let gaps: Vec<f64> = raw.iter().map(|r| r / sum * total).collect();
        if gaps.iter().all(|g| gap_ok(*g)) {
            return Some(gaps);
        }
    }
    let even = total / m as f64;
    gap_ok(even).then(|| vec![even; m])
}

/// Wall directions (unit vectors, ascending yaw) with the connection each
/// wall serves. Connection walls use the exact given direction.
fn wall_directions(
    conns: &[(Vec3, usize)],
    sides: u32,
    rng: &mut DetRng,
) -> Option<Vec<(Vec3, Option<usize>)>> {
    if conns.is_empty() {
        let base = rng.gen_range(0.0..TAU);
        let gaps = split_arc(360.0, sides as usize, rng)?;
        let mut yaw = base;
        let mut out = Vec::new();
        for g in gaps {
            out.push((Vec3::from_yaw(yaw), None));
            yaw += g.to_radians();
        }
        return Some(out);
    }
    let mut sorted: Vec<(f64, Vec3, usize)> =
        conns.iter().map(|(v, i)| (v.yaw().rem_euclid_tau(), *v, *i)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    let k = sorted.len();
    let arcs: Vec<f64> = (0..k)
        .map(|j| {
            let next = if j + 1 < k { sorted[j + 1].0 } else { sorted[0].0 + TAU };
            (next - sorted[j].0).to_degrees()
        })
        .collect();
    if arcs.iter().any(|a| *a < MIN_GAP - 1e-9) {
        return None;
    }
    let mut m: Vec<usize> = arcs
        .iter()
        .map(|a| {
            let base = math::ceil(a / MAX_GAP - 1e-9).max(1.0) as usize;
            if base == 1 && !gap_ok(*a) { 2 } else { base }
        })
        .collect();
    while m.iter().sum::<usize>() < sides as usize {
        let best = (0..k)
            .filter(|j| arcs[*j] / (m[*j] + 1) as f64 >= MIN_GAP)
            .max_by(|a, b| (arcs[*a] / m[*a] as f64).total_cmp(&(arcs[*b] / m[*b] as f64)).then(b.cmp(a)))?;
        m[best] += 1;
    }
    let mut out = Vec::new();
    for j in 0..k {
        let mut gaps = None;
        let mut mj = m[j];
        while gaps.is_none() && arcs[j] / mj as f64 >= MIN_GAP - 1e-9 {
            gaps = split_arc(arcs[j], mj, rng);
            mj += 1;
        }
        let gaps = gaps?;
        out.push((sorted[j].1, Some(sorted[j].2)));
        let mut yaw = sorted[j].0;
        for g in &gaps[..gaps.len() - 1] {
            yaw += g.to_radians();
            out.push((Vec3::from_yaw(yaw), None));
        }
    }
    Some(out)
}

trait RemTau {
    fn rem_euclid_tau(self) -> f64;
}

impl RemTau for f64 {
    fn rem_euclid_tau(self) -> f64 {
        let r = libm::fmod(self, TAU);
        if r < 0.0 { r + TAU } else { r }
    }
}

/// Corner where the lines `u_i . (p - c) = a` and `u_j . (p - c) = a` meet.
fn corner(c: Vec3, a: f64, ui: Vec3, uj: Vec3) -> Vec3 {
    let det = ui.x * uj.z - ui.z * uj.x;
    let qx = a * (uj.z - ui.z) / det;
    let qz = a * (ui.x - uj.x) / det;
    Vec3::new(c.x + qx, c.y, c.z + qz)
}

/// Returns `poly` wound so its normal has a non-negative component along `desired`.
pub fn oriented(poly: ConvexPolygon3, desired: Vec3) -> ConvexPolygon3 {
    if poly.normal().dot(desired) < 0.0 {
        poly.reversed()
    } else {
        poly
    }
}

/// Thin box on the free side of a planar face.
pub fn slab_volume(face: &ConvexPolygon3, thickness: f64) -> BoundingVolume {
    let n = face.normal();
    let vs = &face.vertices;
    let mut e1 = Vec3::ZERO;
    for i in 0..vs.len() {
        let e = vs[(i + 1) % vs.len()] - vs[i];
        if e.length() > 1e-9 {
            e1 = (e - n * e.dot(n)).normalize_or_zero();
            break;
        }
    }
    let e2 = n.cross(e1).normalize_or_zero();
    let (mut lo1, mut hi1, mut lo2, mut hi2) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut d = 0.0;
    for v in vs {
        lo1 = lo1.min(v.dot(e1));
        hi1 = hi1.max(v.dot(e1));
        lo2 = lo2.min(v.dot(e2));
        hi2 = hi2.max(v.dot(e2));
        d += v.dot(n);
    }
    d /= vs.len() as f64;
    let center = e1 * ((lo1 + hi1) * 0.5) + e2 * ((lo2 + hi2) * 0.5) + n * (d + thickness * 0.5);
    let half = Vec3::new(
        ((hi1 - lo1) * 0.5).max(1e-4),
        ((hi2 - lo2) * 0.5).max(1e-4),
        thickness * 0.5,
    );
    BoundingVolume::from_obb(Obb { center, half_extents: half, axes: [e1, e2, n] })
}

/// A placed hexagonal column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Column {
    pub center: Vec3,
    pub radius: f64,
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnPlacement {
    pub columns: Vec<Column>,
    pub requested: usize,
}

/// Number of candidate sites tried per dungeon.
const COLUMN_CANDIDATES: usize = 400;

/// Minimum distance between column centers.
pub fn column_clearance(radius: f64, style: &StyleConfig) -> f64 {
    2.0 * radius + style.column_gap
}

/// Greedy column placement over a fixed candidate sequence.
///
/// Candidates are drawn before the density is looked at, so a larger
/// density accepts a superset of the sites a smaller one does.
pub fn place_column_formations(
    dungeon: &Dungeon,
    keep_clear: &[Vec3],
    density: f64,
    radius: f64,
    style: &StyleConfig,
    rng: &mut DetRng,
) -> ColumnPlacement {
    let (x0, z0, x1, z1) = dungeon.bounds_xz();
    let candidates: Vec<(f64, f64, f64)> = (0..COLUMN_CANDIDATES)
        .map(|_| (rng.gen_range(x0..=x1), rng.gen_range(z0..=z1), rng.gen_range(0.0..TAU)))
        .collect();
    let requested = math::floor(density.max(0.0) * dungeon.footprint_area()) as usize;
    let c_min = column_clearance(radius, style);
    let wall_min = radius + style.column_gap;
    let open_min = radius + style.column_gap + style.opening_width.1;
    let mut columns: Vec<Column> = Vec::new();
    for (x, z, yaw) in candidates {
        if columns.len() >= requested {
            break;
        }
        let p = Vec3::new(x, dungeon.floor_altitude(), z);
        if dungeon.walls.iter().any(|w| crate::geometry::signed_distance(p, w) < wall_min) {
            continue;
        }
        if keep_clear.iter().any(|o| o.flat().distance(p.flat()) < open_min) {
            continue;
        }
        if columns.iter().any(|c| c.center.distance(p) < c_min) {
            continue;
        }
        columns.push(Column { center: p, radius, yaw });
    }
    ColumnPlacement { columns, requested }
}

/// Polygon faces of a hexagonal column from floor to the dungeon ceiling.
pub fn column_faces(dungeon: &Dungeon, col: &Column) -> Vec<ConvexPolygon3> {
    let f = dungeon.floor_altitude();
    let ring: Vec<Vec3> = (0..6)
        .map(|k| col.center + Vec3::from_yaw(col.yaw + k as f64 * PI / 3.0) * col.radius)
        .collect();
    (0..6)
        .map(|k| {
            let (a, b) = (ring[k], ring[(k + 1) % 6]);
            let quad = ConvexPolygon3::new(vec![
                a.with_y(f),
                b.with_y(f),
                b.with_y(dungeon.ceiling_at(b.x, b.z)),
                a.with_y(dungeon.ceiling_at(a.x, a.z)),
            ]);
            oriented(quad, (a + b) * 0.5 - col.center)
        })
        .collect()
}

fn column_volume(dungeon: &Dungeon, col: &Column) -> BoundingVolume {
    let f = dungeon.floor_altitude();
    let mut top = f;
    for k in 0..6 {
        let v = col.center + Vec3::from_yaw(col.yaw + k as f64 * PI / 3.0) * col.radius;
        top = top.max(dungeon.ceiling_at(v.x, v.z));
    }
    let a0 = Vec3::from_yaw(col.yaw);
    let a2 = Vec3::new(-a0.z, 0.0, a0.x);
    BoundingVolume::from_obb(Obb {
        center: col.center.with_y((f + top) * 0.5),
        half_extents: Vec3::new(col.radius, (top - f) * 0.5, col.radius * math::sin(PI / 3.0)),
        axes: [a0, Vec3::Y, a2],
    })
}

/// Box torch faces mounted on a wall at `mount` (on the wall plane) facing `n`.
fn torch_geometry(mount: Vec3, n: Vec3) -> (Vec<ConvexPolygon3>, BoundingVolume) {
    let t = Vec3::new(n.z, 0.0, -n.x);
    let (y0, y1) = (mount.y - TORCH_HALF.y, mount.y + TORCH_HALF.y);
    let wm = mount - t * TORCH_HALF.z;
    let wp = mount + t * TORCH_HALF.z;
    let fm = wm + n * (2.0 * TORCH_HALF.x);
    let fp = wp + n * (2.0 * TORCH_HALF.x);
    let q = |a: Vec3, b: Vec3, c: Vec3, d: Vec3, dir: Vec3| oriented(ConvexPolygon3::new(vec![a, b, c, d]), dir);
    let faces = vec![
        q(fm.with_y(y0), fp.with_y(y0), fp.with_y(y1), fm.with_y(y1), n),
        q(wm.with_y(y1), wp.with_y(y1), fp.with_y(y1), fm.with_y(y1), Vec3::Y),
        q(wm.with_y(y0), wp.with_y(y0), fp.with_y(y0), fm.with_y(y0), -Vec3::Y),
        q(wm.with_y(y0), fm.with_y(y0), fm.with_y(y1), wm.with_y(y1), -t),
        q(wp.with_y(y0), fp.with_y(y0), fp.with_y(y1), wp.with_y(y1), t),
    ];
    let vol = BoundingVolume::from_obb(Obb {
        center: mount + n * TORCH_HALF.x,
        half_extents: TORCH_HALF,
        axes: [n, Vec3::Y, t],
    });
    (faces, vol)
}

/// Deploy meshes use the minimal fan triangulation; bake meshes start as the
/// same surface and are refined by the baker.
pub fn emit_meshes(elements: &[Element]) -> (Vec<MeshBuffer>, Vec<MeshBuffer>) {
    let mut deploy = Vec::with_capacity(elements.len());
    let mut bake = Vec::with_capacity(elements.len());
    for e in elements {
        let mut m = MeshBuffer::new(e.category, e.dungeon);
        for f in &e.faces {
            m.push_polygon(f);
        }
        deploy.push(m.clone());
        bake.push(m);
    }
    (deploy, bake)
}

/// One light per torch, pushed out from its wall along the wall normal.
pub fn place_torch_lights(world: &World) -> Vec<PointLight> {
    let mut out = Vec::new();
    for e in &world.elements {
        if e.category != Category::Torch {
            continue;
        }
        let n = e.volume.obb.axes[0];
        let mount = e.volume.obb.center - n * TORCH_HALF.x;
        out.push(PointLight {
            id: LightId(out.len() as u32),
            position: mount + n * TORCH_LIGHT_OFFSET + Vec3::Y * (TORCH_HALF.y + 0.1),
            intensity: world.config.style.torch_intensity,
            color: [1.0, 0.72, 0.42],
            dungeon: e.dungeon,
            source: e.id,
        });
    }
    out
}

struct ElementSink {
    elements: Vec<Element>,
}

impl ElementSink {
    fn add(
        &mut self,
        category: Category,
        dungeon: DungeonId,
        connector: Option<ConnectorId>,
        volume: BoundingVolume,
        planes: Vec<Plane>,
        faces: Vec<ConvexPolygon3>,
    ) -> ElementId {
        let id = ElementId(self.elements.len() as u32);
        self.elements.push(Element {
            id,
            category,
            dungeon,
            connector,
            volume,
            planes,
            faces,
            deploy_mesh: MeshId(2 * id.0),
            bake_mesh: MeshId(2 * id.0 + 1),
        });
        id
    }

    fn add_face(&mut self, category: Category, dungeon: DungeonId, connector: Option<ConnectorId>, planes: Vec<Plane>, face: ConvexPolygon3) -> ElementId {
        let vol = slab_volume(&face, SLAB);
        self.add(category, dungeon, connector, vol, planes, vec![face])
    }
}

/// Everything needed to emit one corridor face before it is split.
struct CorridorFace {
    category: Category,
    /// Role of the face's own plane; `None` when `extra` already holds it.
    role: Option<PlaneRole>,
    extra: Vec<Plane>,
    face: ConvexPolygon3,
}

fn corridor_faces(c: &Connector, style: &StyleConfig) -> Vec<CorridorFace> {
    let mut out = Vec::new();
    let l = c.length;
    let side_cat = match c.kind {
        ConnectorKind::Gate => Category::Gate,
        ConnectorKind::Door => Category::Door,
        ConnectorKind::Tunnel => Category::TunnelSection,
        ConnectorKind::Stairs => Category::Wall,
    };
    let guard = match c.kind {
        ConnectorKind::Gate | ConnectorKind::Door => {
            let mut v = vec![c.cross_plane];
            v.extend(c.side_planes.iter().copied());
            v
        }
        ConnectorKind::Tunnel => c.side_planes.clone(),
        ConnectorKind::Stairs => Vec::new(),
    };
    let (floor_cat, ceil_cat) = match c.kind {
        ConnectorKind::Gate | ConnectorKind::Door => (side_cat, side_cat),
        ConnectorKind::Tunnel => (Category::TunnelSection, Category::TunnelSection),
        ConnectorKind::Stairs => (Category::StairStep, Category::Ceiling),
    };
    let q = |a: Vec3, b: Vec3, cc: Vec3, d: Vec3, dir: Vec3| oriented(ConvexPolygon3::new(vec![a, b, cc, d]), dir);

    // floor pieces: (u0, u1, altitude, category, planes)
    let mut pieces: Vec<(f64, f64, f64, Category, Vec<Plane>)> = Vec::new();
    match &c.stairs {
        None => {
            let m = if c.kind == ConnectorKind::Tunnel { style.tunnel_segments.max(1) as usize } else { 1 };
            for k in 0..m {
                let u0 = l * k as f64 / m as f64;
                let u1 = if k + 1 == m { l } else { l * (k + 1) as f64 / m as f64 };
                pieces.push((u0, u1, c.start.y, floor_cat, Vec::new()));
            }
        }
        Some(s) => {
            let riser = |j: u32| s.first_step_at + s.run * j as f64;
            let alt = |k: u32| if k == s.steps + 1 { c.end.y } else { c.start.y + s.rise * k as f64 };
            let base_a = Plane::new(Vec3::Y, c.start.y, PlaneRole::Base);
            let base_b = Plane::new(Vec3::Y, c.end.y, PlaneRole::Base);
            let tr_a = Plane::from_point_normal(c.point(riser(0), 0.0, 0.0), c.axis, PlaneRole::Transition);
            let tr_b = Plane::from_point_normal(c.point(riser(s.steps), 0.0, 0.0), c.axis, PlaneRole::Transition);
            pieces.push((0.0, riser(0), alt(0), Category::StairBase, vec![base_a, tr_a]));
            for j in 0..s.steps {
                let step = Plane::new(Vec3::Y, alt(j + 1), PlaneRole::Step);
                pieces.push((riser(j), riser(j + 1), alt(j + 1), Category::StairStep, vec![step]));
            }
            pieces.push((riser(s.steps), l, alt(s.steps + 1), Category::StairBase, vec![base_b, tr_b]));
            let down = if c.end.y > c.start.y { -c.axis } else { c.axis };
            for j in 0..=s.steps {
                let (lo, hi) = {
                    let (a, b) = (alt(j), alt(j + 1));
                    (a.min(b), a.max(b))
                };
                let u = riser(j);
                let w = c.width_at(u) * 0.5;
                let face = q(c.point(u, -w, lo), c.point(u, w, lo), c.point(u, w, hi), c.point(u, -w, hi), down);
                let step = Plane::new(Vec3::Y, hi, PlaneRole::Step);
                out.push(CorridorFace { category: Category::StairStep, role: Some(PlaneRole::Other), extra: vec![step], face });
            }
        }
    }
    for (u0, u1, y, cat, planes) in pieces {
        let (w0, w1) = (c.width_at(u0) * 0.5, c.width_at(u1) * 0.5);
        let (c0, c1) = (c.ceiling_at(u0), c.ceiling_at(u1));
        let floor = q(c.point(u0, -w0, y), c.point(u1, -w1, y), c.point(u1, w1, y), c.point(u0, w0, y), Vec3::Y);
        let mut fplanes = planes;
        fplanes.extend(guard.iter().copied());
        let role = if c.stairs.is_some() { None } else { Some(PlaneRole::Floor) };
        out.push(CorridorFace { category: cat, role, extra: fplanes, face: floor });
        for sgn in [-1.0, 1.0] {
            let side = q(
                c.point(u0, sgn * w0, y),
                c.point(u1, sgn * w1, y),
                c.point(u1, sgn * w1, c1),
                c.point(u0, sgn * w0, c0),
                c.lateral * -sgn,
            );
            out.push(CorridorFace { category: side_cat, role: Some(PlaneRole::Side), extra: guard.clone(), face: side });
        }
        if c.stairs.is_none() {
            let ceil = q(c.point(u0, -w0, c0), c.point(u1, -w1, c1), c.point(u1, w1, c1), c.point(u0, w0, c0), -Vec3::Y);
            out.push(CorridorFace { category: ceil_cat, role: Some(PlaneRole::Ceiling), extra: guard.clone(), face: ceil });
        }
    }
    if c.stairs.is_some() {
        let (wa, wb) = (c.width_at(0.0) * 0.5, c.width_at(l) * 0.5);
        let (c0, c1) = (c.ceiling_at(0.0), c.ceiling_at(l));
        let ceil = q(c.point(0.0, -wa, c0), c.point(l, -wb, c1), c.point(l, wb, c1), c.point(0.0, wa, c0), -Vec3::Y);
        out.push(CorridorFace { category: ceil_cat, role: Some(PlaneRole::Ceiling), extra: Vec::new(), face: ceil });
    }
    out
}

/// Generates the world and reports placement shortfalls as warnings.
pub fn generate_world_report(config: &WorldConfig) -> Result<Generated, ConfigError> {
    validate(config)?;
    let style = &config.style;
    let seed = config.seed;
    let n = config.dungeons.len();
    let mut warnings = Vec::new();
    let mut specs: Vec<&DungeonSpec> = config.dungeons.iter().collect();
    specs.sort_by_key(|d| d.id);

    let params: Vec<RoomParams> = specs
        .iter()
        .map(|s| {
            let mut r = rng::rng_for(seed, rng::STREAM_DUNGEON, s.id as u64);
            RoomParams {
                apothem: draw(&mut r, s.radius),
                height: draw(&mut r, style.wall_height),
                incline: draw(&mut r, style.ceiling_incline_deg).to_radians(),
                tilt: r.gen_range(0.0..TAU),
                density: if s.columns { draw(&mut r, style.column_density) } else { 0.0 },
                column_radius: draw(&mut r, style.column_radius),
            }
        })
        .collect();
    let passages: Vec<PassageParams> = config
        .connections
        .iter()
        .map(|c| {
            let key = ((c.from.min(c.to) as u64) << 32) | c.from.max(c.to) as u64;
            let mut r = rng::rng_for(seed, rng::STREAM_CONNECTOR, key);
            let w = draw(&mut r, style.opening_width);
            let h = draw(&mut r, style.opening_height);
            let (widths, heights) = if c.kind == ConnectorKind::Tunnel {
                ((w, draw(&mut r, style.opening_width)), (h, draw(&mut r, style.opening_height)))
            } else {
                ((w, w), (h, h))
            };
            let length = draw(&mut r, style.corridor_length).max(min_passage_length(c.kind, style));
            PassageParams { widths, heights, length }
        })
        .collect();

    // centers on the floor
    let mut centers: Vec<Vec3> = vec![Vec3::ZERO; n];
    if specs[0].position.is_some() {
        for (i, s) in specs.iter().enumerate() {
            let (x, z) = s.position.unwrap_or((0.0, 0.0));
            centers[i] = Vec3::new(x, s.floor_altitude, z);
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|i| specs[*i].progression);
        for c in &config.connections {
            let (pa, pb) = (specs[c.from as usize].progression, specs[c.to as usize].progression);
            if pa.abs_diff(pb) != 1 {
                return Err(ConfigError::AutoLayout(c.from, c.to));
            }
        }
        let mut x = 0.0;
        for (k, &i) in order.iter().enumerate() {
            if k > 0 {
                let prev = order[k - 1];
                let ci = config
                    .connections
                    .iter()
                    .position(|c| (c.from as usize == prev && c.to as usize == i) || (c.to as usize == prev && c.from as usize == i))
                    .ok_or(ConfigError::AutoLayout(prev as u32, i as u32))?;
                let (ap, ai) = (params[prev].apothem, params[i].apothem);
                x += ap + passages[ci].length.max(2.0 * MIN_HALF_PASSAGE + (ap - ai).abs()) + ai;
            }
            centers[i] = Vec3::new(x, specs[i].floor_altitude, 0.0);
        }
    }

    // connector frames
    let mut connectors: Vec<Connector> = Vec::new();
    for (j, cs) in config.connections.iter().enumerate() {
        let (a, b) = (cs.from as usize, cs.to as usize);
        let (ca, cb) = (centers[a], centers[b]);
        let d = ca.flat().distance(cb.flat());
        let (aa, ab) = (params[a].apothem, params[b].apothem);
        let min_len = min_passage_length(cs.kind, style);
        if d - aa - ab < min_len - 1e-9 || d * 0.5 - aa < MIN_HALF_PASSAGE - 1e-9 || d * 0.5 - ab < MIN_HALF_PASSAGE - 1e-9 {
            return Err(ConfigError::TooClose(cs.from, cs.to));
        }
        let axis = (cb.flat() - ca.flat()) / d;
        let lateral = Vec3::new(-axis.z, 0.0, axis.x);
        let start = (ca.flat() + axis * aa).with_y(ca.y);
        let end = (cb.flat() - axis * ab).with_y(cb.y);
        let length = end.flat().distance(start.flat());
        let cross_at = d * 0.5 - aa;
        let mid = (ca.flat() + cb.flat()) * 0.5;
        let cross_plane = Plane::from_point_normal(mid, axis, PlaneRole::Cross);
        let p = &passages[j];
        let mut conn = Connector {
            id: ConnectorId(j as u32),
            kind: cs.kind,
            endpoints: (DungeonId(cs.from), DungeonId(cs.to)),
            axis,
            lateral,
            start,
            end,
            length,
            cross_at,
            widths: p.widths,
            heights: p.heights,
            portal: ConvexPolygon3::empty(),
            cross_plane,
            side_planes: Vec::new(),
            stair_planes: Vec::new(),
            stairs: None,
            section_scales: Vec::new(),
            openings: (ConvexPolygon3::empty(), ConvexPolygon3::empty()),
            elements: Vec::new(),
        };
        if cs.kind == ConnectorKind::Stairs {
            let steps = style.stair_steps;
            let run = (length - 2.0 * LANDING) / steps as f64;
            let rise = (end.y - start.y) / (steps + 1) as f64;
            let mut first = LANDING;
            // keep risers off the cross plane so no face lies in it
            let near = |f: f64| (0..=steps).any(|k| (f + run * k as f64 - cross_at).abs() < 0.1 * run.min(1.0));
            if near(first) {
                first = LANDING - 0.3 * run.min(LANDING);
            }
            conn.stairs = Some(Stairs { steps, rise, run, landing: LANDING, first_step_at: first });
        }
        let sides = [-1.0, 1.0].map(|s: f64| {
            let p0 = conn.point(0.0, s * conn.widths.0 * 0.5, 0.0);
            let p1 = conn.point(length, s * conn.widths.1 * 0.5, 0.0);
            let pl = Plane::from_points(p0, p1, p0 + Vec3::Y, PlaneRole::Side);
            if crate::geometry::signed_distance(conn.point(length * 0.5, 0.0, 0.0), &pl) < 0.0 {
                pl.flipped()
            } else {
                pl
            }
        });
        conn.side_planes = sides.to_vec();
        if conn.kind == ConnectorKind::Tunnel {
            let m = style.tunnel_segments.max(1);
            conn.section_scales = (0..m)
                .map(|k| conn.width_at(length * (k as f64 + 0.5) / m as f64) / conn.widths.0)
                .collect();
        }
        if let Some(s) = &conn.stairs {
            let mut planes = vec![
                Plane::new(Vec3::Y, start.y, PlaneRole::Base),
                Plane::new(Vec3::Y, end.y, PlaneRole::Base),
                Plane::from_point_normal(conn.point(s.first_step_at, 0.0, 0.0), axis, PlaneRole::Transition),
                Plane::from_point_normal(conn.point(s.first_step_at + s.run * s.steps as f64, 0.0, 0.0), axis, PlaneRole::Transition),
            ];
            for k in 1..=s.steps {
                planes.push(Plane::new(Vec3::Y, start.y + s.rise * k as f64, PlaneRole::Step));
            }
            conn.stair_planes = planes;
        }
        let u = cross_at;
        let w = conn.width_at(u) * 0.5;
        let (f, c) = (conn.floor_at(u), conn.ceiling_at(u));
        conn.portal = oriented(
            ConvexPolygon3::new(vec![conn.point(u, -w, f), conn.point(u, w, f), conn.point(u, w, c), conn.point(u, -w, c)]),
            axis,
        );
        let open = |u: f64, w: f64, f: f64, h: f64, dir: Vec3| {
            oriented(
                ConvexPolygon3::new(vec![conn.point(u, -w, f), conn.point(u, w, f), conn.point(u, w, f + h), conn.point(u, -w, f + h)]),
                dir,
            )
        };
        conn.openings = (
            open(0.0, conn.widths.0 * 0.5, start.y, conn.heights.0, axis),
            open(length, conn.widths.1 * 0.5, end.y, conn.heights.1, -axis),
        );
        connectors.push(conn);
    }

    // footprints and planes
    let mut dungeons: Vec<Dungeon> = Vec::with_capacity(n);
    let mut wall_conns: Vec<Vec<(Vec3, Option<usize>)>> = Vec::with_capacity(n);
    for (i, s) in specs.iter().enumerate() {
        let c = centers[i];
        let p = &params[i];
        let conns: Vec<(Vec3, usize)> = connectors
            .iter()
            .enumerate()
            .filter_map(|(j, k)| {
                if k.endpoints.0.index() == i {
                    Some((k.axis, j))
                } else if k.endpoints.1.index() == i {
                    Some((-k.axis, j))
                } else {
                    None
                }
            })
            .collect();
        let mut r = rng::rng_for(seed, rng::STREAM_DUNGEON, 0x1000 + s.id as u64);
        let dirs = wall_directions(&conns, s.side_count, &mut r).ok_or(ConfigError::Angles(s.id, s.side_count))?;
        let m = dirs.len();
        let a = p.apothem;
        let verts: Vec<Vec3> = (0..m).map(|k| corner(c, a, dirs[k].0, dirs[(k + 1) % m].0)).collect();
        let footprint = oriented(ConvexPolygon3::new(verts.clone()), Vec3::Y);
        let walls: Vec<Plane> = dirs
            .iter()
            .map(|(u, _)| Plane::from_point_normal(c.flat() + *u * a, -*u, PlaneRole::Wall))
            .collect();
        // wall k runs from corner k-1 to corner k; check openings fit
        for (k, (u, conn)) in dirs.iter().enumerate() {
            if let Some(j) = conn {
                let k_prev = (k + m - 1) % m;
                let t = c.flat() + *u * a;
                let half = [verts[k_prev], verts[k]].map(|v| v.flat().distance(t));
                let kc = &connectors[*j];
                let w = if kc.endpoints.0.index() == i { kc.widths.0 } else { kc.widths.1 };
                if half.iter().any(|h| *h < w * 0.5 + OPENING_MARGIN) {
                    let other = kc.other(DungeonId(s.id)).map(|d| d.0).unwrap_or(s.id);
                    return Err(ConfigError::OpeningFit(s.id, other));
                }
            }
        }
        // ceiling tilt, clamped to keep the minimum interior height
        let tilt_dir = Vec3::from_yaw(p.tilt);
        let proj = verts.iter().map(|v| (*v - c).dot(tilt_dir)).fold(0.0f64, f64::max);
        let mut t = math::tan(p.incline);
        let min_h = min_interior_height(style);
        if proj > 0.0 && p.height - t * proj < min_h {
            t = ((p.height - min_h) / proj).max(0.0);
        }
        let grad = Vec3::new(t * tilt_dir.x, 1.0, t * tilt_dir.z);
        let cn = -grad.normalize_or_zero();
        let ceiling = Plane::from_point_normal(c.with_y(c.y + p.height), cn, PlaneRole::Ceiling);
        dungeons.push(Dungeon {
            id: DungeonId(s.id),
            name: s.name.clone(),
            progression: s.progression,
            center: c,
            apothem: a,
            footprint,
            floor: Plane::new(Vec3::Y, c.y, PlaneRole::Floor),
            ceiling,
            walls,
            elements: Vec::new(),
            connectors: conns.iter().map(|(_, j)| ConnectorId(*j as u32)).collect(),
            height_map: HeightMap { origin: (0.0, 0.0), cell: style.voxel_size, nx: 0, nz: 0, heights: Vec::new() },
        });
        wall_conns.push(dirs);
    }
    for i in 0..n {
        for j in i + 1..n {
            if footprints_overlap(&dungeons[i], &dungeons[j]) {
                return Err(ConfigError::Overlap(i as u32, j as u32));
            }
        }
    }

    // elements
    let mut sink = ElementSink { elements: Vec::new() };
    for i in 0..n {
        let dg = &dungeons[i];
        let did = dg.id;
        let f = dg.floor_altitude();
        let c = dg.center;
        let a = dg.apothem;
        let m = wall_conns[i].len();
        let verts: Vec<Vec3> = (0..m).map(|k| corner(c, a, wall_conns[i][k].0, wall_conns[i][(k + 1) % m].0)).collect();
        let ceil_y = |p: Vec3| dg.ceiling_at(p.x, p.z);
        let up = |p: Vec3| p.with_y(ceil_y(p));
        let at = |p: Vec3, y: f64| p.with_y(y);

        sink.add_face(Category::Floor, did, None, vec![dg.floor], dg.footprint.clone());
        let ceil_poly = oriented(ConvexPolygon3::new(dg.footprint.vertices.iter().map(|v| up(*v)).collect()), -Vec3::Y);
        sink.add_face(Category::Ceiling, did, None, vec![dg.ceiling], ceil_poly);

        let mut keep_clear = Vec::new();
        let mut plain_walls = Vec::new();
        for k in 0..m {
            let (u, conn) = wall_conns[i][k];
            let plane = dg.walls[k];
            let inward = -u;
            let (va, vb) = (verts[(k + m - 1) % m], verts[k]);
            let quad = |p: Vec3, q: Vec3, y0: f64, top: &dyn Fn(Vec3) -> f64| {
                oriented(ConvexPolygon3::new(vec![at(p, y0), at(q, y0), at(q, top(q)), at(p, top(p))]), inward)
            };
            match conn {
                None => {
                    sink.add_face(Category::Wall, did, None, vec![plane], quad(va, vb, f, &ceil_y));
                    plain_walls.push(k);
                }
                Some(j) => {
                    let kc = &connectors[j];
                    let (t, w, h) = if kc.endpoints.0 == did {
                        (0.0, kc.widths.0 * 0.5, kc.heights.0)
                    } else {
                        (kc.length, kc.widths.1 * 0.5, kc.heights.1)
                    };
                    keep_clear.push(kc.point(t, 0.0, f));
                    let l1 = kc.point(t, -w, f);
                    let l2 = kc.point(t, w, f);
                    let (near1, near2) = if (va - l1).dot(kc.lateral) < 0.0 { (va, vb) } else { (vb, va) };
                    sink.add_face(Category::Wall, did, None, vec![plane], quad(near1, l1, f, &ceil_y));
                    sink.add_face(Category::Wall, did, None, vec![plane], quad(l2, near2, f, &ceil_y));
                    sink.add_face(Category::Wall, did, None, vec![plane], quad(l1, l2, f + h, &ceil_y));
                }
            }
        }

        let mut r = rng::rng_for(seed, rng::STREAM_COLUMNS, did.0 as u64);
        let placed = place_column_formations(dg, &keep_clear, params[i].density, params[i].column_radius, style, &mut r);
        if placed.columns.len() < placed.requested {
            warnings.push(format!(
                "dungeon {}: placed {} of {} requested columns",
                did.0,
                placed.columns.len(),
                placed.requested
            ));
        }
        for col in &placed.columns {
            let faces = column_faces(dg, col);
            let planes = faces.iter().map(|p| p.plane(PlaneRole::Other)).collect();
            sink.add(Category::Column, did, None, column_volume(dg, col), planes, faces);
        }

        if specs[i].torches {
            let mut r = rng::rng_for(seed, rng::STREAM_TORCHES, did.0 as u64);
            let mut walls = plain_walls;
            for k in (1..walls.len()).rev() {
                let s = r.gen_range(0..=k);
                walls.swap(k, s);
            }
            walls.truncate(style.torches_per_dungeon as usize);
            walls.sort_unstable();
            for k in walls {
                let u = wall_conns[i][k].0;
                let mount = (c.flat() + u * a).with_y(f + TORCH_MOUNT);
                let (faces, vol) = torch_geometry(mount, -u);
                let front = faces[0].plane(PlaneRole::Other);
                sink.add(Category::Torch, did, None, vol, vec![dg.walls[k], front], faces);
            }
        }
    }
    for conn in connectors.iter_mut() {
        let (da, db) = conn.endpoints;
        let a_side = conn.cross_plane.flipped();
        for cf in corridor_faces(conn, style) {
            let mut planes = Vec::new();
            if let Some(role) = cf.role {
                planes.push(cf.face.plane(role));
            }
            planes.extend(cf.extra.iter().copied());
            for (side, dung) in [(&a_side, da), (&conn.cross_plane, db)] {
                let part = clip_polygon(&cf.face, side);
                if part.is_empty() {
                    continue;
                }
                let id = sink.add_face(cf.category, dung, Some(conn.id), planes.clone(), part);
                conn.elements.push(id);
            }
        }
    }
    let elements = sink.elements;
    for e in &elements {
        dungeons[e.dungeon.index()].elements.push(e.id);
    }
    let (deploy, bake) = emit_meshes(&elements);
    let mut meshes = Vec::with_capacity(2 * elements.len());
    for (d, b) in deploy.into_iter().zip(bake) {
        meshes.push(d);
        meshes.push(b);
    }
    let mut world = World {
        seed,
        config: config.clone(),
        dungeons,
        connectors,
        elements,
        lights: Vec::new(),
        meshes,
        singularity_tables: Vec::new(),
    };
    world.lights = place_torch_lights(&world);
    for i in 0..n {
        let hm = build_height_map(&world, DungeonId(i as u32), style.voxel_size);
        world.dungeons[i].height_map = hm;
    }
    world.singularity_tables = build_singularity_tables(&world);
    Ok(Generated { world, warnings })
}

/// Separating-axis test between two footprints using their wall planes.
fn footprints_overlap(a: &Dungeon, b: &Dungeon) -> bool {
    let separated = |p: &Dungeon, q: &Dungeon| {
        p.walls.iter().any(|w| q.footprint.vertices.iter().all(|v| crate::geometry::signed_distance(*v, w) <= 1e-9))
    };
    !(separated(a, b) || separated(b, a))
}

/// Floor-support altitude under `(x, z)` within a dungeon's region.
pub fn support_altitude(world: &World, d: DungeonId, x: f64, z: f64) -> Option<f64> {
    let dg = world.dungeon(d)?;
    if dg.footprint_contains_xz(x, z, 0.0) {
        return Some(dg.floor_altitude());
    }
    for cid in &dg.connectors {
        let c = world.connector(*cid);
        let (u, v) = c.local_uv(Vec3::new(x, 0.0, z));
        if (0.0..=c.length).contains(&u) && v.abs() <= c.width_at(u) * 0.5 {
            return Some(c.floor_at(u));
        }
    }
    None
}

/// Ceiling altitude over `(x, z)` within a dungeon's region.
pub fn headroom_ceiling(world: &World, d: DungeonId, x: f64, z: f64) -> Option<f64> {
    let dg = world.dungeon(d)?;
    if dg.footprint_contains_xz(x, z, 0.0) {
        return Some(dg.ceiling_at(x, z));
    }
    for cid in &dg.connectors {
        let c = world.connector(*cid);
        let (u, v) = c.local_uv(Vec3::new(x, 0.0, z));
        if (0.0..=c.length).contains(&u) && v.abs() <= c.width_at(u) * 0.5 {
            return Some(c.ceiling_at(u));
        }
    }
    None
}

pub fn build_height_map(world: &World, d: DungeonId, cell: f64) -> HeightMap {
    let (origin, nx, nz) = lattice(world.region_bounds_xz(d), cell);
    let mut heights = Vec::with_capacity((nx * nz) as usize);
    for iz in 0..nz {
        for ix in 0..nx {
            let x = origin.0 + (ix as f64 + 0.5) * cell;
            let z = origin.1 + (iz as f64 + 0.5) * cell;
            heights.push(support_altitude(world, d, x, z));
        }
    }
    HeightMap { origin, cell, nx, nz, heights }
}

pub const HEADING_BUCKETS: u32 = 16;
/// Obstacles closer than this along a heading forbid it.
pub const PROBE_FORBID: f64 = 1.0;
/// Obstacles closer than this along a heading force a turn.
pub const PROBE_CONSTRAIN: f64 = 2.5;

/// Obstacle meshes consulted by heading probes in dungeon `d`: its own and
/// its neighbours' walls, columns, torches and passage sides.
pub fn probe_meshes(world: &World, d: DungeonId) -> Vec<(usize, &MeshBuffer)> {
    let dg = &world.dungeons[d.index()];
    let mut near: BTreeSet<DungeonId> = BTreeSet::new();
    near.insert(d);
    for c in &dg.connectors {
        if let Some(o) = world.connector(*c).other(d) {
            near.insert(o);
        }
    }
    world
        .elements
        .iter()
        .filter(|e| near.contains(&e.dungeon) && e.category.is_obstacle())
        .map(|e| (e.id.index(), &world.meshes[e.bake_mesh.index()]))
        .collect()
}

/// Heading classification from three horizontal probe rays.
pub fn classify_heading(
    cast: &dyn Fn(Vec3, Vec3, f64) -> Option<f64>,
    p: Vec3,
    heading: f64,
) -> HeadingConstraint {
    let ahead = cast(p, Vec3::from_yaw(heading), PROBE_CONSTRAIN).unwrap_or(f64::INFINITY);
    if ahead < PROBE_FORBID {
        return HeadingConstraint::Forbidden;
    }
    if ahead >= PROBE_CONSTRAIN {
        return HeadingConstraint::Free;
    }
    // left of a heading is toward decreasing yaw with y up
    let left = cast(p, Vec3::from_yaw(heading - PI / 4.0), PROBE_CONSTRAIN).unwrap_or(f64::INFINITY);
    let right = cast(p, Vec3::from_yaw(heading + PI / 4.0), PROBE_CONSTRAIN).unwrap_or(f64::INFINITY);
    if left >= right {
        HeadingConstraint::ConstrainedLeft
    } else {
        HeadingConstraint::ConstrainedRight
    }
}

pub fn build_singularity_tables(world: &World) -> Vec<SingularityTable> {
    let style = &world.config.style;
    world
        .dungeons
        .iter()
        .map(|dg| {
            let grid = crate::voxel::quantize_dungeon(world, dg.id, style.voxel_size, style.grid_layers as usize)
                .unwrap_or_else(|_| crate::voxel::LayeredGrid::empty(dg.id, style.voxel_size));
            singularity_table(world, &grid)
        })
        .collect()
}

/// Table over the middle layer of `grid`.
pub fn singularity_table(world: &World, grid: &crate::voxel::LayeredGrid) -> SingularityTable {
    let d = grid.dungeon;
    let meshes = probe_meshes(world, d);
    let scene = crate::geometry::RayScene::new(meshes.iter().copied());
    let cast = |o: Vec3, dir: Vec3, t: f64| scene.cast(o, dir, t).map(|h| h.t);
    let layer = grid.layer_altitudes.len() / 2;
    let altitude = grid.layer_altitudes.get(layer).copied().unwrap_or(0.0);
    let b = HEADING_BUCKETS as usize;
    let mut entries = Vec::with_capacity(grid.nx as usize * grid.nz as usize * b);
    let mut no_fly = Vec::with_capacity(grid.nx as usize * grid.nz as usize);
    let clearance = world.config.style.flight_clearance;
    for iz in 0..grid.nz {
        for ix in 0..grid.nx {
            let cell = crate::voxel::Cell { layer: layer as u32, ix, iz };
            let p = grid.world_of(cell);
            let solid = grid.layer_altitudes.is_empty() || grid.is_solid(cell);
            for k in 0..b {
                entries.push(if solid {
                    HeadingConstraint::Forbidden
                } else {
                    classify_heading(&cast, p, k as f64 * TAU / b as f64)
                });
            }
            let room = match (support_altitude(world, d, p.x, p.z), headroom_ceiling(world, d, p.x, p.z)) {
                (Some(f), Some(c)) => c - f,
                _ => 0.0,
            };
            no_fly.push(room < clearance);
        }
    }
    SingularityTable {
        dungeon: d,
        origin: (grid.origin.x, grid.origin.z),
        cell: grid.voxel_size,
        nx: grid.nx,
        nz: grid.nz,
        buckets: HEADING_BUCKETS,
        altitude,
        entries,
        no_fly,
    }
}
