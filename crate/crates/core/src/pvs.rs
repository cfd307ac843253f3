//! Dynamic potentially visible sets by recursive portal casting.
//!
//! Each dungeon region (room prism plus its halves of the incident passages)
//! is sealed except for the portal polygons on the passages' cross planes,
//! so every sight line leaving a region crosses a portal. Casting a view
//! volume through portals therefore never loses a visible element; the
//! volume tests are conservative and may keep a few hidden ones.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{clip_polygon, signed_distance, BoundingVolume, ConvexPolygon3, Plane, PlaneRole};
use crate::math::{self, Vec3};
use crate::metastore::MetaStore;
use crate::world::{ConnectorId, ConnectorKind, DungeonId, ElementId, EntityId, World};

const APEX_TOL: f64 = 1e-6;
const CULL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PvsConfig {
    pub depth_cap: u32,
    pub chain_bound: u32,
    pub near: f64,
    /// Doors open less than this fraction block their portal.
    pub door_threshold: f64,
    pub cache_capacity: usize,
    pub cache_cell: f64,
    /// Serve hits only for the exact pose they were computed at, which keeps
    /// cached results sound; otherwise any pose in the key's bucket reuses
    /// the entry.
    pub cache_exact: bool,
    pub heading_buckets: u32,
}

impl Default for PvsConfig {
    fn default() -> Self {
        PvsConfig {
            depth_cap: 8,
            chain_bound: 64,
            near: 0.05,
            door_threshold: 0.05,
            cache_capacity: 256,
            cache_cell: 0.4,
            cache_exact: true,
            heading_buckets: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewVolume {
    pub apex: Vec3,
    /// Inward-facing planes through the apex.
    pub lateral: Vec<Plane>,
    pub near: Plane,
}

impl ViewVolume {
    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        signed_distance(p, &self.near) >= -tol && self.lateral.iter().all(|pl| signed_distance(p, pl) >= -tol)
    }

    fn planes(&self) -> impl Iterator<Item = &Plane> {
        core::iter::once(&self.near).chain(self.lateral.iter())
    }

    /// Planes used to clip portals. A camera near plane is moved back to the
    /// apex so that portals closer than it are still traversed.
    fn portal_planes(&self) -> impl Iterator<Item = Plane> + '_ {
        let near = if self.near.role == PlaneRole::Cross {
            self.near
        } else {
            Plane::from_point_normal(self.apex, self.near.normal, self.near.role)
        };
        core::iter::once(near).chain(self.lateral.iter().copied())
    }

    /// Conservative overlap test: false only when the volume is entirely
    /// behind one of the planes.
    pub fn may_intersect(&self, v: &BoundingVolume) -> bool {
        self.planes().all(|pl| {
            signed_distance(v.sphere.center, pl) >= -v.sphere.radius - CULL_TOL
                && signed_distance(v.obb.center, pl) >= -v.obb.projection_radius(pl.normal) - CULL_TOL
        })
    }

    pub fn may_intersect_sphere(&self, c: Vec3, r: f64) -> bool {
        self.planes().all(|pl| signed_distance(c, pl) >= -r - CULL_TOL)
    }
}

/// Camera pose for visibility queries. `fov` is the vertical field of view.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewPose {
    pub position: Vec3,
    pub look: Vec3,
    pub fov: f64,
    pub aspect: f64,
}

/// Right and up vectors of a view basis with world y up.
pub fn view_basis(look: Vec3) -> (Vec3, Vec3) {
    let mut right = look.cross(Vec3::Y);
    if right.length() < 1e-9 {
        right = look.any_orthonormal();
    }
    let right = right.normalize_or_zero();
    (right, right.cross(look).normalize_or_zero())
}

/// Horizontal half-angle for a vertical fov and aspect ratio.
pub fn half_angles(fov: f64, aspect: f64) -> (f64, f64) {
    let v = fov * 0.5;
    (math::atan2(aspect * math::tan(v), 1.0), v)
}

pub fn initial_frustum(position: Vec3, look: Vec3, fov: f64, aspect: f64, near: f64) -> ViewVolume {
    let look = look.normalize_or_zero();
    let (right, up) = view_basis(look);
    let (h, v) = half_angles(fov, aspect);
    let (ch, sh, cv, sv) = (math::cos(h), math::sin(h), math::cos(v), math::sin(v));
    let lateral = [right * -ch + look * sh, right * ch + look * sh, up * -cv + look * sv, up * cv + look * sv]
        .into_iter()
        .map(|n| Plane::from_point_normal(position, n.normalize_or_zero(), PlaneRole::Other))
        .collect();
    let near = Plane::from_point_normal(position + look * near, look, PlaneRole::Other);
    ViewVolume { apex: position, lateral, near }
}

/// Narrows `vv` to the part that passes through `portal`.
pub fn cast_portal(vv: &ViewVolume, portal: &ConvexPolygon3) -> Option<ViewVolume> {
    if portal.is_empty() {
        return None;
    }
    let plane = portal.plane(PlaneRole::Cross);
    if portal.distance_to_point(vv.apex) < APEX_TOL {
        let n = if plane.normal.dot(vv.near.normal) >= 0.0 { plane.normal } else { -plane.normal };
        let near = Plane::from_point_normal(vv.apex, n, PlaneRole::Cross);
        return Some(ViewVolume { apex: vv.apex, lateral: vv.lateral.clone(), near });
    }
    let mut poly = portal.clone();
    for pl in vv.portal_planes() {
        poly = clip_polygon(&poly, &pl);
        if poly.is_empty() {
            return None;
        }
    }
    let near = if signed_distance(vv.apex, &plane) > 0.0 { plane.flipped() } else { plane };
    let inside = poly.centroid();
    let v = &poly.vertices;
    let mut lateral = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        if a.distance(b) < 1e-12 {
            continue;
        }
        let n = (a - vv.apex).cross(b - vv.apex);
        if n.length() < 1e-12 {
            // Portal seen edge-on.
            return None;
        }
        let pl = Plane::from_point_normal(vv.apex, n.normalize_or_zero(), PlaneRole::Other);
        lateral.push(if signed_distance(inside, &pl) < 0.0 { pl.flipped() } else { pl });
    }
    if lateral.len() < 3 {
        return None;
    }
    Some(ViewVolume { apex: vv.apex, lateral, near: Plane { role: PlaneRole::Cross, ..near } })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub dungeon: DungeonId,
    pub connector: ConnectorId,
    pub portal: ConvexPolygon3,
    pub depth: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VisibleSet {
    /// Sorted, unique.
    pub statics: Vec<ElementId>,
    /// Sorted, unique.
    pub dynamics: Vec<EntityId>,
    pub chain: Vec<ChainRecord>,
    /// Volumes that reached each dungeon, kept for re-testing moving entities.
    #[serde(skip)]
    pub volumes: Vec<(DungeonId, ViewVolume)>,
    /// Pose the set was computed for.
    #[serde(skip)]
    pub pose: Option<ViewPose>,
}

impl VisibleSet {
    /// Re-tests moving entities against the stored volumes.
    pub fn refresh_dynamics(&mut self, store: &MetaStore, dynamics: &[DynamicEntity]) {
        let mut ids: Vec<EntityId> = dynamics
            .iter()
            .filter(|e| {
                let Some(d) = store.tag_of(e.id) else { return false };
                self.volumes.iter().any(|(vd, vv)| *vd == d && vv.may_intersect_sphere(e.center, e.radius))
            })
            .map(|e| e.id)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        self.dynamics = ids;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PvsError {
    #[error("camera is outside every dungeon")]
    Unresolved,
}

/// Open fractions of door passages; doors not listed are fully open.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DoorStates(pub BTreeMap<ConnectorId, f64>);

impl DoorStates {
    pub fn open_fraction(&self, c: ConnectorId) -> f64 {
        self.0.get(&c).copied().unwrap_or(1.0)
    }

    pub fn blocks(&self, world: &World, c: ConnectorId, threshold: f64) -> bool {
        world.connector(c).kind == ConnectorKind::Door && self.open_fraction(c) < threshold
    }

    /// Hash of the open/closed pattern, which is all visibility depends on.
    pub fn state_hash(&self, world: &World, threshold: f64) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for c in &world.connectors {
            if c.kind != ConnectorKind::Door {
                continue;
            }
            let closed = self.blocks(world, c.id, threshold) as u64;
            for b in [c.id.0 as u64, closed] {
                h ^= b;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// A moving entity with a bounding sphere, tagged in the store.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicEntity {
    pub id: EntityId,
    pub center: Vec3,
    pub radius: f64,
}

struct Walk<'a> {
    world: &'a World,
    store: &'a MetaStore<'a>,
    doors: &'a DoorStates,
    dynamics: &'a [DynamicEntity],
    cfg: &'a PvsConfig,
    statics: BTreeSet<ElementId>,
    dyns: BTreeSet<EntityId>,
    chain: Vec<ChainRecord>,
    path: Vec<(DungeonId, ConnectorId)>,
    volumes: Vec<(DungeonId, ViewVolume)>,
}

impl Walk<'_> {
    fn collect(&mut self, d: DungeonId, vv: &ViewVolume) {
        self.volumes.push((d, vv.clone()));
        for &e in &self.world.dungeons[d.index()].elements {
            if !self.statics.contains(&e) && vv.may_intersect(&self.world.element(e).volume) {
                self.statics.insert(e);
            }
        }
        for ent in self.dynamics {
            if self.store.tag_of(ent.id) == Some(d) && vv.may_intersect_sphere(ent.center, ent.radius) {
                self.dyns.insert(ent.id);
            }
        }
    }

    fn recurse(&mut self, d: DungeonId, vv: &ViewVolume, depth: u32, came: Option<ConnectorId>) {
        self.collect(d, vv);
        if depth >= self.cfg.depth_cap {
            return;
        }
        for &cid in &self.world.dungeons[d.index()].connectors {
            if self.chain.len() >= self.cfg.chain_bound as usize {
                return;
            }
            if Some(cid) == came || self.path.contains(&(d, cid)) || self.doors.blocks(self.world, cid, self.cfg.door_threshold) {
                continue;
            }
            let c = self.world.connector(cid);
            let Some(next) = c.other(d) else { continue };
            let Some(child) = cast_portal(vv, &c.portal) else { continue };
            let clipped = clip_to(vv, &c.portal);
            self.chain.push(ChainRecord { dungeon: next, connector: cid, portal: clipped, depth: depth + 1 });
            self.path.push((d, cid));
            self.recurse(next, &child, depth + 1, Some(cid));
            self.path.pop();
        }
    }
}

fn clip_to(vv: &ViewVolume, portal: &ConvexPolygon3) -> ConvexPolygon3 {
    if portal.distance_to_point(vv.apex) < APEX_TOL {
        return portal.clone();
    }
    vv.portal_planes().fold(portal.clone(), |p, pl| if p.is_empty() { p } else { clip_polygon(&p, &pl) })
}

pub fn compute_visible_set(
    pose: &ViewPose,
    world: &World,
    store: &MetaStore,
    doors: &DoorStates,
    dynamics: &[DynamicEntity],
    cfg: &PvsConfig,
) -> Result<VisibleSet, PvsError> {
    let d = store.dungeon_of_point(pose.position).ok_or(PvsError::Unresolved)?;
    let vv = initial_frustum(pose.position, pose.look, pose.fov, pose.aspect, cfg.near);
    let mut walk = Walk {
        world,
        store,
        doors,
        dynamics,
        cfg,
        statics: BTreeSet::new(),
        dyns: BTreeSet::new(),
        chain: Vec::new(),
        path: Vec::new(),
        volumes: Vec::new(),
    };
    walk.recurse(d, &vv, 0, None);
    Ok(VisibleSet {
        statics: walk.statics.into_iter().collect(),
        dynamics: walk.dyns.into_iter().collect(),
        chain: walk.chain,
        volumes: walk.volumes,
        pose: Some(*pose),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PvsKey {
    pub cell: (i64, i64, i64),
    pub heading: u32,
    pub doors: u64,
}

impl PvsKey {
    pub fn new(pose: &ViewPose, door_hash: u64, cfg: &PvsConfig) -> Self {
        let q = |v: f64| math::floor(v / cfg.cache_cell) as i64;
        let n = cfg.heading_buckets.max(1);
        let yaw = math::wrap_angle(pose.look.yaw()) + math::PI;
        let heading = ((yaw / (2.0 * math::PI) * n as f64) as u32).min(n - 1);
        PvsKey { cell: (q(pose.position.x), q(pose.position.y), q(pose.position.z)), heading, doors: door_hash }
    }
}

/// Least-recently-used map.
#[derive(Clone, Debug)]
pub struct LruCache<K: Ord + Clone, V> {
    capacity: usize,
    clock: u64,
    entries: BTreeMap<K, (V, u64)>,
    order: BTreeMap<u64, K>,
}

impl<K: Ord + Clone, V: Clone> LruCache<K, V> {
    pub fn new(capacity: usize) -> Self {
        LruCache { capacity, clock: 0, entries: BTreeMap::new(), order: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn touch(&mut self, k: &K) {
        self.clock += 1;
        if let Some((_, stamp)) = self.entries.get_mut(k) {
            self.order.remove(stamp);
            *stamp = self.clock;
            self.order.insert(self.clock, k.clone());
        }
    }

    pub fn lookup(&mut self, k: &K) -> Option<V> {
        self.touch(k);
        self.entries.get(k).map(|(v, _)| v.clone())
    }

    pub fn store(&mut self, k: K, v: V) {
        if self.capacity == 0 {
            return;
        }
        self.clock += 1;
        if let Some((_, old)) = self.entries.insert(k.clone(), (v, self.clock)) {
            self.order.remove(&old);
        }
        self.order.insert(self.clock, k);
        while self.entries.len() > self.capacity {
            let (_, oldest) = self.order.pop_first().expect("order tracks entries");
            self.entries.remove(&oldest);
        }
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&K) -> bool) {
        let drop: Vec<K> = self.entries.keys().filter(|k| !keep(k)).cloned().collect();
        for k in drop {
            if let Some((_, stamp)) = self.entries.remove(&k) {
                self.order.remove(&stamp);
            }
        }
    }

    /// Keys from least to most recently used.
    pub fn keys_by_recency(&self) -> Vec<K> {
        self.order.values().cloned().collect()
    }
}

pub type PvsCache = LruCache<PvsKey, VisibleSet>;

impl PvsCache {
    /// Drops entries computed under a different door pattern.
    pub fn door_event(&mut self, door_hash: u64) {
        self.retain(|k| k.doors == door_hash);
    }
}

/// Cached query. The static part and chain come from the cache on a hit;
/// dynamic entities are always re-tested since they move every tick.
pub fn visible_set_cached(
    pose: &ViewPose,
    world: &World,
    store: &MetaStore,
    doors: &DoorStates,
    dynamics: &[DynamicEntity],
    cfg: &PvsConfig,
    cache: &mut PvsCache,
) -> Result<(VisibleSet, bool), PvsError> {
    let key = PvsKey::new(pose, doors.state_hash(world, cfg.door_threshold), cfg);
    if let Some(mut hit) = cache.lookup(&key) {
        if !cfg.cache_exact || hit.pose.as_ref() == Some(pose) {
            hit.refresh_dynamics(store, dynamics);
            return Ok((hit, true));
        }
    }
    let set = compute_visible_set(pose, world, store, doors, dynamics, cfg)?;
    cache.store(key, set.clone());
    Ok((set, false))
}
