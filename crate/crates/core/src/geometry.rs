//! Geometric primitives and predicates shared by every other module.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{sqrt, Vec3};
use crate::world::DungeonId;

/// Coplanarity / containment tolerance in world units.
pub const EPS_WORLD: f64 = 1e-6;
/// Unit-length tolerance.
pub const EPS_UNIT: f64 = 1e-9;
/// Polygons with less area than this after clipping are treated as empty.
pub const EPS_AREA: f64 = 1e-10;
/// Minimum ray parameter accepted as a hit.
pub const RAY_T_MIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneRole {
    Wall,
    Floor,
    Ceiling,
    Step,
    Base,
    Transition,
    Cross,
    Side,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Wall,
    Floor,
    Ceiling,
    Column,
    Gate,
    Door,
    Torch,
    StairStep,
    StairBase,
    TunnelSection,
}

impl Category {
    pub const ALL: [Category; 10] = [
        Category::Wall,
        Category::Floor,
        Category::Ceiling,
        Category::Column,
        Category::Gate,
        Category::Door,
        Category::Torch,
        Category::StairStep,
        Category::StairBase,
        Category::TunnelSection,
    ];

    /// Vertical obstacles that bound horizontal motion.
    pub fn is_obstacle(self) -> bool {
        matches!(
            self,
            Category::Wall
                | Category::Column
                | Category::Gate
                | Category::Door
                | Category::Torch
                | Category::TunnelSection
        )
    }
}

/// Oriented plane: points `p` with `normal · p = offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
    pub role: PlaneRole,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64, role: PlaneRole) -> Self {
        Plane { normal, offset, role }
    }

    /// Plane through `point` with the given (not necessarily unit) normal.
    pub fn from_point_normal(point: Vec3, normal: Vec3, role: PlaneRole) -> Self {
        let n = normal.normalize_or_zero();
        Plane { normal: n, offset: n.dot(point), role }
    }

    /// Plane through three points, normal following the right-hand rule a→b→c.
    pub fn from_points(a: Vec3, b: Vec3, c: Vec3, role: PlaneRole) -> Self {
        Plane::from_point_normal(a, (b - a).cross(c - a), role)
    }

    pub fn flipped(&self) -> Plane {
        Plane { normal: -self.normal, offset: -self.offset, role: self.role }
    }

    pub fn is_valid(&self) -> bool {
        (self.normal.length() - 1.0).abs() <= EPS_UNIT && self.offset.is_finite()
    }

    pub fn project(&self, p: Vec3) -> Vec3 {
        p - self.normal * signed_distance(p, self)
    }
}

/// Signed distance of `p` from `pl`; positive on the side the normal points to.
#[inline]
pub fn signed_distance(p: Vec3, pl: &Plane) -> f64 {
    pl.normal.dot(p) - pl.offset
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec3,
    pub half_extents: Vec3,
    pub axes: [Vec3; 3],
}

impl Obb {
    pub fn axis_aligned(min: Vec3, max: Vec3) -> Obb {
        Obb {
            center: (min + max) * 0.5,
            half_extents: (max - min) * 0.5,
            axes: [Vec3::X, Vec3::Y, Vec3::Z],
        }
    }

    /// Local coordinates of `p` along the box axes.
    pub fn local(&self, p: Vec3) -> Vec3 {
        let d = p - self.center;
        Vec3::new(d.dot(self.axes[0]), d.dot(self.axes[1]), d.dot(self.axes[2]))
    }

    pub fn contains_point(&self, p: Vec3, tol: f64) -> bool {
        let l = self.local(p);
        l.x.abs() <= self.half_extents.x + tol
            && l.y.abs() <= self.half_extents.y + tol
            && l.z.abs() <= self.half_extents.z + tol
    }

    /// Strict interior membership (points on the faces do not count).
    pub fn contains_point_strict(&self, p: Vec3) -> bool {
        let l = self.local(p);
        l.x.abs() < self.half_extents.x
            && l.y.abs() < self.half_extents.y
            && l.z.abs() < self.half_extents.z
    }

    pub fn closest_point(&self, p: Vec3) -> Vec3 {
        let l = self.local(p);
        let h = self.half_extents;
        self.center
            + self.axes[0] * l.x.clamp(-h.x, h.x)
            + self.axes[1] * l.y.clamp(-h.y, h.y)
            + self.axes[2] * l.z.clamp(-h.z, h.z)
    }

    pub fn distance_to_point(&self, p: Vec3) -> f64 {
        self.closest_point(p).distance(p)
    }

    /// Half-length of the box's projection onto `axis` (unit or not).
    pub fn projection_radius(&self, axis: Vec3) -> f64 {
        self.half_extents.x * self.axes[0].dot(axis).abs()
            + self.half_extents.y * self.axes[1].dot(axis).abs()
            + self.half_extents.z * self.axes[2].dot(axis).abs()
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::ZERO; 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            *c = self.center
                + self.axes[0] * (sx * self.half_extents.x)
                + self.axes[1] * (sy * self.half_extents.y)
                + self.axes[2] * (sz * self.half_extents.z);
        }
        out
    }

    pub fn circumradius(&self) -> f64 {
        self.half_extents.length()
    }

    /// Axis-aligned bounds of the box.
    pub fn aabb(&self) -> (Vec3, Vec3) {
        let r = Vec3::new(
            self.projection_radius(Vec3::X),
            self.projection_radius(Vec3::Y),
            self.projection_radius(Vec3::Z),
        );
        (self.center - r, self.center + r)
    }

    pub fn axes_orthonormal(&self) -> bool {
        let a = &self.axes;
        (0..3).all(|i| (a[i].length() - 1.0).abs() <= EPS_UNIT)
            && a[0].dot(a[1]).abs() <= EPS_UNIT
            && a[0].dot(a[2]).abs() <= EPS_UNIT
            && a[1].dot(a[2]).abs() <= EPS_UNIT
    }
}

/// Separating-axis test between two boxes. Touching boxes count as intersecting.
pub fn obb_intersects_obb(a: &Obb, b: &Obb) -> bool {
    let t = b.center - a.center;
    let mut axes: [Vec3; 15] = [Vec3::ZERO; 15];
    axes[..3].copy_from_slice(&a.axes);
    axes[3..6].copy_from_slice(&b.axes);
    let mut k = 6;
    for i in 0..3 {
        for j in 0..3 {
            axes[k] = a.axes[i].cross(b.axes[j]);
            k += 1;
        }
    }
    for axis in axes.iter() {
        let len2 = axis.length_squared();
        if len2 < 1e-18 {
            continue;
        }
        let dist = t.dot(*axis).abs();
        let ra = a.projection_radius(*axis);
        let rb = b.projection_radius(*axis);
        // Scale-aware slack for cross-product axes of near-parallel edges.
        if dist > ra + rb + 1e-12 * sqrt(len2) {
            return false;
        }
    }
    true
}

/// Sphere + box pair. The region occupied is the box; the sphere bounds it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingVolume {
    pub sphere: Sphere,
    pub obb: Obb,
}

impl BoundingVolume {
    /// Builds a volume around `obb` with the tightest centered sphere.
    pub fn from_obb(obb: Obb) -> Self {
        BoundingVolume {
            sphere: Sphere { center: obb.center, radius: obb.circumradius() },
            obb,
        }
    }

    /// Axis-aligned box volume.
    pub fn from_aabb(min: Vec3, max: Vec3) -> Self {
        BoundingVolume::from_obb(Obb::axis_aligned(min, max))
    }

    pub fn is_valid(&self) -> bool {
        let h = self.obb.half_extents;
        self.sphere.radius > 0.0
            && h.x > 0.0
            && h.y > 0.0
            && h.z > 0.0
            && self.obb.axes_orthonormal()
            && self
                .obb
                .corners()
                .iter()
                .all(|c| c.distance(self.sphere.center) <= self.sphere.radius + EPS_WORLD)
    }

    pub fn contains_point(&self, p: Vec3, tol: f64) -> bool {
        self.obb.contains_point(p, tol)
    }
}

/// Composite overlap test: cheap sphere rejection, then box SAT.
pub fn intersects(a: &BoundingVolume, b: &BoundingVolume) -> bool {
    let rr = a.sphere.radius + b.sphere.radius;
    if (a.sphere.center - b.sphere.center).length_squared() > rr * rr {
        return false;
    }
    obb_intersects_obb(&a.obb, &b.obb)
}

/// True when an open ball of `radius` around `center` overlaps the volume.
/// Exact contact does not count.
pub fn sphere_intersects_volume(center: Vec3, radius: f64, v: &BoundingVolume) -> bool {
    let rr = radius + v.sphere.radius;
    if (center - v.sphere.center).length_squared() >= rr * rr {
        return false;
    }
    v.obb.distance_to_point(center) < radius
}

/// Distance from a point to an axis-aligned box given by its bounds (0 inside).
pub fn point_aabb_distance(p: Vec3, min: Vec3, max: Vec3) -> f64 {
    let dx = (min.x - p.x).max(0.0).max(p.x - max.x);
    let dy = (min.y - p.y).max(0.0).max(p.y - max.y);
    let dz = (min.z - p.z).max(0.0).max(p.z - max.z);
    sqrt(dx * dx + dy * dy + dz * dz)
}

/// Ordered, coplanar, convex polygon. Empty means "closed".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon3 {
    pub vertices: Vec<Vec3>,
}

impl ConvexPolygon3 {
    pub fn new(vertices: Vec<Vec3>) -> Self {
        ConvexPolygon3 { vertices }
    }

    pub fn empty() -> Self {
        ConvexPolygon3 { vertices: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    /// Area vector (Newell); its length is twice the area.
    fn newell(&self) -> Vec3 {
        let mut n = Vec3::ZERO;
        let v = &self.vertices;
        for i in 0..v.len() {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            n += a.cross(b);
        }
        n
    }

    pub fn area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.newell().length() * 0.5
    }

    /// Unit normal following counter-clockwise winding.
    pub fn normal(&self) -> Vec3 {
        self.newell().normalize_or_zero()
    }

    pub fn centroid(&self) -> Vec3 {
        if self.vertices.is_empty() {
            return Vec3::ZERO;
        }
        let mut c = Vec3::ZERO;
        for v in &self.vertices {
            c += *v;
        }
        c / self.vertices.len() as f64
    }

    pub fn plane(&self, role: PlaneRole) -> Plane {
        Plane::from_point_normal(self.centroid(), self.normal(), role)
    }

    pub fn is_coplanar(&self, tol: f64) -> bool {
        if self.is_empty() {
            return true;
        }
        let pl = self.plane(PlaneRole::Other);
        self.vertices.iter().all(|v| signed_distance(*v, &pl).abs() <= tol)
    }

    pub fn is_convex(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let n = self.normal();
        let v = &self.vertices;
        (0..v.len()).all(|i| {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            let c = v[(i + 2) % v.len()];
            (b - a).cross(c - b).dot(n) >= -1e-9
        })
    }

    /// Point-in-polygon for a point assumed to lie on the polygon's plane.
    pub fn contains_coplanar(&self, p: Vec3, tol: f64) -> bool {
        if self.is_empty() {
            return false;
        }
        let n = self.normal();
        let v = &self.vertices;
        (0..v.len()).all(|i| {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            let edge_in = n.cross(b - a).normalize_or_zero();
            (p - a).dot(edge_in) >= -tol
        })
    }

    /// Euclidean distance from `p` to the closed polygon.
    pub fn distance_to_point(&self, p: Vec3) -> f64 {
        if self.is_empty() {
            return f64::INFINITY;
        }
        let n = self.normal();
        let off = (p - self.vertices[0]).dot(n);
        let q = p - n * off;
        if self.contains_coplanar(q, 0.0) {
            return off.abs();
        }
        let v = &self.vertices;
        (0..v.len())
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % v.len()]);
                let ab = b - a;
                let t = ((p - a).dot(ab) / ab.length_squared().max(1e-300)).clamp(0.0, 1.0);
                p.distance(a + ab * t)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Fan triangulation: `n - 2` triangles.
    pub fn fan(&self) -> Vec<[Vec3; 3]> {
        let v = &self.vertices;
        (1..v.len().saturating_sub(1)).map(|i| [v[0], v[i], v[i + 1]]).collect()
    }

    pub fn translated(&self, d: Vec3) -> ConvexPolygon3 {
        ConvexPolygon3::new(self.vertices.iter().map(|v| *v + d).collect())
    }

    pub fn reversed(&self) -> ConvexPolygon3 {
        let mut v = self.vertices.clone();
        v.reverse();
        ConvexPolygon3::new(v)
    }
}

/// Keeps the part of `poly` with `signed_distance >= 0`.
pub fn clip_polygon(poly: &ConvexPolygon3, pl: &Plane) -> ConvexPolygon3 {
    if poly.is_empty() {
        return ConvexPolygon3::empty();
    }
    let v = &poly.vertices;
    let d: Vec<f64> = v.iter().map(|p| signed_distance(*p, pl)).collect();
    if d.iter().all(|&x| x >= 0.0) {
        return poly.clone();
    }
    if d.iter().all(|&x| x < 0.0) {
        return ConvexPolygon3::empty();
    }
    let mut out = Vec::with_capacity(v.len() + 1);
    for i in 0..v.len() {
        let j = (i + 1) % v.len();
        let (a, b) = (v[i], v[j]);
        let (da, db) = (d[i], d[j]);
        if da >= 0.0 {
            out.push(a);
        }
        if (da >= 0.0) != (db >= 0.0) {
            let t = da / (da - db);
            let mut p = a + (b - a) * t;
            // Snap onto the plane so consumers see exact containment.
            let e = signed_distance(p, pl);
            if e < 0.0 {
                p = p - pl.normal * e;
            }
            out.push(p);
        }
    }
    dedup_ring(&mut out);
    let res = ConvexPolygon3::new(out);
    if res.is_empty() || res.area() < EPS_AREA {
        ConvexPolygon3::empty()
    } else {
        res
    }
}

fn dedup_ring(v: &mut Vec<Vec3>) {
    v.dedup_by(|a, b| a.distance(*b) < 1e-12);
    while v.len() > 1 && v[0].distance(v[v.len() - 1]) < 1e-12 {
        v.pop();
    }
}

/// Triangle soup with per-vertex attributes, tagged by category and dungeon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshBuffer {
    pub positions: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub uvs: Vec<[f64; 2]>,
    pub indices: Vec<[u32; 3]>,
    pub category: Category,
    pub dungeon: DungeonId,
}

impl MeshBuffer {
    pub fn new(category: Category, dungeon: DungeonId) -> Self {
        MeshBuffer {
            positions: Vec::new(),
            normals: Vec::new(),
            uvs: Vec::new(),
            indices: Vec::new(),
            category,
            dungeon,
        }
    }

    /// Appends a convex polygon as a triangle fan with flat normals.
    pub fn push_polygon(&mut self, poly: &ConvexPolygon3) {
        if poly.is_empty() {
            return;
        }
        let n = poly.normal();
        let base = self.positions.len() as u32;
        for v in &poly.vertices {
            self.positions.push(*v);
            self.normals.push(n);
            self.uvs.push([0.0, 0.0]);
        }
        for i in 1..poly.vertices.len() as u32 - 1 {
            self.indices.push([base, base + i, base + i + 1]);
        }
    }

    pub fn push_triangle(&mut self, tri: [Vec3; 3], normal: Vec3) {
        let base = self.positions.len() as u32;
        for v in tri {
            self.positions.push(v);
            self.normals.push(normal);
            self.uvs.push([0.0, 0.0]);
        }
        self.indices.push([base, base + 1, base + 2]);
    }

    pub fn triangle(&self, i: usize) -> [Vec3; 3] {
        let [a, b, c] = self.indices[i];
        [self.positions[a as usize], self.positions[b as usize], self.positions[c as usize]]
    }

    pub fn triangle_count(&self) -> usize {
        self.indices.len()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.indices.len()).map(|i| triangle_area(&self.triangle(i))).sum()
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for p in &self.positions {
            lo = lo.min(*p);
            hi = hi.max(*p);
        }
        (lo, hi)
    }

    /// Checks index ranges and rejects degenerate triangles.
    pub fn is_valid(&self) -> bool {
        let n = self.positions.len() as u32;
        self.normals.len() == self.positions.len()
            && self.uvs.len() == self.positions.len()
            && self.indices.iter().all(|t| t.iter().all(|&i| i < n))
            && (0..self.indices.len()).all(|i| triangle_area(&self.triangle(i)) > 1e-12)
    }
}

pub fn triangle_area(t: &[Vec3; 3]) -> f64 {
    (t[1] - t[0]).cross(t[2] - t[0]).length() * 0.5
}

/// Double-sided ray/triangle test. Returns the ray parameter of the hit.
///
/// Barycentric bounds carry a tiny negative slack so rays through a shared
/// edge hit at least one of the adjacent triangles.
pub fn ray_triangle(origin: Vec3, dir: Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    const SLACK: f64 = 1e-9;
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(p) * inv;
    if u < -SLACK || u > 1.0 + SLACK {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < -SLACK || u + v > 1.0 + SLACK {
        return None;
    }
    let t = e2.dot(q) * inv;
    if t > RAY_T_MIN {
        Some(t)
    } else {
        None
    }
}

/// Slab test: parameter interval of the ray inside the box, if any.
pub fn ray_aabb(origin: Vec3, dir: Vec3, min: Vec3, max: Vec3, t_max: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for axis in 0..3 {
        let o = origin.get(axis);
        let d = dir.get(axis);
        let (lo, hi) = (min.get(axis) - 1e-7, max.get(axis) + 1e-7);
        if d.abs() < 1e-15 {
            if o < lo || o > hi {
                return false;
            }
        } else {
            let inv = 1.0 / d;
            let (mut a, mut b) = ((lo - o) * inv, (hi - o) * inv);
            if a > b {
                core::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub mesh: usize,
    pub triangle: usize,
}

/// Nearest hit over a set of meshes. Ties keep the earliest (mesh, triangle).
pub fn ray_cast(origin: Vec3, dir: Vec3, meshes: &[MeshBuffer]) -> Option<RayHit> {
    ray_cast_within(origin, dir, meshes, f64::INFINITY)
}

/// As [`ray_cast`], ignoring hits beyond `t_max`.
pub fn ray_cast_within(origin: Vec3, dir: Vec3, meshes: &[MeshBuffer], t_max: f64) -> Option<RayHit> {
    let mut best: Option<RayHit> = None;
    for (mi, m) in meshes.iter().enumerate() {
        let limit = best.map_or(t_max, |b| b.t);
        let (lo, hi) = m.aabb();
        if !ray_aabb(origin, dir, lo, hi, limit) {
            continue;
        }
        for ti in 0..m.indices.len() {
            if let Some(t) = ray_triangle(origin, dir, &m.triangle(ti)) {
                let limit = best.map_or(t_max, |b| b.t);
                if t < limit {
                    best = Some(RayHit { t, mesh: mi, triangle: ti });
                }
            }
        }
    }
    best
}

/// Mesh collection with cached bounds for repeated ray queries.
#[derive(Clone, Debug)]
pub struct RayScene<'a> {
    meshes: Vec<&'a MeshBuffer>,
    ids: Vec<usize>,
    bounds: Vec<(Vec3, Vec3)>,
}

impl<'a> RayScene<'a> {
    /// `ids` are reported back in hits in place of positional indices.
    pub fn new(meshes: impl IntoIterator<Item = (usize, &'a MeshBuffer)>) -> Self {
        let mut s = RayScene { meshes: Vec::new(), ids: Vec::new(), bounds: Vec::new() };
        for (id, m) in meshes {
            if m.indices.is_empty() {
                continue;
            }
            s.bounds.push(m.aabb());
            s.meshes.push(m);
            s.ids.push(id);
        }
        s
    }

    pub fn cast(&self, origin: Vec3, dir: Vec3, t_max: f64) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for (k, m) in self.meshes.iter().enumerate() {
            let limit = best.map_or(t_max, |b| b.t);
            let (lo, hi) = self.bounds[k];
            if !ray_aabb(origin, dir, lo, hi, limit) {
                continue;
            }
            for ti in 0..m.indices.len() {
                if let Some(t) = ray_triangle(origin, dir, &m.triangle(ti)) {
                    if t < best.map_or(t_max, |b| b.t) {
                        best = Some(RayHit { t, mesh: self.ids[k], triangle: ti });
                    }
                }
            }
        }
        best
    }

    pub fn occluded(&self, origin: Vec3, dir: Vec3, t_max: f64) -> bool {
        self.cast(origin, dir, t_max).is_some()
    }
}
