//! Lightmap baking: surface grouping, chart layout, atlas packing in
//! progression order, crease tessellation, vertex AO and direct lighting.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{clip_polygon, Category, ConvexPolygon3, MeshBuffer, Plane, PlaneRole, RayScene};
use crate::math::{self, Vec3};
use crate::metastore::MetaStore;
use crate::world::{DungeonId, Element, ElementId, PointLight, World};

pub const GUTTER: u32 = 2;
/// Minimum dihedral angle between a face and a neighbouring plane for the
/// shared edge to count as a crease.
pub const CREASE_ANGLE_DEG: f64 = 30.0;
const SURFACE_LIFT: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BakeConfig {
    pub texels_per_unit: f64,
    pub dungeon_scale: BTreeMap<DungeonId, f64>,
    pub element_scale: BTreeMap<ElementId, f64>,
    pub ao_rays: u32,
    pub ao_max_distance: f64,
    pub band: f64,
    pub subdivision: u32,
    pub ambient: f64,
    pub atlas_size: u32,
    /// Irradiance below which a light no longer reaches another dungeon.
    pub influence_cutoff: f64,
}

impl Default for BakeConfig {
    fn default() -> Self {
        BakeConfig {
            texels_per_unit: 4.0,
            dungeon_scale: BTreeMap::new(),
            element_scale: BTreeMap::new(),
            ao_rays: 64,
            ao_max_distance: 4.0,
            band: 0.5,
            subdivision: 2,
            ambient: 0.03,
            atlas_size: 1024,
            influence_cutoff: 0.01,
        }
    }
}

impl BakeConfig {
    pub fn is_valid(&self) -> bool {
        self.texels_per_unit > 0.0
            && self.ao_rays > 0
            && self.ao_max_distance > 0.0
            && self.band > 0.0
            && (0.0..1.0).contains(&self.ambient)
            && self.atlas_size.is_power_of_two()
            && self.atlas_size > 2 * GUTTER
            && self.influence_cutoff > 0.0
            && self.dungeon_scale.values().chain(self.element_scale.values()).all(|s| *s > 0.0)
    }

    pub fn scale_of(&self, e: &Element) -> f64 {
        self.dungeon_scale.get(&e.dungeon).copied().unwrap_or(1.0) * self.element_scale.get(&e.id).copied().unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BakeError {
    #[error("chart of element {element} is {w}x{h} texels, larger than the {size} atlas")]
    ChartTooLarge { element: u32, w: u32, h: u32, size: u32 },
    #[error("invalid bake configuration")]
    InvalidConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGroup {
    pub id: u32,
    pub dungeon: DungeonId,
    pub category: Category,
    pub planes: Vec<Plane>,
    pub elements: Vec<ElementId>,
}

fn plane_key(p: &Plane) -> [i64; 4] {
    let q = |v: f64| math::round(v * 1e6) as i64;
    [q(p.normal.x), q(p.normal.y), q(p.normal.z), q(p.offset)]
}

/// One group per (dungeon, category, set of face planes).
pub fn group_surfaces(world: &World) -> Vec<SurfaceGroup> {
    let mut index: BTreeMap<(DungeonId, Category, Vec<[i64; 4]>), usize> = BTreeMap::new();
    let mut groups: Vec<SurfaceGroup> = Vec::new();
    for e in &world.elements {
        let mut planes: Vec<Plane> = e.faces.iter().map(|f| f.plane(PlaneRole::Other)).collect();
        planes.sort_by_key(plane_key);
        planes.dedup_by_key(|p| plane_key(p));
        let key = (e.dungeon, e.category, planes.iter().map(plane_key).collect());
        let gi = *index.entry(key).or_insert_with(|| {
            groups.push(SurfaceGroup { id: groups.len() as u32, dungeon: e.dungeon, category: e.category, planes, elements: Vec::new() });
            groups.len() - 1
        });
        groups[gi].elements.push(e.id);
    }
    groups
}

/// Planar projection of one face into its strip of a chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceMap {
    pub origin: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub normal: Vec3,
    /// World extent along the axes.
    pub extent: (f64, f64),
    /// Texel offset of this strip inside the chart.
    pub offset: u32,
    pub size: (u32, u32),
}

impl FaceMap {
    fn new(face: &ConvexPolygon3, tpu: f64, scale: f64, offset: u32) -> Self {
        let n = face.normal();
        let v = &face.vertices;
        let u_axis = (v[1] - v[0]).normalize_or_zero();
        let v_axis = n.cross(u_axis).normalize_or_zero();
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in v {
            let (a, b) = ((*p - v[0]).dot(u_axis), (*p - v[0]).dot(v_axis));
            u0 = u0.min(a);
            u1 = u1.max(a);
            v0 = v0.min(b);
            v1 = v1.max(b);
        }
        let texels = |e: f64| {
            let base = math::ceil(e * tpu - 1e-9).max(1.0);
            math::ceil(base * scale - 1e-9).max(1.0) as u32
        };
        let extent = (u1 - u0, v1 - v0);
        FaceMap {
            origin: v[0] + u_axis * u0 + v_axis * v0,
            u_axis,
            v_axis,
            normal: n,
            extent,
            offset,
            size: (texels(extent.0), texels(extent.1)),
        }
    }

    /// World position of a texel center given chart-local texel coordinates.
    pub fn texel_position(&self, i: u32, j: u32) -> Vec3 {
        let u = (i as f64 + 0.5) / self.size.0 as f64 * self.extent.0;
        let v = (j as f64 + 0.5) / self.size.1 as f64 * self.extent.1;
        self.origin + self.u_axis * u + self.v_axis * v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub element: ElementId,
    pub dungeon: DungeonId,
    pub group: u32,
    pub width: u32,
    pub height: u32,
    pub faces: Vec<FaceMap>,
    pub scale: f64,
    pub atlas: u32,
    /// (x, y, w, h) in atlas texels.
    pub rect: (u32, u32, u32, u32),
}

pub fn build_charts(world: &World, groups: &[SurfaceGroup], cfg: &BakeConfig) -> Vec<Chart> {
    let mut group_of = BTreeMap::new();
    for g in groups {
        for e in &g.elements {
            group_of.insert(*e, g.id);
        }
    }
    world
        .elements
        .iter()
        .map(|e| {
            let scale = cfg.scale_of(e);
            let mut faces = Vec::with_capacity(e.faces.len());
            let mut x = 0;
            for f in &e.faces {
                let m = FaceMap::new(f, cfg.texels_per_unit, scale, x);
                x += m.size.0;
                faces.push(m);
            }
            let height = faces.iter().map(|f| f.size.1).max().unwrap_or(1);
            Chart {
                element: e.id,
                dungeon: e.dungeon,
                group: group_of.get(&e.id).copied().unwrap_or(0),
                width: x.max(1),
                height,
                faces,
                scale,
                atlas: 0,
                rect: (0, 0, 0, 0),
            }
        })
        .collect()
}

/// Shelf packing by decreasing height, then width, then element id. Returns
/// rects in the input order, or `None` when the charts do not fit.
pub fn pack_charts(charts: &[Chart], size: u32) -> Option<Vec<(u32, u32, u32, u32)>> {
    let mut order: Vec<usize> = (0..charts.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&charts[a], &charts[b]);
        cb.height.cmp(&ca.height).then(cb.width.cmp(&ca.width)).then(ca.element.cmp(&cb.element))
    });
    let mut out = vec![(0, 0, 0, 0); charts.len()];
    let (mut x, mut y, mut shelf) = (GUTTER, GUTTER, 0u32);
    for i in order {
        let (w, h) = (charts[i].width, charts[i].height);
        if w + 2 * GUTTER > size || h + 2 * GUTTER > size {
            return None;
        }
        if x + w + GUTTER > size {
            x = GUTTER;
            y += shelf + GUTTER;
            shelf = 0;
        }
        if y + h + GUTTER > size {
            return None;
        }
        out[i] = (x, y, w, h);
        x += w + GUTTER;
        shelf = shelf.max(h);
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atlas {
    pub id: u32,
    pub size: u32,
    pub dungeons: Vec<DungeonId>,
    /// Indices into the chart list.
    pub charts: Vec<usize>,
    /// Row-major linear rgb.
    #[serde(skip)]
    pub image: Vec<[f32; 3]>,
}

/// Fills atlases dungeon by dungeon in progression order, opening a new atlas
/// when the next dungeon's charts no longer fit. Writes atlas ids and rects
/// back into `charts`.
pub fn assign_atlases(charts: &mut [Chart], order: &[DungeonId], size: u32) -> Result<Vec<Atlas>, BakeError> {
    for c in charts.iter() {
        if c.width + 2 * GUTTER > size || c.height + 2 * GUTTER > size {
            return Err(BakeError::ChartTooLarge { element: c.element.0, w: c.width, h: c.height, size });
        }
    }
    let mut atlases: Vec<Atlas> = Vec::new();
    let new_atlas = |id: usize| Atlas { id: id as u32, size, dungeons: Vec::new(), charts: Vec::new(), image: Vec::new() };
    for &d in order {
        let mut mine: Vec<usize> = (0..charts.len()).filter(|&i| charts[i].dungeon == d).collect();
        if mine.is_empty() {
            continue;
        }
        if atlases.is_empty() {
            atlases.push(new_atlas(0));
        }
        let fits = |members: &[usize], charts: &[Chart]| {
            let set: Vec<Chart> = members.iter().map(|&i| charts[i].clone()).collect();
            pack_charts(&set, size).is_some()
        };
        let cur = atlases.last().expect("non-empty");
        let mut trial = cur.charts.clone();
        trial.extend(&mine);
        if !fits(&trial, charts) {
            if !atlases.last().expect("non-empty").charts.is_empty() {
                atlases.push(new_atlas(atlases.len()));
            }
            // A dungeon too large for one atlas spills over several of its own.
            while !fits(&mine, charts) {
                let mut take = Vec::new();
                for &i in &mine {
                    take.push(i);
                    if !fits(&take, charts) {
                        take.pop();
                        break;
                    }
                }
                let a = atlases.last_mut().expect("non-empty");
                a.dungeons.push(d);
                a.charts = take.clone();
                mine.retain(|i| !take.contains(i));
                atlases.push(new_atlas(atlases.len()));
            }
        }
        let a = atlases.last_mut().expect("non-empty");
        a.dungeons.push(d);
        a.charts.extend(mine);
    }
    for a in &mut atlases {
        a.charts.sort_unstable();
        let set: Vec<Chart> = a.charts.iter().map(|&i| charts[i].clone()).collect();
        let rects = pack_charts(&set, size).expect("membership was checked");
        for (k, &i) in a.charts.iter().enumerate() {
            charts[i].atlas = a.id;
            charts[i].rect = rects[k];
        }
    }
    Ok(atlases)
}

fn region_box(world: &World, d: DungeonId) -> (Vec3, Vec3) {
    let (x0, z0, x1, z1) = world.region_bounds_xz(d);
    let dg = &world.dungeons[d.index()];
    let mut lo = dg.floor_altitude();
    let mut hi = dg.floor_altitude();
    for &e in &dg.elements {
        let (a, b) = world.element(e).volume.obb.aabb();
        lo = lo.min(a.y);
        hi = hi.max(b.y);
    }
    (Vec3::new(x0, lo, z0), Vec3::new(x1, hi, z1))
}

fn box_gap(a: (Vec3, Vec3), b: (Vec3, Vec3)) -> f64 {
    let gap = |lo0: f64, hi0: f64, lo1: f64, hi1: f64| (lo1 - hi0).max(lo0 - hi1).max(0.0);
    let dx = gap(a.0.x, a.1.x, b.0.x, b.1.x);
    let dy = gap(a.0.y, a.1.y, b.0.y, b.1.y);
    let dz = gap(a.0.z, a.1.z, b.0.z, b.1.z);
    math::sqrt(dx * dx + dy * dy + dz * dz)
}

/// Lights of the dungeon plus those of adjacent dungeons close enough to
/// matter.
pub fn select_lights(d: DungeonId, store: &MetaStore, cfg: &BakeConfig) -> Vec<PointLight> {
    let world = store.world();
    let mut out: Vec<PointLight> = world.lights.iter().filter(|l| l.dungeon == d).cloned().collect();
    let here = region_box(world, d);
    let mut neighbors: Vec<DungeonId> = store.neighbors_of(d).unwrap_or_default().into_iter().map(|(_, n)| n).collect();
    neighbors.sort_unstable();
    neighbors.dedup();
    for n in neighbors {
        let theirs: Vec<&PointLight> = world.lights.iter().filter(|l| l.dungeon == n).collect();
        let Some(strongest) = theirs.iter().map(|l| l.intensity).reduce(f64::max) else { continue };
        let reach = math::sqrt(strongest / cfg.influence_cutoff);
        if box_gap(here, region_box(world, n)) <= reach {
            out.extend(theirs.into_iter().cloned());
        }
    }
    out.sort_by_key(|l| l.id);
    out
}

fn subdivide(t: [Vec3; 3], level: u32, out: &mut Vec<[Vec3; 3]>) {
    if level == 0 {
        out.push(t);
        return;
    }
    let [a, b, c] = t;
    let (ab, bc, ca) = ((a + b) * 0.5, (b + c) * 0.5, (c + a) * 0.5);
    for s in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
        subdivide(s, level - 1, out);
    }
}

/// Face edges that meet another element's face at a sharp angle.
fn crease_edges(world: &World, e: &Element, face: &ConvexPolygon3, band: f64) -> Vec<(Vec3, Vec3)> {
    let n = face.normal();
    let cos_max = math::cos(CREASE_ANGLE_DEG.to_radians());
    let near: Vec<&Element> = world
        .elements
        .iter()
        .filter(|o| o.id != e.id && o.volume.sphere.center.distance(e.volume.sphere.center) <= o.volume.sphere.radius + e.volume.sphere.radius + band)
        .collect();
    let v = &face.vertices;
    let mut out = Vec::new();
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let hit = near.iter().any(|o| {
            o.faces.iter().any(|g| {
                g.normal().dot(n) <= cos_max && g.distance_to_point(a) <= band && g.distance_to_point(b) <= band
            })
        });
        if hit {
            out.push((a, b));
        }
    }
    out
}

/// Refined triangles per face of the element: bands of width `band` along
/// crease edges are cut out and subdivided; the rest keeps a plain fan.
pub fn refine_faces(world: &World, e: &Element, cfg: &BakeConfig) -> Vec<Vec<[Vec3; 3]>> {
    e.faces
        .iter()
        .map(|face| {
            let n = face.normal();
            let centroid = face.centroid();
            let mut rest = face.clone();
            let mut tris = Vec::new();
            for (a, b) in crease_edges(world, e, face, cfg.band) {
                if rest.is_empty() {
                    break;
                }
                let mut inward = n.cross(b - a).normalize_or_zero();
                if (centroid - a).dot(inward) < 0.0 {
                    inward = -inward;
                }
                let cut = Plane::from_point_normal(a + inward * cfg.band, inward, PlaneRole::Other);
                let strip = clip_polygon(&rest, &cut.flipped());
                rest = clip_polygon(&rest, &cut);
                for t in strip.fan() {
                    subdivide(t, cfg.subdivision, &mut tris);
                }
            }
            tris.extend(rest.fan());
            tris
        })
        .collect()
}

pub fn tessellate_for_ao(world: &World, e: &Element, cfg: &BakeConfig) -> MeshBuffer {
    let mut m = MeshBuffer::new(e.category, e.dungeon);
    for (face, tris) in e.faces.iter().zip(refine_faces(world, e, cfg)) {
        let n = face.normal();
        for t in tris {
            if crate::geometry::triangle_area(&t) > 1e-12 {
                m.push_triangle(t, n);
            }
        }
    }
    m
}

fn radical_inverse(mut i: u32) -> f64 {
    i = i.reverse_bits();
    i as f64 / 4_294_967_296.0
}

/// Cosine-weighted hemisphere directions from a Hammersley set.
pub fn hemisphere_directions(normal: Vec3, count: u32) -> Vec<Vec3> {
    let t = normal.any_orthonormal();
    let b = normal.cross(t);
    (0..count)
        .map(|i| {
            let u1 = (i as f64 + 0.5) / count as f64;
            let phi = 2.0 * math::PI * radical_inverse(i);
            let r = math::sqrt(u1);
            (t * (r * math::cos(phi)) + b * (r * math::sin(phi)) + normal * math::sqrt(1.0 - u1)).normalize_or_zero()
        })
        .collect()
}

/// 1 minus the cosine-weighted fraction of hemisphere rays that hit
/// something within the configured distance.
pub fn compute_ao(point: Vec3, normal: Vec3, occluders: &RayScene, rays: u32, max_distance: f64) -> f64 {
    let origin = point + normal * SURFACE_LIFT;
    let hits = hemisphere_directions(normal, rays).into_iter().filter(|d| occluders.occluded(origin, *d, max_distance)).count();
    1.0 - hits as f64 / rays as f64
}

/// Direct irradiance from point lights with hard shadows, before AO.
pub fn direct_light(point: Vec3, normal: Vec3, lights: &[PointLight], shadows: &RayScene, ambient: f64) -> [f64; 3] {
    let origin = point + normal * SURFACE_LIFT;
    let mut out = [ambient; 3];
    for l in lights {
        let to = l.position - point;
        let d2 = to.length_squared();
        if d2 < 1e-12 {
            continue;
        }
        let d = math::sqrt(d2);
        let dir = to * (1.0 / d);
        let lambert = normal.dot(dir);
        if lambert <= 0.0 {
            continue;
        }
        let t_max = (l.position - origin).length() - SURFACE_LIFT;
        if shadows.occluded(origin, (l.position - origin).normalize_or_zero(), t_max) {
            continue;
        }
        let e = l.intensity * lambert / d2;
        for (c, o) in out.iter_mut().enumerate() {
            *o += e * l.color[c];
        }
    }
    out
}

/// AO on the refined triangles of one face, interpolated at `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceAo {
    pub triangles: Vec<[Vec3; 3]>,
    pub ao: Vec<[f64; 3]>,
}

impl FaceAo {
    pub fn at(&self, p: Vec3) -> f64 {
        let mut best: Option<(f64, [f64; 3], usize)> = None;
        for (k, t) in self.triangles.iter().enumerate() {
            let w = barycentric(p, t);
            let m = w[0].min(w[1]).min(w[2]);
            if best.is_none_or(|(bm, _, _)| m > bm) {
                best = Some((m, w, k));
            }
            if m >= 0.0 {
                break;
            }
        }
        let Some((_, w, k)) = best else { return 1.0 };
        let w = [w[0].max(0.0), w[1].max(0.0), w[2].max(0.0)];
        let s = w[0] + w[1] + w[2];
        if s <= 0.0 {
            return self.ao[k][0];
        }
        (w[0] * self.ao[k][0] + w[1] * self.ao[k][1] + w[2] * self.ao[k][2]) / s
    }
}

fn barycentric(p: Vec3, t: &[Vec3; 3]) -> [f64; 3] {
    let (v0, v1, v2) = (t[1] - t[0], t[2] - t[0], p - t[0]);
    let (d00, d01, d11, d20, d21) = (v0.dot(v0), v0.dot(v1), v1.dot(v1), v2.dot(v0), v2.dot(v1));
    let den = d00 * d11 - d01 * d01;
    if den.abs() < 1e-300 {
        return [1.0, -1.0, -1.0];
    }
    let v = (d11 * d20 - d01 * d21) / den;
    let w = (d00 * d21 - d01 * d20) / den;
    [1.0 - v - w, v, w]
}

/// Shared inputs for baking individual charts.
pub struct BakeContext<'w> {
    pub world: &'w World,
    pub cfg: BakeConfig,
    pub charts: Vec<Chart>,
    pub atlases: Vec<Atlas>,
    lights: Vec<Vec<PointLight>>,
    /// Meshes of each dungeon and its neighbours, for shadows and AO.
    nearby: Vec<Vec<usize>>,
}

impl<'w> BakeContext<'w> {
    pub fn new(world: &'w World, cfg: &BakeConfig) -> Result<Self, BakeError> {
        if !cfg.is_valid() {
            return Err(BakeError::InvalidConfig);
        }
        let store = MetaStore::new(world);
        let groups = group_surfaces(world);
        let mut charts = build_charts(world, &groups, cfg);
        let atlases = assign_atlases(&mut charts, &store.progression_order(), cfg.atlas_size)?;
        let mut lights = Vec::new();
        let mut nearby = Vec::new();
        for d in &world.dungeons {
            lights.push(select_lights(d.id, &store, cfg));
            let mut ds = vec![d.id];
            ds.extend(store.neighbors_of(d.id).unwrap_or_default().into_iter().map(|(_, n)| n));
            nearby.push(world.elements.iter().filter(|e| ds.contains(&e.dungeon)).map(|e| e.deploy_mesh.index()).collect());
        }
        Ok(BakeContext { world, cfg: cfg.clone(), charts, atlases, lights, nearby })
    }

    /// Occluders for an element: nearby meshes, excluding the element itself
    /// (a planar or convex surface cannot occlude itself from outside).
    fn scene_for(&self, e: &Element, reach: f64) -> RayScene<'w> {
        let (lo, hi) = e.volume.obb.aabb();
        let world = self.world;
        RayScene::new(
            self.nearby[e.dungeon.index()]
                .iter()
                .copied()
                .filter(move |&m| m != e.deploy_mesh.index())
                .filter(move |&m| {
                    let (a, b) = world.meshes[m].aabb();
                    box_gap((lo, hi), (a, b)) <= reach
                })
                .map(move |m| (m, &world.meshes[m])),
        )
    }

    pub fn lights_for(&self, d: DungeonId) -> &[PointLight] {
        &self.lights[d.index()]
    }

    /// Shadow geometry seen from dungeon `d`.
    pub fn shadow_scene(&self, d: DungeonId) -> RayScene<'w> {
        let world = self.world;
        RayScene::new(self.nearby[d.index()].iter().map(move |&m| (m, &world.meshes[m])))
    }

    /// Per-face refined triangles with vertex AO.
    pub fn face_ao(&self, e: &Element) -> Vec<FaceAo> {
        let scene = self.scene_for(e, self.cfg.ao_max_distance);
        let mut cache: BTreeMap<[u64; 3], f64> = BTreeMap::new();
        e.faces
            .iter()
            .zip(refine_faces(self.world, e, &self.cfg))
            .map(|(face, tris)| {
                let n = face.normal();
                let ao = tris
                    .iter()
                    .map(|t| {
                        t.map(|p| {
                            let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
                            *cache.entry(key).or_insert_with(|| compute_ao(p, n, &scene, self.cfg.ao_rays, self.cfg.ao_max_distance))
                        })
                    })
                    .collect();
                FaceAo { triangles: tris, ao }
            })
            .collect()
    }

    /// Texels of one chart, row-major over the chart rect.
    pub fn bake_chart(&self, index: usize) -> Vec<[f32; 3]> {
        let chart = &self.charts[index];
        let e = self.world.element(chart.element);
        let shadows = self.shadow_scene(e.dungeon);
        let lights = self.lights_for(e.dungeon);
        let aos = self.face_ao(e);
        let mut out = vec![[0.0f32; 3]; (chart.width * chart.height) as usize];
        for (fm, fao) in chart.faces.iter().zip(&aos) {
            for j in 0..fm.size.1 {
                for i in 0..fm.size.0 {
                    let p = fm.texel_position(i, j);
                    let ao = fao.at(p);
                    let rad = direct_light(p, fm.normal, lights, &shadows, self.cfg.ambient);
                    let idx = (j * chart.width + fm.offset + i) as usize;
                    out[idx] = [(rad[0] * ao) as f32, (rad[1] * ao) as f32, (rad[2] * ao) as f32];
                }
            }
        }
        out
    }

    /// Writes baked chart texels into the atlas images.
    pub fn compose(&mut self, baked: Vec<Vec<[f32; 3]>>) {
        for a in &mut self.atlases {
            a.image = vec![[0.0; 3]; (a.size * a.size) as usize];
        }
        for (chart, texels) in self.charts.iter().zip(baked) {
            let a = &mut self.atlases[chart.atlas as usize];
            let (x, y, w, h) = chart.rect;
            for j in 0..h {
                for i in 0..w {
                    a.image[((y + j) * a.size + x + i) as usize] = texels[(j * w + i) as usize];
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BakeOutput {
    pub atlases: Vec<Atlas>,
    pub charts: Vec<Chart>,
}

/// Sequential bake of every chart.
pub fn bake(world: &World, cfg: &BakeConfig) -> Result<BakeOutput, BakeError> {
    let mut ctx = BakeContext::new(world, cfg)?;
    let baked = (0..ctx.charts.len()).map(|i| ctx.bake_chart(i)).collect();
    ctx.compose(baked);
    Ok(BakeOutput { atlases: ctx.atlases, charts: ctx.charts })
}
