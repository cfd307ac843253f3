//! World data model: the dungeon graph, annotated elements, meshes and lights.
//!
//! Everything here is produced once by [`crate::worldgen`] and read-only
//! afterwards. Plane normals of element faces point into free space.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingVolume, Category, ConvexPolygon3, MeshBuffer, Plane};
use crate::math::Vec3;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(DungeonId);
id_type!(ElementId);
id_type!(ConnectorId);
id_type!(MeshId);
id_type!(LightId);
id_type!(EntityId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectorKind {
    Gate,
    Door,
    Tunnel,
    Stairs,
}

/// Global style rules shared by every dungeon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleConfig {
    pub wall_height: (f64, f64),
    /// Ceiling tilt range in degrees.
    pub ceiling_incline_deg: (f64, f64),
    /// Columns per square unit of floor.
    pub column_density: (f64, f64),
    pub column_radius: (f64, f64),
    /// Free gap kept between neighbouring columns and between columns and walls.
    pub column_gap: f64,
    pub opening_width: (f64, f64),
    pub opening_height: (f64, f64),
    pub corridor_length: (f64, f64),
    pub tunnel_segments: u32,
    /// Number of treads per staircase (odd).
    pub stair_steps: u32,
    pub torches_per_dungeon: u32,
    pub torch_intensity: f64,
    pub player_height: f64,
    pub flight_clearance: f64,
    /// Default voxel size for grids, height maps and singularity tables.
    pub voxel_size: f64,
    pub grid_layers: u32,
    /// Camera altitude range above the floor spanned by the grid layers.
    pub camera_altitude: (f64, f64),
}

impl Default for StyleConfig {
    fn default() -> Self {
        StyleConfig {
            wall_height: (5.5, 7.5),
            ceiling_incline_deg: (0.0, 6.0),
            column_density: (0.0, 0.03),
            column_radius: (0.45, 0.7),
            column_gap: 2.4,
            opening_width: (2.6, 3.2),
            opening_height: (3.0, 3.6),
            corridor_length: (3.0, 6.0),
            tunnel_segments: 4,
            stair_steps: 9,
            torches_per_dungeon: 4,
            torch_intensity: 12.0,
            player_height: 1.7,
            flight_clearance: 3.2,
            voxel_size: 0.4,
            grid_layers: 3,
            camera_altitude: (1.2, 3.6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DungeonSpec {
    pub id: u32,
    pub name: String,
    pub side_count: u32,
    /// Range for the apothem (center to wall distance).
    pub radius: (f64, f64),
    #[serde(default)]
    pub floor_altitude: f64,
    #[serde(default)]
    pub stairs: bool,
    #[serde(default)]
    pub columns: bool,
    #[serde(default)]
    pub torches: bool,
    pub progression: u32,
    /// Optional designer placement of the dungeon center (x, z).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    pub from: u32,
    pub to: u32,
    pub kind: ConnectorKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    #[serde(default)]
    pub seed: u64,
    pub dungeons: Vec<DungeonSpec>,
    #[serde(default)]
    pub connections: Vec<ConnectionSpec>,
    #[serde(default)]
    pub style: StyleConfig,
}

/// Floor-support altitudes sampled at cell centers over a dungeon's region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightMap {
    pub origin: (f64, f64),
    pub cell: f64,
    pub nx: u32,
    pub nz: u32,
    /// Row-major by z then x; `None` outside the region.
    pub heights: Vec<Option<f64>>,
}

impl HeightMap {
    pub fn sample(&self, ix: i64, iz: i64) -> Option<f64> {
        if ix < 0 || iz < 0 || ix >= self.nx as i64 || iz >= self.nz as i64 {
            return None;
        }
        self.heights[iz as usize * self.nx as usize + ix as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingConstraint {
    Free,
    Forbidden,
    ConstrainedLeft,
    ConstrainedRight,
}

/// Per-dungeon table of precomputed heading choices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityTable {
    pub dungeon: DungeonId,
    pub origin: (f64, f64),
    pub cell: f64,
    pub nx: u32,
    pub nz: u32,
    pub buckets: u32,
    /// Altitude of the probe rays.
    pub altitude: f64,
    /// `(iz * nx + ix) * buckets + bucket`.
    pub entries: Vec<HeadingConstraint>,
    /// Cells without enough headroom to fly.
    pub no_fly: Vec<bool>,
}

impl SingularityTable {
    pub fn bucket_of(&self, heading: f64) -> usize {
        let b = self.buckets as f64;
        let t = crate::math::floor(libm::fmod(heading, crate::math::TAU) / crate::math::TAU * b + 0.5);
        (t as i64).rem_euclid(self.buckets as i64) as usize
    }

    pub fn bucket_angle(&self, bucket: usize) -> f64 {
        bucket as f64 / self.buckets as f64 * crate::math::TAU
    }

    pub fn cell_of(&self, p: Vec3) -> Option<(usize, usize)> {
        let fx = crate::math::floor((p.x - self.origin.0) / self.cell);
        let fz = crate::math::floor((p.z - self.origin.1) / self.cell);
        if fx < 0.0 || fz < 0.0 || fx >= self.nx as f64 || fz >= self.nz as f64 {
            return None;
        }
        Some((fx as usize, fz as usize))
    }

    pub fn entry(&self, ix: usize, iz: usize, bucket: usize) -> HeadingConstraint {
        self.entries[(iz * self.nx as usize + ix) * self.buckets as usize + bucket]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dungeon {
    pub id: DungeonId,
    pub name: String,
    pub progression: u32,
    /// Footprint centroid at floor altitude.
    pub center: Vec3,
    pub apothem: f64,
    /// Floor outline at floor altitude, counter-clockwise about +y.
    pub footprint: ConvexPolygon3,
    pub floor: Plane,
    pub ceiling: Plane,
    /// One plane per side, normals pointing inward.
    pub walls: Vec<Plane>,
    pub elements: Vec<ElementId>,
    pub connectors: Vec<ConnectorId>,
    pub height_map: HeightMap,
}

impl Dungeon {
    pub fn floor_altitude(&self) -> f64 {
        self.center.y
    }

    /// Altitude of the (possibly inclined) ceiling above `(x, z)`.
    pub fn ceiling_at(&self, x: f64, z: f64) -> f64 {
        let n = self.ceiling.normal;
        (self.ceiling.offset - n.x * x - n.z * z) / n.y
    }

    /// Horizontal containment in the footprint outline.
    pub fn footprint_contains_xz(&self, x: f64, z: f64, tol: f64) -> bool {
        let p = Vec3::new(x, self.center.y, z);
        self.walls.iter().all(|w| crate::geometry::signed_distance(p, w) >= -tol)
    }

    /// Point inside the footprint extruded from floor to ceiling.
    pub fn prism_contains(&self, p: Vec3, tol: f64) -> bool {
        p.y >= self.center.y - tol
            && p.y <= self.ceiling_at(p.x, p.z) + tol
            && self.footprint_contains_xz(p.x, p.z, tol)
    }

    pub fn footprint_area(&self) -> f64 {
        self.footprint.area()
    }

    pub fn bounds_xz(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.footprint.vertices {
            b.0 = b.0.min(v.x);
            b.1 = b.1.min(v.z);
            b.2 = b.2.max(v.x);
            b.3 = b.3.max(v.z);
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stairs {
    pub steps: u32,
    pub rise: f64,
    pub run: f64,
    /// Landing length at each end of the corridor.
    pub landing: f64,
    /// Axis position where the first step begins.
    pub first_step_at: f64,
}

/// A passage between two dungeons with its portal at the cross plane.
///
/// The corridor runs from `start` (opening in the first endpoint's wall,
/// floor level) to `end` along `axis`. Its cross plane is the bisector of
/// the two dungeon centers, so corridor points resolve to the nearer
/// endpoint exactly on the side of the portal they lie on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Connector {
    pub id: ConnectorId,
    pub kind: ConnectorKind,
    pub endpoints: (DungeonId, DungeonId),
    pub axis: Vec3,
    pub lateral: Vec3,
    pub start: Vec3,
    pub end: Vec3,
    pub length: f64,
    /// Axis position of the cross plane, measured from `start`.
    pub cross_at: f64,
    pub widths: (f64, f64),
    pub heights: (f64, f64),
    pub portal: ConvexPolygon3,
    /// Normal points from the first endpoint toward the second.
    pub cross_plane: Plane,
    pub side_planes: Vec<Plane>,
    /// Step, base and transition planes for stairs.
    pub stair_planes: Vec<Plane>,
    pub stairs: Option<Stairs>,
    /// Section scale per tunnel segment relative to the first opening.
    pub section_scales: Vec<f64>,
    pub openings: (ConvexPolygon3, ConvexPolygon3),
    pub elements: Vec<ElementId>,
}

impl Connector {
    pub fn other(&self, d: DungeonId) -> Option<DungeonId> {
        if self.endpoints.0 == d {
            Some(self.endpoints.1)
        } else if self.endpoints.1 == d {
            Some(self.endpoints.0)
        } else {
            None
        }
    }

    /// Corridor-frame coordinates `(u, v)` of a point: along axis and lateral.
    pub fn local_uv(&self, p: Vec3) -> (f64, f64) {
        let d = p.flat() - self.start.flat();
        (d.dot(self.axis), d.dot(self.lateral))
    }

    pub fn width_at(&self, u: f64) -> f64 {
        lerp_exact(self.widths.0, self.widths.1, u / self.length)
    }

    pub fn floor_at(&self, u: f64) -> f64 {
        let (fa, fb) = (self.start.y, self.end.y);
        match &self.stairs {
            None => lerp_exact(fa, fb, u / self.length),
            Some(s) => {
                if u < s.first_step_at {
                    fa
                } else {
                    let k = crate::math::floor((u - s.first_step_at) / s.run) as i64 + 1;
                    let k = k.clamp(0, s.steps as i64 + 1);
                    fa + s.rise * k as f64
                }
            }
        }
    }

    pub fn ceiling_at(&self, u: f64) -> f64 {
        lerp_exact(self.start.y + self.heights.0, self.end.y + self.heights.1, u / self.length)
    }

    /// Point at axis position `u`, lateral offset `v` and altitude `y`.
    /// The two ends reproduce `start` / `end` exactly.
    pub fn point(&self, u: f64, v: f64, y: f64) -> Vec3 {
        let base = if u <= 0.0 {
            self.start.flat()
        } else if u >= self.length {
            self.end.flat()
        } else {
            self.start.flat() + self.axis * u
        };
        (base + self.lateral * v).with_y(y)
    }

    /// Point inside the corridor volume (between the two openings).
    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        let (u, v) = self.local_uv(p);
        if u < -tol || u > self.length + tol {
            return false;
        }
        let uc = u.clamp(0.0, self.length);
        v.abs() <= self.width_at(uc) * 0.5 + tol
            && p.y >= self.floor_at(uc) - tol
            && p.y <= self.ceiling_at(uc) + tol
    }

    /// Which endpoint's half of the corridor `p` falls into.
    pub fn side_of(&self, p: Vec3) -> DungeonId {
        if crate::geometry::signed_distance(p, &self.cross_plane) < 0.0 {
            self.endpoints.0
        } else {
            self.endpoints.1
        }
    }

    pub fn bounds_xz(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let pts = [
            self.start + self.lateral * (self.widths.0 * 0.5),
            self.start - self.lateral * (self.widths.0 * 0.5),
            self.end + self.lateral * (self.widths.1 * 0.5),
            self.end - self.lateral * (self.widths.1 * 0.5),
        ];
        for v in pts {
            b.0 = b.0.min(v.x);
            b.1 = b.1.min(v.z);
            b.2 = b.2.max(v.x);
            b.3 = b.3.max(v.z);
        }
        b
    }

    /// Door panel polygon for an open fraction in `[0, 1]` (0 = closed).
    pub fn door_panel(&self, open_fraction: f64) -> ConvexPolygon3 {
        let u = self.cross_at;
        let w = self.width_at(u);
        let s = open_fraction.clamp(0.0, 1.0) * w;
        let (f, c) = (self.floor_at(u), self.ceiling_at(u));
        let poly = ConvexPolygon3::new(alloc::vec![
            self.point(u, -w * 0.5 + s, f),
            self.point(u, w * 0.5 + s, f),
            self.point(u, w * 0.5 + s, c),
            self.point(u, -w * 0.5 + s, c),
        ]);
        crate::worldgen::oriented(poly, -self.axis)
    }
}

/// Linear interpolation clamped to `[a, b]` that returns `b` exactly at the end.
pub fn lerp_exact(a: f64, b: f64, t: f64) -> f64 {
    if t <= 0.0 {
        a
    } else if t >= 1.0 {
        b
    } else {
        a + (b - a) * t
    }
}

/// Snaps xz bounds outward onto the global lattice of spacing `cell`.
pub fn lattice(bounds: (f64, f64, f64, f64), cell: f64) -> ((f64, f64), u32, u32) {
    let x0 = crate::math::floor(bounds.0 / cell) * cell;
    let z0 = crate::math::floor(bounds.1 / cell) * cell;
    let nx = crate::math::ceil((bounds.2 - x0) / cell - 1e-9).max(1.0) as u32;
    let nz = crate::math::ceil((bounds.3 - z0) / cell - 1e-9).max(1.0) as u32;
    ((x0, z0), nx, nz)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub id: ElementId,
    pub category: Category,
    pub dungeon: DungeonId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connector: Option<ConnectorId>,
    pub volume: BoundingVolume,
    pub planes: Vec<Plane>,
    /// Renderable surface polygons; normals face free space.
    pub faces: Vec<ConvexPolygon3>,
    pub deploy_mesh: MeshId,
    pub bake_mesh: MeshId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    pub id: LightId,
    pub position: Vec3,
    pub intensity: f64,
    pub color: [f64; 3],
    pub dungeon: DungeonId,
    pub source: ElementId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub seed: u64,
    pub config: WorldConfig,
    pub dungeons: Vec<Dungeon>,
    pub connectors: Vec<Connector>,
    pub elements: Vec<Element>,
    pub lights: Vec<PointLight>,
    pub meshes: Vec<MeshBuffer>,
    pub singularity_tables: Vec<SingularityTable>,
}

impl World {
    pub fn dungeon(&self, id: DungeonId) -> Option<&Dungeon> {
        self.dungeons.get(id.index()).filter(|d| d.id == id)
    }

    pub fn element(&self, id: ElementId) -> &Element {
        &self.elements[id.index()]
    }

    pub fn connector(&self, id: ConnectorId) -> &Connector {
        &self.connectors[id.index()]
    }

    /// Elements tagged to a dungeon, including its corridor halves.
    pub fn elements_of(&self, d: DungeonId) -> impl Iterator<Item = &Element> + '_ {
        self.elements.iter().filter(move |e| e.dungeon == d)
    }

    /// Free-space test against one dungeon's footprint prism and all its corridors.
    pub fn in_dungeon_free_region(&self, d: DungeonId, p: Vec3, tol: f64) -> bool {
        let Some(dg) = self.dungeon(d) else { return false };
        dg.prism_contains(p, tol) || dg.connectors.iter().any(|c| self.connector(*c).contains(p, tol))
    }

    /// xz bounds covering a dungeon's footprint and all of its corridors.
    pub fn region_bounds_xz(&self, d: DungeonId) -> (f64, f64, f64, f64) {
        let dg = &self.dungeons[d.index()];
        let mut b = dg.bounds_xz();
        for c in &dg.connectors {
            let cb = self.connector(*c).bounds_xz();
            b = (b.0.min(cb.0), b.1.min(cb.1), b.2.max(cb.2), b.3.max(cb.3));
        }
        b
    }

    /// Static meshes used for visibility and shadow rays (bake set).
    pub fn bake_meshes(&self) -> impl Iterator<Item = (usize, &MeshBuffer)> + '_ {
        self.elements.iter().map(move |e| (e.id.index(), &self.meshes[e.bake_mesh.index()]))
    }

    pub fn element_count_by_dungeon(&self) -> Vec<usize> {
        let mut v = alloc::vec![0; self.dungeons.len()];
        for e in &self.elements {
            v[e.dungeon.index()] += 1;
        }
        v
    }
}
