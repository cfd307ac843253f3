//! Runtime access to the generated metadata and the dynamic tag table.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::geometry::{signed_distance, Plane, PlaneRole};
use crate::math::{self, Vec3};
use crate::world::{ConnectorId, ConnectorKind, DungeonId, EntityId, HeadingConstraint, World};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MetaError {
    #[error("position is outside every dungeon")]
    Unresolved,
}

pub struct MetaStore<'w> {
    world: &'w World,
    /// Per-dungeon xz bounds of footprint plus passages, for quick rejection.
    regions: Vec<(f64, f64, f64, f64)>,
    tags: BTreeMap<EntityId, DungeonId>,
}

impl<'w> MetaStore<'w> {
    pub fn new(world: &'w World) -> Self {
        let regions = world.dungeons.iter().map(|d| world.region_bounds_xz(d.id)).collect();
        MetaStore { world, regions, tags: BTreeMap::new() }
    }

    pub fn world(&self) -> &'w World {
        self.world
    }

    /// The dungeon whose footprint prism holds `p`. Points inside a passage
    /// go to the endpoint with the horizontally nearer center; exact ties go
    /// to the lower id.
    pub fn dungeon_of_point(&self, p: Vec3) -> Option<DungeonId> {
        let w = self.world;
        for (i, d) in w.dungeons.iter().enumerate() {
            let b = self.regions[i];
            if p.x < b.0 || p.z < b.1 || p.x > b.2 || p.z > b.3 {
                continue;
            }
            if d.prism_contains(p, 0.0) {
                return Some(d.id);
            }
        }
        for c in &w.connectors {
            if c.contains(p, 0.0) {
                let (a, b) = c.endpoints;
                let da = p.flat().distance(w.dungeons[a.index()].center.flat());
                let db = p.flat().distance(w.dungeons[b.index()].center.flat());
                return Some(if da < db || (da == db && a < b) { a } else { b });
            }
        }
        None
    }

    pub fn tag_entity(&mut self, id: EntityId, p: Vec3) -> Result<DungeonId, MetaError> {
        let d = self.dungeon_of_point(p).ok_or(MetaError::Unresolved)?;
        self.tags.insert(id, d);
        Ok(d)
    }

    pub fn untag_entity(&mut self, id: EntityId) {
        self.tags.remove(&id);
    }

    pub fn tag_of(&self, id: EntityId) -> Option<DungeonId> {
        self.tags.get(&id).copied()
    }

    pub fn tagged_in(&self, d: DungeonId) -> impl Iterator<Item = EntityId> + '_ {
        self.tags.iter().filter(move |(_, t)| **t == d).map(|(e, _)| *e)
    }

    /// Plane with a matching role nearest to `p` (by |signed distance|)
    /// among the dungeon's elements.
    pub fn nearest_plane(&self, p: Vec3, d: DungeonId, roles: &[PlaneRole]) -> Option<(Plane, f64)> {
        let dg = self.world.dungeon(d)?;
        let mut best: Option<(Plane, f64)> = None;
        for e in &dg.elements {
            for pl in &self.world.element(*e).planes {
                if !roles.contains(&pl.role) {
                    continue;
                }
                let dist = signed_distance(p, pl).abs();
                if best.map_or(true, |(_, b)| dist < b) {
                    best = Some((*pl, dist));
                }
            }
        }
        best
    }

    /// Floor-support altitude: exact step altitude on stairs, bilinear over
    /// the height map elsewhere.
    pub fn height_at(&self, d: DungeonId, x: f64, z: f64) -> Option<f64> {
        let dg = self.world.dungeon(d)?;
        for cid in &dg.connectors {
            let c = self.world.connector(*cid);
            if c.kind != ConnectorKind::Stairs {
                continue;
            }
            let (u, v) = c.local_uv(Vec3::new(x, 0.0, z));
            if (0.0..=c.length).contains(&u) && v.abs() <= c.width_at(u) * 0.5 {
                return Some(c.floor_at(u));
            }
        }
        crate::worldgen::support_altitude(self.world, d, x, z)?;
        let hm = &dg.height_map;
        let gx = (x - hm.origin.0) / hm.cell - 0.5;
        let gz = (z - hm.origin.1) / hm.cell - 0.5;
        let (x0, z0) = (math::floor(gx), math::floor(gz));
        let (tx, tz) = (gx - x0, gz - z0);
        let (ix, iz) = (x0 as i64, z0 as i64);
        let samples = [
            hm.sample(ix, iz),
            hm.sample(ix + 1, iz),
            hm.sample(ix, iz + 1),
            hm.sample(ix + 1, iz + 1),
        ];
        let fallback = samples.iter().flatten().next().copied().unwrap_or(dg.floor_altitude());
        let s: Vec<f64> = samples.iter().map(|v| v.unwrap_or(fallback)).collect();
        if s.iter().all(|v| *v == s[0]) {
            return Some(s[0]);
        }
        let top = s[0] + (s[1] - s[0]) * tx;
        let bottom = s[2] + (s[3] - s[2]) * tx;
        Some(top + (bottom - top) * tz)
    }

    pub fn neighbors_of(&self, d: DungeonId) -> Option<Vec<(ConnectorId, DungeonId)>> {
        let dg = self.world.dungeon(d)?;
        Some(
            dg.connectors
                .iter()
                .filter_map(|c| self.world.connector(*c).other(d).map(|o| (*c, o)))
                .collect(),
        )
    }

    pub fn progression_order(&self) -> Vec<DungeonId> {
        let mut v: Vec<(u32, DungeonId)> = self.world.dungeons.iter().map(|d| (d.progression, d.id)).collect();
        v.sort();
        v.into_iter().map(|(_, d)| d).collect()
    }

    /// Precomputed heading choice; solid or unknown cells are forbidden.
    pub fn heading_constraint(&self, d: DungeonId, p: Vec3, heading: f64) -> HeadingConstraint {
        let Some(t) = self.world.singularity_tables.iter().find(|t| t.dungeon == d) else {
            return HeadingConstraint::Forbidden;
        };
        match t.cell_of(p) {
            Some((ix, iz)) => t.entry(ix, iz, t.bucket_of(heading)),
            None => HeadingConstraint::Forbidden,
        }
    }

    /// Whether the table marks the cell under `p` as too low to fly.
    pub fn no_fly(&self, d: DungeonId, p: Vec3) -> bool {
        let Some(t) = self.world.singularity_tables.iter().find(|t| t.dungeon == d) else {
            return true;
        };
        t.cell_of(p).map_or(true, |(ix, iz)| t.no_fly[iz * t.nx as usize + ix])
    }
}
