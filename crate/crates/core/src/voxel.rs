//! Layered occupancy grids over each dungeon's region.
//!
//! A cell is solid when its box touches any element volume or its center
//! lies outside the dungeon's free space (footprint prism plus incident
//! passages). Grids share one global xz lattice so neighbouring dungeons
//! line up cell for cell.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::{intersects, BoundingVolume};
use crate::math::{self, Vec3};
use crate::world::{lattice, DungeonId, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub layer: u32,
    pub ix: u32,
    pub iz: u32,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum VoxelError {
    #[error("voxel size must be positive")]
    VoxelSize,
    #[error("at least one layer is required")]
    Layers,
    #[error("unknown dungeon {0}")]
    UnknownDungeon(u32),
    #[error("voxel size {0} exceeds the footprint extent {1}")]
    TooCoarse(f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayeredGrid {
    pub dungeon: DungeonId,
    /// Min corner; `y` is the dungeon floor altitude.
    pub origin: Vec3,
    pub voxel_size: f64,
    pub layer_altitudes: Vec<f64>,
    /// Half height of each layer's slab.
    pub layer_half: f64,
    pub nx: u32,
    pub nz: u32,
    /// One bitset per layer, row-major by z then x.
    pub occupancy: Vec<Vec<u64>>,
}

impl LayeredGrid {
    pub fn empty(dungeon: DungeonId, voxel_size: f64) -> Self {
        LayeredGrid {
            dungeon,
            origin: Vec3::ZERO,
            voxel_size,
            layer_altitudes: Vec::new(),
            layer_half: 0.0,
            nx: 0,
            nz: 0,
            occupancy: Vec::new(),
        }
    }

    /// Grid with explicit occupancy, `solid(layer, ix, iz)`.
    pub fn from_fn(
        dungeon: DungeonId,
        origin: Vec3,
        voxel_size: f64,
        layer_altitudes: Vec<f64>,
        layer_half: f64,
        nx: u32,
        nz: u32,
        solid: impl Fn(u32, u32, u32) -> bool,
    ) -> Self {
        let words = (nx as usize * nz as usize).div_ceil(64);
        let layers = layer_altitudes.len();
        let mut g = LayeredGrid {
            dungeon,
            origin,
            voxel_size,
            layer_altitudes,
            layer_half,
            nx,
            nz,
            occupancy: vec![vec![0u64; words]; layers],
        };
        for layer in 0..layers as u32 {
            for iz in 0..nz {
                for ix in 0..nx {
                    if solid(layer, ix, iz) {
                        g.set_solid(Cell { layer, ix, iz }, true);
                    }
                }
            }
        }
        g
    }

    /// Cells whose whole 3x3 in-layer neighbourhood is empty stay empty;
    /// everything else becomes solid.
    pub fn dilated(&self) -> LayeredGrid {
        let mut out = self.clone();
        for layer in 0..self.layer_altitudes.len() as u32 {
            for iz in 0..self.nz as i64 {
                for ix in 0..self.nx as i64 {
                    let blocked = (-1..=1).any(|dz| (-1..=1).any(|dx| self.is_solid_at(layer, ix + dx, iz + dz)));
                    out.set_solid(Cell { layer, ix: ix as u32, iz: iz as u32 }, blocked);
                }
            }
        }
        out
    }

    /// Spacing between layers (the slab height for a single layer).
    pub fn layer_spacing(&self) -> f64 {
        if self.layer_altitudes.len() > 1 {
            self.layer_altitudes[1] - self.layer_altitudes[0]
        } else {
            2.0 * self.layer_half
        }
    }

    /// Cells crossed by the horizontal segment `a`-`b` (closed: cells only
    /// touched at a corner are included).
    pub fn cells_on_segment(&self, a: Vec3, b: Vec3) -> Vec<(i64, i64)> {
        let v = self.voxel_size;
        segment_cells(
            (a.x - self.origin.x) / v,
            (a.z - self.origin.z) / v,
            (b.x - self.origin.x) / v,
            (b.z - self.origin.z) / v,
        )
    }

    pub fn cells_per_layer(&self) -> usize {
        self.nx as usize * self.nz as usize
    }

    #[inline]
    fn bit(&self, c: Cell) -> usize {
        c.iz as usize * self.nx as usize + c.ix as usize
    }

    pub fn in_range(&self, c: Cell) -> bool {
        (c.layer as usize) < self.layer_altitudes.len() && c.ix < self.nx && c.iz < self.nz
    }

    pub fn is_solid(&self, c: Cell) -> bool {
        let b = self.bit(c);
        self.occupancy[c.layer as usize][b / 64] >> (b % 64) & 1 == 1
    }

    /// Out-of-range cells count as solid.
    pub fn is_solid_at(&self, layer: u32, ix: i64, iz: i64) -> bool {
        if ix < 0 || iz < 0 || ix >= self.nx as i64 || iz >= self.nz as i64 || layer as usize >= self.layer_altitudes.len() {
            return true;
        }
        self.is_solid(Cell { layer, ix: ix as u32, iz: iz as u32 })
    }

    pub fn set_solid(&mut self, c: Cell, solid: bool) {
        let b = self.bit(c);
        let w = &mut self.occupancy[c.layer as usize][b / 64];
        if solid {
            *w |= 1 << (b % 64);
        } else {
            *w &= !(1 << (b % 64));
        }
    }

    pub fn solid_count(&self) -> usize {
        self.occupancy.iter().flatten().map(|w| w.count_ones() as usize).sum()
    }

    /// Floor-division indexing; the layer is the nearest altitude.
    pub fn cell_of(&self, p: Vec3) -> Option<Cell> {
        if self.layer_altitudes.is_empty() {
            return None;
        }
        let fx = math::floor((p.x - self.origin.x) / self.voxel_size);
        let fz = math::floor((p.z - self.origin.z) / self.voxel_size);
        if !(fx >= 0.0 && fz >= 0.0 && fx < self.nx as f64 && fz < self.nz as f64) {
            return None;
        }
        let lo = self.layer_altitudes[0] - self.layer_half;
        let hi = self.layer_altitudes[self.layer_altitudes.len() - 1] + self.layer_half;
        if !(p.y >= lo && p.y <= hi) {
            return None;
        }
        let mut layer = 0;
        for (k, a) in self.layer_altitudes.iter().enumerate() {
            if (p.y - a).abs() < (p.y - self.layer_altitudes[layer]).abs() {
                layer = k;
            }
        }
        Some(Cell { layer: layer as u32, ix: fx as u32, iz: fz as u32 })
    }

    pub fn world_of(&self, c: Cell) -> Vec3 {
        Vec3::new(
            self.origin.x + (c.ix as f64 + 0.5) * self.voxel_size,
            self.layer_altitudes[c.layer as usize],
            self.origin.z + (c.iz as f64 + 0.5) * self.voxel_size,
        )
    }

    pub fn cell_box(&self, c: Cell) -> (Vec3, Vec3) {
        let v = self.voxel_size;
        let y = self.layer_altitudes[c.layer as usize];
        let min = Vec3::new(self.origin.x + c.ix as f64 * v, y - self.layer_half, self.origin.z + c.iz as f64 * v);
        (min, min + Vec3::new(v, 2.0 * self.layer_half, v))
    }

    /// Grid line test with supercover traversal; both cells at exact corner
    /// crossings must be empty.
    pub fn line_of_sight(&self, a: Cell, b: Cell) -> bool {
        if a.layer != b.layer {
            return false;
        }
        supercover(a.ix as i64, a.iz as i64, b.ix as i64, b.iz as i64)
            .into_iter()
            .all(|(x, z)| !self.is_solid_at(a.layer, x, z))
    }
}

/// All cells touched by the segment between two cell centers.
pub fn supercover(x0: i64, z0: i64, x1: i64, z1: i64) -> Vec<(i64, i64)> {
    let (dx, dz) = ((x1 - x0).abs(), (z1 - z0).abs());
    let (sx, sz) = ((x1 - x0).signum(), (z1 - z0).signum());
    let (mut x, mut z) = (x0, z0);
    let mut out = vec![(x, z)];
    let (mut ix, mut iz) = (0i64, 0i64);
    while ix < dx || iz < dz {
        // compare the parameter of the next x crossing with the next z crossing
        let lhs = (1 + 2 * ix) * dz;
        let rhs = (1 + 2 * iz) * dx;
        if lhs == rhs {
            out.push((x + sx, z));
            out.push((x, z + sz));
            x += sx;
            z += sz;
            ix += 1;
            iz += 1;
        } else if lhs < rhs {
            x += sx;
            ix += 1;
        } else {
            z += sz;
            iz += 1;
        }
        out.push((x, z));
    }
    out
}

/// Grid traversal of a segment given in cell units.
pub fn segment_cells(ax: f64, az: f64, bx: f64, bz: f64) -> Vec<(i64, i64)> {
    let (mut ix, mut iz) = (math::floor(ax) as i64, math::floor(az) as i64);
    let (ex, ez) = (math::floor(bx) as i64, math::floor(bz) as i64);
    let (dx, dz) = (bx - ax, bz - az);
    let sx: i64 = if dx > 0.0 { 1 } else { -1 };
    let sz: i64 = if dz > 0.0 { 1 } else { -1 };
    let next = |i: i64, s: i64, a: f64, d: f64| {
        if d == 0.0 {
            f64::INFINITY
        } else {
            ((i + (s > 0) as i64) as f64 - a) / d
        }
    };
    let mut tx = next(ix, sx, ax, dx);
    let mut tz = next(iz, sz, az, dz);
    let (tdx, tdz) = (if dx == 0.0 { f64::INFINITY } else { 1.0 / dx.abs() }, if dz == 0.0 { f64::INFINITY } else { 1.0 / dz.abs() });
    let mut out = vec![(ix, iz)];
    let limit = 4 * ((ex - ix).abs() + (ez - iz).abs() + 4);
    for _ in 0..limit {
        if (ix, iz) == (ex, ez) || tx.min(tz) > 1.0 {
            break;
        }
        if (tx - tz).abs() <= 1e-12 {
            out.push((ix + sx, iz));
            out.push((ix, iz + sz));
            ix += sx;
            iz += sz;
            tx += tdx;
            tz += tdz;
        } else if tx < tz {
            ix += sx;
            tx += tdx;
        } else {
            iz += sz;
            tz += tdz;
        }
        out.push((ix, iz));
    }
    out
}

/// Absolute layer altitudes for a dungeon floor.
pub fn layer_altitudes(floor: f64, range: (f64, f64), layers: usize) -> (Vec<f64>, f64) {
    if layers <= 1 {
        return (vec![floor + (range.0 + range.1) * 0.5], 0.6);
    }
    let step = (range.1 - range.0) / (layers - 1) as f64;
    let alts = (0..layers).map(|k| floor + range.0 + step * k as f64).collect();
    (alts, (step * 0.5).max(0.4))
}

pub fn quantize_dungeon(world: &World, d: DungeonId, voxel_size: f64, layers: usize) -> Result<LayeredGrid, VoxelError> {
    if !(voxel_size > 0.0) {
        return Err(VoxelError::VoxelSize);
    }
    if layers == 0 {
        return Err(VoxelError::Layers);
    }
    let dg = world.dungeon(d).ok_or(VoxelError::UnknownDungeon(d.0))?;
    let fb = dg.bounds_xz();
    let extent = (fb.2 - fb.0).min(fb.3 - fb.1);
    if voxel_size > extent {
        return Err(VoxelError::TooCoarse(voxel_size, extent));
    }
    let ((x0, z0), nx, nz) = lattice(world.region_bounds_xz(d), voxel_size);
    let (layer_altitudes, layer_half) = layer_altitudes(dg.floor_altitude(), world.config.style.camera_altitude, layers);
    let words = (nx as usize * nz as usize).div_ceil(64);
    let mut grid = LayeredGrid {
        dungeon: d,
        origin: Vec3::new(x0, dg.floor_altitude(), z0),
        voxel_size,
        layer_altitudes,
        layer_half,
        nx,
        nz,
        occupancy: vec![vec![0u64; words]; layers],
    };
    for layer in 0..layers as u32 {
        for iz in 0..nz {
            for ix in 0..nx {
                let c = Cell { layer, ix, iz };
                if !world.in_dungeon_free_region(d, grid.world_of(c), 0.0) {
                    grid.set_solid(c, true);
                }
            }
        }
    }
    for e in &world.elements {
        stamp_volume(&mut grid, &e.volume);
    }
    Ok(grid)
}

/// Marks every cell whose box overlaps `v`.
pub fn stamp_volume(grid: &mut LayeredGrid, v: &BoundingVolume) {
    let (lo, hi) = v.obb.aabb();
    let vs = grid.voxel_size;
    let ix0 = math::floor((lo.x - grid.origin.x) / vs).max(0.0);
    let iz0 = math::floor((lo.z - grid.origin.z) / vs).max(0.0);
    let ix1 = math::floor((hi.x - grid.origin.x) / vs).min(grid.nx as f64 - 1.0);
    let iz1 = math::floor((hi.z - grid.origin.z) / vs).min(grid.nz as f64 - 1.0);
    if ix1 < ix0 || iz1 < iz0 {
        return;
    }
    for layer in 0..grid.layer_altitudes.len() as u32 {
        let y = grid.layer_altitudes[layer as usize];
        if hi.y < y - grid.layer_half || lo.y > y + grid.layer_half {
            continue;
        }
        for iz in iz0 as u32..=iz1 as u32 {
            for ix in ix0 as u32..=ix1 as u32 {
                let c = Cell { layer, ix, iz };
                if grid.is_solid(c) {
                    continue;
                }
                let (bmin, bmax) = grid.cell_box(c);
                if intersects(&BoundingVolume::from_aabb(bmin, bmax), v) {
                    grid.set_solid(c, true);
                }
            }
        }
    }
}

/// Grids for every dungeon with the world's default settings.
pub fn quantize_world(world: &World) -> Result<Vec<LayeredGrid>, VoxelError> {
    let s = &world.config.style;
    world
        .dungeons
        .iter()
        .map(|d| quantize_dungeon(world, d.id, s.voxel_size, s.grid_layers as usize))
        .collect()
}
