use pcgmeta_core::voxel::{quantize_dungeon, Cell};
use pcgmeta_core::*;

use crate::worlds::room;
use crate::{ensure, Outcome};

fn corners(lo: Vec3, hi: Vec3) -> [Vec3; 8] {
    core::array::from_fn(|k| Vec3::new(if k & 1 == 0 { lo.x } else { hi.x }, if k & 2 == 0 { lo.y } else { hi.y }, if k & 4 == 0 { lo.z } else { hi.z }))
}

fn obb_corners(b: &Obb) -> [Vec3; 8] {
    let h = b.half_extents;
    core::array::from_fn(|k| {
        let s = |bit: usize| if k & bit == 0 { -1.0 } else { 1.0 };
        b.center + b.axes[0] * (s(1) * h.x) + b.axes[1] * (s(2) * h.y) + b.axes[2] * (s(4) * h.z)
    })
}

/// Separating-axis overlap from projected corner extents.
fn boxes_overlap(a: &[Vec3; 8], a_axes: [Vec3; 3], b: &[Vec3; 8], b_axes: [Vec3; 3]) -> bool {
    let mut axes: Vec<Vec3> = a_axes.iter().chain(&b_axes).copied().collect();
    for u in a_axes {
        for v in b_axes {
            axes.push(u.cross(v));
        }
    }
    axes.iter().filter(|ax| ax.length() > 1e-9).all(|ax| {
        let span = |pts: &[Vec3; 8]| pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.dot(*ax)), hi.max(p.dot(*ax))));
        let ((a0, a1), (b0, b1)) = (span(a), span(b));
        let slack = 1e-12 * ax.length();
        a1 + slack >= b0 && b1 + slack >= a0
    })
}

fn inside_footprint(d: &Dungeon, p: Vec3) -> bool {
    let v = &d.footprint.vertices;
    let cross = |i: usize| {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        (b.x - a.x) * (p.z - a.z) - (b.z - a.z) * (p.x - a.x)
    };
    let signs: Vec<f64> = (0..v.len()).map(cross).collect();
    signs.iter().all(|s| *s >= 0.0) || signs.iter().all(|s| *s <= 0.0)
}

/// Every cell of one dungeon against a brute-force box-vs-geometry oracle.
pub fn soundness() -> Outcome {
    let w = room(6, 2, 7.0, true, true, 0.03);
    let d = &w.dungeons[0];
    let s = &w.config.style;
    let g = quantize_dungeon(&w, d.id, s.voxel_size, 3).map_err(|e| e.to_string())?;
    ensure!(g.nx <= 64 && g.nz <= 64, "grid {}x{} exceeds 64x64", g.nx, g.nz);
    let volumes: Vec<([Vec3; 8], [Vec3; 3])> = w.elements.iter().map(|e| (obb_corners(&e.volume.obb), e.volume.obb.axes)).collect();
    let (mut solid, mut total, mut ring) = (0usize, 0usize, 0usize);
    for layer in 0..3u32 {
        for iz in 0..g.nz {
            for ix in 0..g.nx {
                let c = Cell { layer, ix, iz };
                let (lo, hi) = g.cell_box(c);
                let mid = (lo + hi) * 0.5;
                let outside = !(inside_footprint(d, mid) && mid.y >= d.floor_altitude() && mid.y <= d.ceiling_at(mid.x, mid.z));
                let cell = corners(lo, hi);
                let hit = volumes.iter().any(|(b, axes)| boxes_overlap(&cell, [Vec3::X, Vec3::Y, Vec3::Z], b, *axes));
                let expect = outside || hit;
                ensure!(g.is_solid(c) == expect, "cell {c:?}: grid {} oracle {expect}", g.is_solid(c));
                if ix == 0 || iz == 0 || ix == g.nx - 1 || iz == g.nz - 1 {
                    ensure!(g.is_solid(c), "boundary cell {c:?} is empty");
                    ring += 1;
                }
                solid += g.is_solid(c) as usize;
                total += 1;
            }
        }
    }
    Ok(format!("{}x{}x3 grid: {total} cells match ({solid} solid), {ring} boundary cells solid", g.nx, g.nz))
}
