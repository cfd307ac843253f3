use std::collections::BTreeSet;

use pcgmeta_core::lightmap::*;
use pcgmeta_core::metastore::MetaStore;
use pcgmeta_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::worlds::world;
use crate::{ensure, Outcome};

fn plane_mesh(origin: Vec3, u: Vec3, v: Vec3, size: f64) -> MeshBuffer {
    let poly = ConvexPolygon3::new(vec![origin, origin + u * size, origin + u * size + v * size, origin + v * size]);
    let mut m = MeshBuffer::new(Category::Wall, DungeonId(0));
    m.push_polygon(&poly);
    m
}

fn light(p: Vec3, i: f64) -> PointLight {
    PointLight { id: LightId(0), position: p, intensity: i, color: [1.0; 3], dungeon: DungeonId(0), source: ElementId(0) }
}

fn chart(id: u32, d: u32, w: u32, h: u32) -> Chart {
    Chart { element: ElementId(id), dungeon: DungeonId(d), group: 0, width: w, height: h, faces: Vec::new(), scale: 1.0, atlas: 0, rect: (0, 0, 0, 0) }
}

/// Cosine-weighted Monte Carlo occlusion by brute force over triangles.
fn ao_oracle(p: Vec3, n: Vec3, meshes: &[MeshBuffer], rays: usize, max: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let t = if n.x.abs() < 0.9 { n.cross(Vec3::X) } else { n.cross(Vec3::Y) }.normalize_or_zero();
    let b = n.cross(t);
    let o = p + n * 1e-4;
    let mut open = 0;
    for _ in 0..rays {
        let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
        let phi = 2.0 * std::f64::consts::PI * u2;
        let d = t * (u1.sqrt() * phi.cos()) + b * (u1.sqrt() * phi.sin()) + n * (1.0 - u1).sqrt();
        let hit = meshes.iter().any(|m| (0..m.triangle_count()).any(|i| ray_triangle(o, d, &m.triangle(i)).is_some_and(|s| s <= max)));
        open += !hit as usize;
    }
    open as f64 / rays as f64
}

fn gutters_ok(rects: &[(u32, u32, u32, u32)], size: u32) -> bool {
    rects.iter().enumerate().all(|(i, a)| {
        a.0 >= GUTTER
            && a.1 >= GUTTER
            && a.0 + a.2 + GUTTER <= size
            && a.1 + a.3 + GUTTER <= size
            && rects[i + 1..].iter().all(|b| {
                a.0 + a.2 + GUTTER <= b.0 || b.0 + b.2 + GUTTER <= a.0 || a.1 + a.3 + GUTTER <= b.1 || b.1 + b.3 + GUTTER <= a.1
            })
    })
}

pub fn analytics() -> Outcome {
    // Inverse-square direct light on a facing texel.
    let empty: [MeshBuffer; 0] = [];
    let none = RayScene::new(empty.iter().enumerate());
    let mut worst = 0.0f64;
    for (i, d) in [(1.0, 1.0), (12.0, 3.0), (40.0, 7.5), (5.0, 0.5)] {
        let v = direct_light(Vec3::ZERO, Vec3::Y, &[light(Vec3::Y * d, i)], &none, 0.0);
        for c in v {
            worst = worst.max((c - i / (d * d)).abs());
        }
    }
    ensure!(worst < 1e-6, "direct light off by {worst:e}");

    // Open plane: nothing occludes.
    let floor = plane_mesh(Vec3::new(-50.0, 0.0, -50.0), Vec3::Z, Vec3::X, 100.0);
    let open = RayScene::new([(0, &floor)]);
    for p in [Vec3::ZERO, Vec3::new(3.0, 0.0, -7.0), Vec3::new(-20.0, 0.0, 11.0)] {
        let ao = compute_ao(p, Vec3::Y, &open, 64, 4.0);
        ensure!(ao == 1.0, "open plane AO {ao} at {p:?}");
    }

    // 90 degree corner: floor x < 0 meets a wall at x = 0.
    let meshes = [
        plane_mesh(Vec3::new(-100.0, 0.0, -50.0), Vec3::Z, Vec3::X, 100.0),
        plane_mesh(Vec3::new(0.0, 0.0, -50.0), Vec3::Y, Vec3::Z, 100.0),
    ];
    let scene = RayScene::new(meshes.iter().enumerate());
    let p = Vec3::new(-1e-3, 0.0, 0.0);
    let ao = compute_ao(p, Vec3::Y, &scene, 64, 4.0);
    let oracle = ao_oracle(p, Vec3::Y, &meshes, 64 * 64, 4.0);
    ensure!((ao - 0.5).abs() <= 0.05, "corner AO {ao}");
    ensure!((ao - oracle).abs() <= 0.05, "corner AO {ao} vs oracle {oracle}");

    // Random chart sets pack disjoint with gutters.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut packed = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..40);
        let set: Vec<Chart> = (0..n).map(|i| chart(i, 0, rng.gen_range(1..60), rng.gen_range(1..60))).collect();
        if let Some(r) = pack_charts(&set, 256) {
            ensure!(gutters_ok(&r, 256), "overlapping or gutterless rects");
            ensure!(set.iter().zip(&r).all(|(c, r)| (c.width, c.height) == (r.2, r.3)), "rect sizes changed");
            packed += 1;
        }
    }
    ensure!(packed >= 50, "only {packed} of 100 sets fit");

    // Atlas membership follows progression order contiguously.
    let w = world("chain8");
    let order = MetaStore::new(&w).progression_order();
    let mut atlas_counts = Vec::new();
    for size in [256, 512, 2048] {
        let cfg = BakeConfig { atlas_size: size, ..Default::default() };
        let mut charts = build_charts(&w, &group_surfaces(&w), &cfg);
        let atlases = assign_atlases(&mut charts, &order, size).map_err(|e| format!("{e:?}"))?;
        let mut flat: Vec<DungeonId> = atlases.iter().flat_map(|a| a.dungeons.iter().copied()).collect();
        flat.dedup();
        ensure!(flat == order, "size {size}: atlas dungeons {flat:?} not contiguous in {order:?}");
        let mut seen = BTreeSet::new();
        for a in &atlases {
            let rects: Vec<_> = a.charts.iter().map(|&i| charts[i].rect).collect();
            ensure!(gutters_ok(&rects, size), "size {size}: atlas {} rects overlap", a.id);
            ensure!(a.charts.iter().all(|&i| seen.insert(i)), "chart placed twice");
        }
        ensure!(seen.len() == charts.len(), "size {size}: {} of {} charts placed", seen.len(), charts.len());
        atlas_counts.push(atlases.len());
    }
    Ok(format!(
        "direct max err {worst:.1e}, corner AO {ao:.3} (oracle {oracle:.3}), {packed}/100 random sets packed, atlases {atlas_counts:?}"
    ))
}
