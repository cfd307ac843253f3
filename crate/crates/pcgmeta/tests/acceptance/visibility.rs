use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use pcgmeta_core::metastore::MetaStore;
use pcgmeta_core::pvs::*;
use pcgmeta_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::worlds::world;
use crate::{ensure, Outcome};

const FOV: f64 = 1.2;
const ASPECT: f64 = 16.0 / 9.0;

fn random_ray(rng: &mut ChaCha8Rng, look: Vec3) -> Vec3 {
    let (right, up) = view_basis(look);
    let (h, v) = half_angles(FOV, ASPECT);
    let x = rng.gen_range(-1.0..1.0) * h.tan();
    let y = rng.gen_range(-1.0..1.0) * v.tan();
    (look + right * x + up * y).normalize_or_zero()
}

/// Camera poses with a clear 0.35 sphere inside some dungeon; half of them
/// aimed at a passage.
fn sample_poses(w: &World, n: usize, seed: u64) -> Vec<ViewPose> {
    let store = MetaStore::new(w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let d = &w.dungeons[rng.gen_range(0..w.dungeons.len())];
        let r = rng.gen_range(0.0..d.apothem);
        let p = (d.center + Vec3::from_yaw(rng.gen_range(0.0..6.3)) * r).with_y(d.floor_altitude() + rng.gen_range(1.0..3.5));
        if store.dungeon_of_point(p).is_none() || w.elements.iter().any(|e| sphere_intersects_volume(p, 0.35, &e.volume)) {
            continue;
        }
        let look = if rng.gen_bool(0.5) && !d.connectors.is_empty() {
            let c = w.connector(d.connectors[rng.gen_range(0..d.connectors.len())]);
            (c.portal.centroid() - p).normalize_or_zero()
        } else {
            Vec3::from_yaw(rng.gen_range(0.0..6.3)).with_y(rng.gen_range(-0.5..0.2)).normalize_or_zero()
        };
        out.push(ViewPose { position: p, look, fov: FOV, aspect: ASPECT });
    }
    out
}

/// Rays cast against the rendered geometry must only hit elements in the
/// visible set.
pub fn soundness() -> Outcome {
    let mut report = Vec::new();
    for (name, poses, seed) in [("chain8", 17, 10), ("ring", 17, 11), ("multilevel", 16, 12)] {
        let t0 = Instant::now();
        let w = world(name);
        let store = MetaStore::new(&w);
        let scene = RayScene::new(w.elements.iter().map(|e| (e.deploy_mesh.index(), &w.meshes[e.deploy_mesh.index()])));
        let owner: BTreeMap<usize, ElementId> = w.elements.iter().map(|e| (e.deploy_mesh.index(), e.id)).collect();
        let cfg = PvsConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 99);
        let (mut hits, mut chained) = (0usize, 0usize);
        for pose in sample_poses(&w, poses, seed) {
            let set = compute_visible_set(&pose, &w, &store, &DoorStates::default(), &[], &cfg).map_err(|e| format!("{name}: {e:?}"))?;
            chained += !set.chain.is_empty() as usize;
            for _ in 0..10_000 {
                if let Some(hit) = scene.cast(pose.position, random_ray(&mut rng, pose.look), f64::INFINITY) {
                    let e = owner[&hit.mesh];
                    ensure!(set.statics.binary_search(&e).is_ok(), "{name}: ray from {:?} hit culled element {e:?}", pose.position);
                    hits += 1;
                }
            }
        }
        let secs = t0.elapsed().as_secs_f64();
        ensure!(secs < 60.0, "{name} took {secs:.1} s");
        ensure!(chained > 0, "{name}: no pose looked through a portal");
        report.push(format!("{name} {poses} poses/{hits} hits/{secs:.1} s"));
    }
    Ok(format!("0 misses; {}", report.join(", ")))
}

fn pose_toward(w: &World, d: DungeonId, next: DungeonId) -> ViewPose {
    let c = w.connectors.iter().find(|c| c.other(d) == Some(next)).unwrap();
    let from = w.dungeon(d).unwrap();
    let p = from.center.with_y(from.floor_altitude() + 2.0);
    ViewPose { position: p, look: (c.portal.centroid() - p).normalize_or_zero(), fov: FOV, aspect: ASPECT }
}

/// Facing away from every portal shows one dungeon; chains respect the depth
/// cap; the cyclic world terminates.
pub fn locality() -> Outcome {
    let w = world("chain8");
    let store = MetaStore::new(&w);
    let cfg = PvsConfig::default();
    let doors = DoorStates::default();
    let order = store.progression_order();
    let mut away_checked = 0;
    let mut max_depth = 0;
    for &d in &order {
        let dg = w.dungeon(d).unwrap();
        let p = dg.center.with_y(dg.floor_altitude() + 2.0);
        // Look away from all portals: opposite the mean portal direction,
        // accepted only when every portal centroid is behind the camera.
        let mean = dg.connectors.iter().fold(Vec3::ZERO, |a, c| a + (w.connector(*c).portal.centroid() - p).flat().normalize_or_zero());
        let look = (-mean).normalize_or_zero();
        if look.length() < 0.5 || dg.connectors.iter().any(|c| w.connector(*c).portal.vertices.iter().any(|v| (*v - p).dot(look) > 0.0)) {
            continue;
        }
        let pose = ViewPose { position: p, look, fov: FOV, aspect: ASPECT };
        let set = compute_visible_set(&pose, &w, &store, &doors, &[], &cfg).map_err(|e| format!("{e:?}"))?;
        let seen: BTreeSet<DungeonId> = set.statics.iter().map(|e| w.element(*e).dungeon).collect();
        ensure!(seen.len() == 1 && seen.contains(&d) && set.chain.is_empty(), "facing away in {d:?} sees {seen:?}");
        away_checked += 1;
    }
    ensure!(away_checked >= 2, "only {away_checked} dungeons allow facing away from every portal");
    // Facing along the chain from each dungeon toward the next.
    for pair in order.windows(2) {
        let pose = pose_toward(&w, pair[0], pair[1]);
        let set = compute_visible_set(&pose, &w, &store, &doors, &[], &cfg).map_err(|e| format!("{e:?}"))?;
        ensure!(!set.chain.is_empty(), "{:?} toward {:?}: empty chain", pair[0], pair[1]);
        ensure!(set.chain.iter().all(|c| c.depth <= cfg.depth_cap), "depth cap exceeded");
        ensure!(set.chain.len() <= cfg.chain_bound as usize, "chain bound exceeded");
        max_depth = max_depth.max(set.chain.iter().map(|c| c.depth).max().unwrap_or(0));
    }
    // Cyclic world: wide views under several caps all terminate within bounds.
    let ring = world("ring");
    let rs = MetaStore::new(&ring);
    let mut ring_sets = 0;
    for cfg in [PvsConfig::default(), PvsConfig { depth_cap: 3, ..Default::default() }, PvsConfig { chain_bound: 2, ..Default::default() }] {
        for pose in sample_poses(&ring, 30, 21) {
            let wide = ViewPose { fov: 2.8, aspect: 1.0, ..pose };
            let set = compute_visible_set(&wide, &ring, &rs, &doors, &[], &cfg).map_err(|e| format!("{e:?}"))?;
            ensure!(set.chain.iter().all(|c| c.depth <= cfg.depth_cap), "ring: depth cap exceeded");
            ensure!(set.chain.len() <= cfg.chain_bound as usize, "ring: chain bound exceeded");
            ring_sets += 1;
        }
    }
    Ok(format!(
        "{away_checked} dungeons see only themselves facing away, max chain depth {max_depth} <= {}, {ring_sets} ring sets terminate",
        cfg.depth_cap
    ))
}
