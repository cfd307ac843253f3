mod common;

use pcgmeta_core::geometry::PlaneRole;
use pcgmeta_core::math::Vec3;
use pcgmeta_core::metastore::{MetaError, MetaStore};
use pcgmeta_core::world::*;
use pcgmeta_core::worldgen::generate_world;
use rand::{Rng, SeedableRng};

/// Independent containment: 2D point-in-convex-polygon on footprint
/// vertices, ceiling plane evaluated directly.
fn in_prism(d: &Dungeon, p: Vec3) -> bool {
    let v = &d.footprint.vertices;
    let n = v.len();
    let inside = (0..n).all(|i| {
        let (a, b) = (v[i], v[(i + 1) % n]);
        // footprint winds counter-clockwise about +y
        let cross = (b.z - a.z) * (p.x - a.x) - (b.x - a.x) * (p.z - a.z);
        cross >= 0.0
    });
    let n = d.ceiling.normal;
    let ceil = (d.ceiling.offset - n.x * p.x - n.z * p.z) / n.y;
    inside && p.y >= d.floor_altitude() && p.y <= ceil
}

fn in_passage(c: &Connector, p: Vec3) -> bool {
    let dir = (c.end.flat() - c.start.flat()).normalize_or_zero();
    let rel = p.flat() - c.start.flat();
    let u = rel.dot(dir);
    let v = rel.dot(Vec3::new(-dir.z, 0.0, dir.x));
    if !(0.0..=c.length).contains(&u) {
        return false;
    }
    let t = u / c.length;
    let w = c.widths.0 + (c.widths.1 - c.widths.0) * t;
    let ceil = (c.start.y + c.heights.0) + ((c.end.y + c.heights.1) - (c.start.y + c.heights.0)) * t;
    v.abs() <= w / 2.0 && p.y >= c.floor_at(u) && p.y <= ceil
}

fn brute(w: &World, p: Vec3) -> Option<DungeonId> {
    let hits: Vec<DungeonId> = w.dungeons.iter().filter(|d| in_prism(d, p)).map(|d| d.id).collect();
    assert!(hits.len() <= 1, "prisms overlap at {p:?}");
    if let Some(d) = hits.first() {
        return Some(*d);
    }
    for c in &w.connectors {
        if in_passage(c, p) {
            let (a, b) = c.endpoints;
            let da = p.flat().distance(w.dungeons[a.index()].center.flat());
            let db = p.flat().distance(w.dungeons[b.index()].center.flat());
            return Some(if da <= db { a } else { b });
        }
    }
    None
}

#[test]
fn dungeon_of_point_examples() {
    let w = common::world("chain8");
    let m = MetaStore::new(&w);
    for d in &w.dungeons {
        let c = d.center;
        let mid = c.with_y((d.floor_altitude() + d.ceiling_at(c.x, c.z)) / 2.0);
        assert_eq!(m.dungeon_of_point(mid), Some(d.id));
        assert_eq!(m.dungeon_of_point(c.with_y(c.y + 100.0)), None);
    }
}

#[test]
fn dungeon_of_point_matches_brute_force() {
    for name in ["chain8", "ring", "multilevel"] {
        let w = common::world(name);
        let m = MetaStore::new(&w);
        let mut rng = rand::rngs::StdRng::seed_from_u64(17);
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for d in &w.dungeons {
            let r = w.region_bounds_xz(d.id);
            b = (b.0.min(r.0), b.1.min(r.1), b.2.max(r.2), b.3.max(r.3));
        }
        let mut inside = 0;
        for i in 0..1000 {
            // half the samples inside passages so the tie rule gets exercised
            let p = if i % 2 == 0 {
                let c = &w.connectors[rng.gen_range(0..w.connectors.len())];
                let u = rng.gen_range(0.0..c.length);
                let v = rng.gen_range(-0.5..0.5) * c.width_at(u);
                c.point(u, v, rng.gen_range(c.floor_at(u)..c.ceiling_at(u)))
            } else {
                Vec3::new(rng.gen_range(b.0..b.2), rng.gen_range(-1.0..9.0), rng.gen_range(b.1..b.3))
            };
            let got = m.dungeon_of_point(p);
            assert_eq!(got, brute(&w, p), "{name} point {p:?}");
            inside += got.is_some() as usize;
        }
        assert!(inside > 500);
    }
}

#[test]
fn tagging() {
    let w = common::world("chain8");
    let mut m = MetaStore::new(&w);
    let e = EntityId(4);
    let d0 = &w.dungeons[0];
    assert_eq!(m.tag_entity(e, d0.center.with_y(1.0)), Ok(d0.id));
    assert_eq!(m.tag_of(e), Some(d0.id));
    assert_eq!(m.tag_entity(e, Vec3::new(0.0, 500.0, 0.0)), Err(MetaError::Unresolved));
    assert_eq!(m.tag_of(e), Some(d0.id));
    m.untag_entity(e);
    assert_eq!(m.tag_of(e), None);
}

#[test]
fn crossing_a_gate_retags_once() {
    let w = common::world("chain8");
    let mut m = MetaStore::new(&w);
    let c = w.connectors.iter().find(|c| c.kind == ConnectorKind::Gate).unwrap();
    let (a, b) = c.endpoints;
    let (pa, pb) = (w.dungeons[a.index()].center, w.dungeons[b.index()].center);
    let e = EntityId(1);
    let mut changes = 0;
    let mut last = m.tag_entity(e, pa.with_y(pa.y + 1.0)).unwrap();
    assert_eq!(last, a);
    for k in 1..=400 {
        let p = pa.lerp(pb, k as f64 / 400.0);
        let d = m.tag_entity(e, p.with_y(p.y + 1.0)).unwrap();
        if d != last {
            changes += 1;
            last = d;
        }
    }
    assert_eq!(changes, 1);
    assert_eq!(last, b);
}

#[test]
fn nearest_plane_apothem_and_scan() {
    let w = generate_world(&common::single_room(7, 3, false)).unwrap();
    let m = MetaStore::new(&w);
    let d = &w.dungeons[0];
    let p = d.center.with_y(1.0);
    let (pl, dist) = m.nearest_plane(p, d.id, &[PlaneRole::Wall]).unwrap();
    assert_eq!(pl.role, PlaneRole::Wall);
    assert!((dist - d.apothem).abs() < 1e-6);
    let on = d.walls[2].project(p);
    assert!(m.nearest_plane(on, d.id, &[PlaneRole::Wall]).unwrap().1.abs() < 1e-9);
    assert!(m.nearest_plane(p, d.id, &[PlaneRole::Step]).is_none());

    let w = common::world("multilevel");
    let m = MetaStore::new(&w);
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let roles = [PlaneRole::Wall, PlaneRole::Side, PlaneRole::Step];
    for _ in 0..300 {
        let d = &w.dungeons[rng.gen_range(0..w.dungeons.len())];
        let p = d.center + Vec3::new(rng.gen_range(-9.0..9.0), rng.gen_range(0.0..5.0), rng.gen_range(-9.0..9.0));
        let got = m.nearest_plane(p, d.id, &roles).unwrap().1;
        let all = d.elements.iter().flat_map(|e| w.element(*e).planes.iter()).filter(|pl| roles.contains(&pl.role));
        let best = all.map(|pl| (pl.normal.dot(p) - pl.offset).abs()).fold(f64::INFINITY, f64::min);
        assert_eq!(got, best);
    }
}

#[test]
fn height_queries() {
    let w = common::world("chain8");
    let m = MetaStore::new(&w);
    let mut rng = rand::rngs::StdRng::seed_from_u64(8);
    for d in &w.dungeons {
        for _ in 0..50 {
            let p = d.center + Vec3::new(rng.gen_range(-5.0..5.0), 0.0, rng.gen_range(-5.0..5.0));
            if d.footprint_contains_xz(p.x, p.z, 0.0) {
                assert_eq!(m.height_at(d.id, p.x, p.z), Some(d.floor_altitude()));
            }
        }
        assert_eq!(m.height_at(d.id, d.center.x + 1000.0, d.center.z), None);
    }
    let w = common::world("multilevel");
    let m = MetaStore::new(&w);
    for c in w.connectors.iter().filter(|c| c.kind == ConnectorKind::Stairs) {
        let s = c.stairs.as_ref().unwrap();
        let (a, _) = c.endpoints;
        let mut last = f64::NEG_INFINITY;
        for k in 0..=300 {
            let u = c.length * k as f64 / 300.0;
            let p = c.point(u, 0.3, 0.0);
            let h = m.height_at(a, p.x, p.z).unwrap();
            // direct step geometry: count risers passed
            let passed = (0..=s.steps).filter(|j| u >= s.first_step_at + s.run * *j as f64).count();
            let expect = if passed == s.steps as usize + 1 { c.end.y } else { c.start.y + s.rise * passed as f64 };
            assert!((h - expect).abs() < 1e-9, "u {u}: {h} vs {expect}");
            let signed = if c.end.y > c.start.y { h } else { -h };
            assert!(signed >= last);
            last = signed;
        }
    }
}

#[test]
fn graph_queries() {
    let w = common::world("chain8");
    let m = MetaStore::new(&w);
    assert_eq!(m.neighbors_of(DungeonId(3)).unwrap().len(), 2);
    assert!(m.neighbors_of(DungeonId(99)).is_none());
    let order = m.progression_order();
    assert_eq!(order.len(), w.dungeons.len());
    let mut sorted = order.clone();
    sorted.sort();
    assert_eq!(sorted, (0..8).map(DungeonId).collect::<Vec<_>>());
    for w in [common::world("ring"), common::world("multilevel")] {
        let m = MetaStore::new(&w);
        for a in &w.dungeons {
            for (_, b) in m.neighbors_of(a.id).unwrap() {
                assert!(m.neighbors_of(b).unwrap().iter().any(|(_, x)| *x == a.id));
            }
        }
    }
}

#[test]
fn heading_lookup_matches_recomputation() {
    let w = common::world("ring");
    let m = MetaStore::new(&w);
    let d = &w.dungeons[0];
    for h in 0..16 {
        assert_eq!(m.heading_constraint(d.id, d.center.with_y(2.4), h as f64 * 0.39), HeadingConstraint::Free);
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(21);
    let grids: Vec<_> = pcgmeta_core::voxel::quantize_world(&w).unwrap();
    let mut checked = 0;
    while checked < 500 {
        let d = &w.dungeons[rng.gen_range(0..w.dungeons.len())];
        let p = d.center + Vec3::new(rng.gen_range(-8.0..8.0), 2.4, rng.gen_range(-8.0..8.0));
        let heading = rng.gen_range(-7.0..7.0);
        let got = m.heading_constraint(d.id, p, heading);
        let g = &grids[d.id.index()];
        let Some(mut cell) = g.cell_of(p) else { continue };
        cell.layer = g.layer_altitudes.len() as u32 / 2;
        if g.is_solid(cell) {
            assert_eq!(got, HeadingConstraint::Forbidden);
        } else {
            let meshes: Vec<_> = pcgmeta_core::worldgen::probe_meshes(&w, d.id).into_iter().map(|(_, m)| m.clone()).collect();
            let cast = |o: Vec3, dir: Vec3, t: f64| pcgmeta_core::geometry::ray_cast_within(o, dir, &meshes, t).map(|h| h.t);
            let b = (heading.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * 16.0).round() as usize % 16;
            let angle = b as f64 * std::f64::consts::TAU / 16.0;
            assert_eq!(got, pcgmeta_core::worldgen::classify_heading(&cast, g.world_of(cell), angle));
        }
        checked += 1;
    }
}
