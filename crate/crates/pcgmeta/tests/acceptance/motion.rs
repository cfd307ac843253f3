use pcgmeta_core::metastore::MetaStore;
use pcgmeta_core::npc::*;
use pcgmeta_core::voxel::quantize_world;
use pcgmeta_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::worlds::{dead_end, room, world};
use crate::{ensure, Outcome};

const DT: f64 = 1.0 / 60.0;

fn player_at(p: Vec3, d: DungeonId) -> AgentState {
    AgentState::new(EntityId(0), AgentKind::Player, p, 0.0, d)
}

/// Three-distance rule by brute-force rays against every obstacle face of
/// the dungeon and its passages.
fn rule(w: &World, d: DungeonId, p: Vec3, heading: Vec3, bp: &BatParams) -> bool {
    let dg = w.dungeon(d).unwrap();
    let dist = |dir: Vec3| {
        let mut best = f64::INFINITY;
        for e in &w.elements {
            let mine = e.dungeon == d || e.connector.is_some_and(|c| dg.connectors.contains(&c));
            if mine && e.category.is_obstacle() {
                for t in e.faces.iter().flat_map(|f| f.fan()) {
                    if let Some(t) = ray_triangle(p, dir, &t) {
                        best = best.min(t);
                    }
                }
            }
        }
        best
    };
    let h = heading.flat().normalize_or_zero();
    dist(h) < bp.d_front && dist(Vec3::new(h.z, 0.0, -h.x)) < bp.d_side && dist(Vec3::new(-h.z, 0.0, h.x)) < bp.d_side
}

fn is_flip(d: &Decision) -> bool {
    matches!(d, Decision::FlipTurn(_))
}

/// A bat flying into a dead end flips exactly at the first tick the rule
/// holds; 500 random states agree with the rule.
pub fn bat_flip_turn() -> Outcome {
    let (w, end, n) = dead_end();
    let g = quantize_world(&w).map_err(|e| e.to_string())?;
    let nw = NpcWorld::new(&w, &g);
    let store = MetaStore::new(&w);
    let bp = BatParams::default();
    let d = DungeonId(0);
    let mut bat = AgentState::new(EntityId(1), AgentKind::Bat, end + n * 4.0 + Vec3::Y * 2.0, (-n).yaw(), d);
    let lure = player_at(end - n * 3.0, d);
    let (mut first_rule, mut first_flip) = (None, None);
    for t in 0..400 {
        let r = rule(&w, d, bat.position, bat.heading, &bp);
        let (next, dec) = bat_update(&bat, &lure, &nw, &store, &bp, DT).map_err(|e| format!("{e:?}"))?;
        ensure!(is_flip(&dec) == r, "dead end tick {t}: decision {dec:?}, rule {r}");
        if r && first_rule.is_none() {
            first_rule = Some(t);
        }
        if is_flip(&dec) && first_flip.is_none() {
            first_flip = Some(t);
        }
        bat = next;
    }
    ensure!(first_rule.is_some() && first_rule == first_flip, "first rule {first_rule:?}, first flip {first_flip:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let lat = Vec3::new(-n.z, 0.0, n.x);
    let dg = &w.dungeons[0];
    let (mut checked, mut flips) = (0, 0);
    while checked < 500 {
        // Half the states inside the alley, half anywhere in the room.
        let p = if checked % 2 == 0 {
            end + n * rng.gen_range(0.35..4.5) + lat * rng.gen_range(-0.25..0.25) + Vec3::Y * 2.0
        } else {
            dg.center + Vec3::from_yaw(rng.gen_range(0.0..6.3)) * rng.gen_range(0.0..dg.apothem) + Vec3::Y * 2.0
        };
        if !nw.sphere_free(d, p, bp.radius) || store.dungeon_of_point(p).is_none() {
            continue;
        }
        let yaw = if checked % 2 == 0 { (-n).yaw() + rng.gen_range(-0.6..0.6) } else { rng.gen_range(0.0..6.3) };
        let bat = AgentState { mode: AgentMode::Pursue, ..AgentState::new(EntityId(1), AgentKind::Bat, p, yaw, d) };
        let player = player_at(dg.center + Vec3::from_yaw(rng.gen_range(0.0..6.3)) * 3.0, d);
        let (_, dec) = bat_update(&bat, &player, &nw, &store, &bp, DT).map_err(|e| format!("{e:?}"))?;
        let r = rule(&w, d, p, bat.heading, &bp);
        ensure!(is_flip(&dec) == r, "state {checked} at {p:?}: decision {dec:?}, rule {r}");
        flips += r as usize;
        checked += 1;
    }
    ensure!(flips > 20, "only {flips} flip states sampled");
    Ok(format!("flip at tick {}, {checked} random states agree ({flips} flips)", first_flip.unwrap()))
}

/// Random moves pressing into a single wall lose exactly their normal
/// component and never end inside a volume.
pub fn wall_slide() -> Outcome {
    let w = world("chain8");
    let g = quantize_world(&w).map_err(|e| e.to_string())?;
    let nw = NpcWorld::new(&w, &g);
    let store = MetaStore::new(&w);
    let pp = PlayerParams::default();
    let ph = w.config.style.player_height;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut n_moves, mut tries, mut worst) = (0, 0, 0.0f64);
    while n_moves < 1000 {
        tries += 1;
        ensure!(tries < 200_000, "could not sample wall moves ({n_moves} found)");
        let d = &w.dungeons[rng.gen_range(0..w.dungeons.len())];
        let v = &d.footprint.vertices;
        let i = rng.gen_range(0..v.len());
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let edge = a.lerp(b, rng.gen_range(0.2..0.8));
        let t = (b - a).flat().normalize_or_zero();
        let mut n = Vec3::new(-t.z, 0.0, t.x);
        if (d.center - edge).dot(n) < 0.0 {
            n = -n;
        }
        let gap = rng.gen_range(pp.radius + 0.01..pp.radius + 0.4);
        let feet = (edge + n * gap).with_y(d.floor_altitude());
        let center = feet + Vec3::Y * (0.5 * ph);
        let disp = -n * (gap - pp.radius + rng.gen_range(0.01..0.5)) + t * rng.gen_range(-0.5..0.5);
        let end = center + disp;
        if store.dungeon_of_point(center) != Some(d.id) {
            continue;
        }
        // Exactly one wall face is pressed, nothing else is nearby.
        let reach = pp.radius + disp.length() + 0.2;
        let mut pressed = false;
        let mut clutter = false;
        for e in &w.elements {
            if e.volume.obb.distance_to_point(center) > reach {
                continue;
            }
            let coplanar = e.category == Category::Wall && e.faces.iter().all(|f| f.normal().distance(n) < 1e-6);
            if !coplanar && e.category.is_obstacle() {
                clutter = true;
                break;
            }
            pressed |= coplanar && e.faces.iter().any(|f| f.distance_to_point(end) < pp.radius);
        }
        if clutter || !pressed {
            continue;
        }
        let out = validate_player_motion(&nw, &store, feet, disp, ph, &pp);
        let normal = out.dot(n).abs();
        worst = worst.max(normal);
        ensure!(normal < 1e-9, "move {disp:?} at {feet:?}: |out.n| = {normal:e}");
        let stop = center + out;
        ensure!(w.elements.iter().all(|e| !e.volume.obb.contains_point(stop, 0.0)), "end point {stop:?} inside a volume");
        n_moves += 1;
    }
    Ok(format!("{n_moves} moves into walls, max |out.n| {worst:.1e}"))
}

/// A serpent pursuing a circling player through a column field for 2000
/// ticks keeps its spacing and never touches a column.
pub fn serpent_chain() -> Outcome {
    let w = room(8, 12, 10.0, true, false, 0.03);
    let g = quantize_world(&w).map_err(|e| e.to_string())?;
    let nw = NpcWorld::new(&w, &g);
    let store = MetaStore::new(&w);
    let p = SerpentParams::default();
    let d = &w.dungeons[0];
    let cols: Vec<&Element> = w.elements.iter().filter(|e| e.category == Category::Column).collect();
    ensure!(cols.len() >= 3, "only {} columns", cols.len());
    let mut st = None;
    'search: for r in [0.0, 1.0, 2.0, 3.0, 4.0] {
        for k in 0..16 {
            let yaw = k as f64 * std::f64::consts::PI / 8.0;
            let pos = d.center + Vec3::from_yaw(yaw) * r + Vec3::Y * p.ride_height;
            let s = SerpentState::spawn(AgentState::new(EntityId(1), AgentKind::SerpentHead, pos, yaw, d.id), &p);
            if std::iter::once(s.head.position).chain(s.segments.iter().map(|q| q.position)).all(|q| {
                store.dungeon_of_point(q).is_some() && nw.sphere_free(d.id, q, p.radius + 0.1)
            }) {
                st = Some(s);
                break 'search;
            }
        }
    }
    let mut st = st.ok_or("no clear spawn")?;
    let (mut moved, mut worst) = (0.0, 0.0f64);
    for k in 0..2000 {
        let player = player_at(d.center + Vec3::from_yaw(k as f64 * 0.004) * (d.apothem - 1.5), d.id);
        let before = st.head.position;
        st = serpent_update(&st, &player, &nw, &store, &p, DT).map_err(|e| format!("tick {k}: {e:?}"))?;
        moved += before.distance(st.head.position);
        let mut prev = st.head.position;
        for s in &st.segments {
            let err = (s.position.distance(prev) - p.link).abs();
            worst = worst.max(err);
            ensure!(err < 1e-3, "tick {k}: spacing off by {err:e}");
            prev = s.position;
        }
        let body = std::iter::once(st.head.position).chain(st.segments.iter().map(|s| s.position));
        for q in body {
            ensure!(cols.iter().all(|c| !sphere_intersects_volume(q, p.radius, &c.volume)), "tick {k}: body touches a column");
        }
    }
    ensure!(moved > 10.0, "head moved only {moved:.1}");
    Ok(format!("{} segments, max spacing error {worst:.1e}, head travelled {moved:.0}", st.segments.len()))
}
