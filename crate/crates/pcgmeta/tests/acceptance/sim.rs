use std::collections::BTreeSet;
use std::time::Instant;

use pcgmeta_core::sim::{inputs_at, run_scenario, tour_scenario, Sim};
use pcgmeta_core::voxel::quantize_world;
use pcgmeta_core::Category;

use crate::worlds::{populated, world};
use crate::{ensure, Outcome};

/// 5000-tick tour of the 8-dungeon chain with NPCs, audited every tick.
pub fn camera_no_clip() -> Outcome {
    let w = world("chain8");
    ensure!(w.dungeons.len() == 8, "chain8 has {} dungeons", w.dungeons.len());
    let g = quantize_world(&w).map_err(|e| e.to_string())?;
    let sc = tour_scenario(&w, &g, 5000, &populated()).map_err(|e| e.to_string())?;
    let mut modes = BTreeSet::new();
    let mut column_rooms = BTreeSet::new();
    let m = run_scenario(&w, &g, &sc, true, |r| {
        modes.insert(r.player_mode.clone());
        let d = &w.dungeons[r.player_dungeon.index()];
        if d.elements.iter().any(|e| w.element(*e).category == Category::Column) {
            column_rooms.insert(d.id);
        }
    })
    .map_err(|e| e.to_string())?;
    ensure!(m.ticks == 5000, "ran {} ticks", m.ticks);
    ensure!(modes.contains("walking") && modes.contains("flying"), "modes seen: {modes:?}");
    ensure!(!column_rooms.is_empty(), "tour never entered a room with columns");
    ensure!(m.violations.camera_clip == 0, "{} camera clips", m.violations.camera_clip);
    ensure!(m.violations.total() == 0, "other violations: {:?}", m.violations);
    Ok(format!(
        "0 clips over {} ticks, {} gate crossings, {} column rooms, camera path {:.0}",
        m.ticks,
        m.gate_crossings,
        column_rooms.len(),
        m.camera_path_length
    ))
}

/// Mean wall time of one simulation step on the 8-dungeon chain.
pub fn step_time() -> Outcome {
    let w = world("chain8");
    let g = quantize_world(&w).map_err(|e| e.to_string())?;
    let sc = tour_scenario(&w, &g, 2000, &populated()).map_err(|e| e.to_string())?;
    let mut sim = Sim::new(&w, &g, &sc, false).map_err(|e| e.to_string())?;
    let mut cursor = 0;
    let mut worst = 0.0f64;
    let t0 = Instant::now();
    for tick in 0..sc.duration {
        let input = inputs_at(&sc.timeline, tick, &mut cursor);
        let s = Instant::now();
        sim.step(&input);
        worst = worst.max(s.elapsed().as_secs_f64());
    }
    let mean = t0.elapsed().as_secs_f64() / sc.duration as f64;
    ensure!(mean < 0.016, "mean step {:.2} ms", mean * 1e3);
    Ok(format!("mean {:.3} ms, max {:.2} ms over {} steps", mean * 1e3, worst * 1e3, sc.duration))
}
