//! The staged pipeline: generate, voxelize, bake, simulate.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use pcgmeta_core::lightmap::{BakeConfig, BakeContext};
use pcgmeta_core::sim::{run_scenario, tour_scenario, Metrics, Scenario};
use pcgmeta_core::voxel::{quantize_dungeon, LayeredGrid};
use pcgmeta_core::worldgen::generate_world;
use pcgmeta_core::{World, WorldConfig};
use rayon::prelude::*;

use crate::export::{write_bake, write_obj};
use crate::io::{self, read_grids, read_json, read_world, GridFile, JsonlWriter};

/// Generates a world, optionally overriding the config's seed. The result
/// is normalized to file precision.
pub fn generate(config: &WorldConfig, seed: Option<u64>) -> Result<World> {
    let mut cfg = config.clone();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let w = generate_world(&cfg).map_err(|e| anyhow!("world generation failed: {e}"))?;
    io::canonical_world(&w)
}

pub fn generate_cmd(config: &Path, seed: Option<u64>, out: &Path, obj: Option<&Path>) -> Result<World> {
    let cfg: WorldConfig = read_json(config)?;
    let w = generate(&cfg, seed)?;
    io::write_world(out, &w)?;
    if let Some(dir) = obj {
        write_obj(dir, &w)?;
    }
    Ok(w)
}

pub fn voxelize(world: &World, voxel: Option<f64>, layers: Option<u32>) -> Result<GridFile> {
    let voxel = voxel.unwrap_or(world.config.style.voxel_size);
    let layers = layers.unwrap_or(world.config.style.grid_layers);
    if !(voxel > 0.0) || layers == 0 {
        return Err(anyhow!("voxel size and layer count must be positive"));
    }
    let grids: Vec<LayeredGrid> = world
        .dungeons
        .par_iter()
        .map(|d| quantize_dungeon(world, d.id, voxel, layers as usize))
        .collect::<Result<_, _>>()
        .map_err(|e| anyhow!("voxelization failed: {e}"))?;
    // Normalize through the file encoding so written and in-memory grids agree.
    let f = GridFile::new(world.seed, voxel, layers, &grids);
    Ok(serde_json::from_value(io::to_canonical_value(&f)?)?)
}

pub fn voxelize_cmd(world: &Path, out: &Path, voxel: Option<f64>, layers: Option<u32>) -> Result<GridFile> {
    let w = read_world(world)?;
    let f = voxelize(&w, voxel, layers)?;
    io::write_grids(out, &f)?;
    Ok(f)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BakeOptions {
    pub atlas_size: Option<u32>,
    pub ao_rays: Option<u32>,
    pub texels_per_unit: Option<f64>,
    pub gamma: bool,
}

pub fn bake_config(opts: &BakeOptions) -> BakeConfig {
    let mut cfg = BakeConfig::default();
    if let Some(s) = opts.atlas_size {
        cfg.atlas_size = s;
    }
    if let Some(r) = opts.ao_rays {
        cfg.ao_rays = r;
    }
    if let Some(t) = opts.texels_per_unit {
        cfg.texels_per_unit = t;
    }
    cfg
}

/// Bakes every chart in parallel. Chart results are independent, so the
/// output does not depend on scheduling.
pub fn bake_cmd(world: &Path, out: &Path, opts: &BakeOptions) -> Result<()> {
    let w = read_world(world)?;
    let cfg = bake_config(opts);
    let mut ctx = BakeContext::new(&w, &cfg).map_err(|e| anyhow!("bake failed: {e}"))?;
    let baked: Vec<_> = (0..ctx.charts.len()).into_par_iter().map(|i| ctx.bake_chart(i)).collect();
    ctx.compose(baked);
    write_bake(out, w.seed, &ctx.atlases, &ctx.charts, opts.gamma)
}

pub struct Loaded {
    pub world: World,
    pub grids: Vec<LayeredGrid>,
}

pub fn load(world: &Path, grids: &Path) -> Result<Loaded> {
    let w = read_world(world)?;
    let g = read_grids(grids, &w)?;
    Ok(Loaded { world: w, grids: g })
}

/// Resolves a scenario path field relative to the scenario file.
fn resolve(base: &Path, p: &str) -> PathBuf {
    let pb = PathBuf::from(p);
    if pb.is_absolute() {
        pb
    } else {
        base.parent().unwrap_or(Path::new(".")).join(pb)
    }
}

/// Runs a scenario, writing the trace as JSON Lines. World and grid paths
/// given here take precedence over the ones inside the scenario.
pub fn simulate_cmd(
    world: Option<&Path>,
    grids: Option<&Path>,
    scenario: &Path,
    trace: &Path,
    audit: bool,
) -> Result<Metrics> {
    let sc: Scenario = read_json(scenario)?;
    let wp = world.map(Path::to_path_buf).unwrap_or_else(|| resolve(scenario, &sc.world));
    let gp = grids.map(Path::to_path_buf).unwrap_or_else(|| resolve(scenario, &sc.grids));
    let l = load(&wp, &gp)?;
    let f = File::create(trace).with_context(|| format!("creating {}", trace.display()))?;
    let mut out = JsonlWriter::new(BufWriter::new(f));
    let mut err = None;
    let m = run_scenario(&l.world, &l.grids, &sc, audit, |r| {
        if err.is_none() {
            err = out.write(r).err();
        }
    })
    .map_err(|e| anyhow!("scenario rejected: {e}"))?;
    if let Some(e) = err {
        return Err(e);
    }
    std::io::Write::flush(&mut out.into_inner())?;
    Ok(m)
}

/// Writes a tour scenario for a world; see `tour_scenario`.
pub fn tour_cmd(world: &Path, grids: &Path, ticks: u64, base: Option<&Path>, out: &Path) -> Result<Scenario> {
    let l = load(world, grids)?;
    let mut b: Scenario = match base {
        Some(p) => read_json(p)?,
        None => Scenario::default(),
    };
    b.world = world.to_string_lossy().into_owned();
    b.grids = grids.to_string_lossy().into_owned();
    let sc = tour_scenario(&l.world, &l.grids, ticks, &b).map_err(|e| anyhow!("tour failed: {e}"))?;
    io::write_canonical(out, &sc)?;
    Ok(sc)
}
