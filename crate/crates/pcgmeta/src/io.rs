//! File formats: canonical JSON, world files, RLE grid files, traces.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pcgmeta_core::voxel::LayeredGrid;
use pcgmeta_core::{DungeonId, Vec3, World};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

/// Significant digits kept for reals in written files.
pub const SIGNIFICANT_DIGITS: usize = 9;

pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every real to the canonical precision. Object keys are already
/// sorted because `serde_json::Map` is ordered.
pub fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap_or(0.0));
            Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        v => v,
    }
}

pub fn to_canonical_value<T: Serialize>(t: &T) -> Result<Value> {
    Ok(canonicalize(serde_json::to_value(t)?))
}

pub fn to_canonical_string<T: Serialize>(t: &T) -> Result<String> {
    Ok(serde_json::to_string(&to_canonical_value(t)?)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_canonical<T: Serialize>(path: &Path, t: &T) -> Result<()> {
    let mut s = to_canonical_string(t)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn take(o: &mut Map<String, Value>, k: &str) -> Result<Value> {
    o.remove(k).with_context(|| format!("missing key `{k}`"))
}

fn flatten(v: Value) -> Value {
    let mut out = Vec::new();
    if let Value::Array(items) = v {
        for it in items {
            match it {
                Value::Object(o) => out.extend(["x", "y", "z"].iter().filter_map(|k| o.get(*k).cloned())),
                Value::Array(a) => out.extend(a),
                x => out.push(x),
            }
        }
    }
    Value::Array(out)
}

fn unflatten(v: Value, width: usize, vec3: bool) -> Result<Value> {
    let Value::Array(a) = v else { bail!("expected a flat array") };
    if a.len() % width != 0 {
        bail!("flat array length {} is not a multiple of {width}", a.len());
    }
    Ok(Value::Array(
        a.chunks(width)
            .map(|c| {
                if vec3 {
                    let mut o = Map::new();
                    for (k, x) in ["x", "y", "z"].iter().zip(c) {
                        o.insert((*k).into(), x.clone());
                    }
                    Value::Object(o)
                } else {
                    Value::Array(c.to_vec())
                }
            })
            .collect(),
    ))
}

/// World document: metadata under `meta`, mesh attributes as flat arrays.
pub fn world_to_value(world: &World) -> Result<Value> {
    let Value::Object(mut o) = serde_json::to_value(world)? else { bail!("world is not an object") };
    let mut meta = Map::new();
    meta.insert("seed".into(), take(&mut o, "seed")?);
    meta.insert("config".into(), take(&mut o, "config")?);
    o.insert("meta".into(), Value::Object(meta));
    if let Some(Value::Array(meshes)) = o.get_mut("meshes") {
        for m in meshes {
            if let Value::Object(mo) = m {
                for k in ["positions", "normals", "uvs", "indices"] {
                    if let Some(v) = mo.remove(k) {
                        mo.insert(k.into(), flatten(v));
                    }
                }
            }
        }
    }
    Ok(canonicalize(Value::Object(o)))
}

pub fn world_from_value(v: Value) -> Result<World> {
    let Value::Object(mut o) = v else { bail!("world file must be an object") };
    let Value::Object(mut meta) = take(&mut o, "meta")? else { bail!("`meta` must be an object") };
    o.insert("seed".into(), take(&mut meta, "seed")?);
    o.insert("config".into(), take(&mut meta, "config")?);
    if let Some(Value::Array(meshes)) = o.get_mut("meshes") {
        for m in meshes {
            if let Value::Object(mo) = m {
                for (k, w, vec3) in [("positions", 3, true), ("normals", 3, true), ("uvs", 2, false), ("indices", 3, false)] {
                    if let Some(v) = mo.remove(k) {
                        mo.insert(k.into(), unflatten(v, w, vec3)?);
                    }
                }
            }
        }
    }
    Ok(serde_json::from_value(Value::Object(o))?)
}

pub fn world_to_string(world: &World) -> Result<String> {
    Ok(serde_json::to_string(&world_to_value(world)?)? + "\n")
}

/// Reads a world and normalizes it to what a written file would contain,
/// so freshly generated and reloaded worlds behave identically.
pub fn canonical_world(world: &World) -> Result<World> {
    world_from_value(world_to_value(world)?)
}

pub fn write_world(path: &Path, world: &World) -> Result<()> {
    fs::write(path, world_to_string(world)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_world(path: &Path) -> Result<World> {
    let v: Value = read_json(path)?;
    world_from_value(v).with_context(|| format!("decoding world {}", path.display()))
}

/// One grid with run-length encoded rows. Each row lists alternating run
/// lengths starting with empty cells, so `[0, 3, 2]` is three solid cells
/// followed by two empty ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub dungeon: DungeonId,
    pub origin: Vec3,
    pub voxel_size: f64,
    pub layer_altitudes: Vec<f64>,
    pub layer_half: f64,
    pub nx: u32,
    pub nz: u32,
    /// Layers, then rows along z.
    pub rows: Vec<Vec<Vec<u32>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub seed: u64,
    pub voxel_size: f64,
    pub layers: u32,
    pub grids: Vec<GridRecord>,
}

pub fn encode_row(cells: impl Iterator<Item = bool>) -> Vec<u32> {
    let mut runs = vec![0u32];
    let mut cur = false;
    for c in cells {
        if c != cur {
            runs.push(0);
            cur = c;
        }
        *runs.last_mut().unwrap() += 1;
    }
    runs
}

pub fn decode_row(runs: &[u32], n: u32) -> Result<Vec<bool>> {
    let mut out = Vec::with_capacity(n as usize);
    for (k, r) in runs.iter().enumerate() {
        out.extend(std::iter::repeat(k % 2 == 1).take(*r as usize));
    }
    if out.len() != n as usize {
        bail!("row decodes to {} cells, expected {n}", out.len());
    }
    Ok(out)
}

impl GridRecord {
    pub fn encode(g: &LayeredGrid) -> Self {
        let rows = (0..g.layer_altitudes.len() as u32)
            .map(|l| (0..g.nz as i64).map(|z| encode_row((0..g.nx as i64).map(|x| g.is_solid_at(l, x, z)))).collect())
            .collect();
        GridRecord {
            dungeon: g.dungeon,
            origin: g.origin,
            voxel_size: g.voxel_size,
            layer_altitudes: g.layer_altitudes.clone(),
            layer_half: g.layer_half,
            nx: g.nx,
            nz: g.nz,
            rows,
        }
    }

    pub fn decode(&self) -> Result<LayeredGrid> {
        if self.rows.len() != self.layer_altitudes.len() {
            bail!("grid {} has {} layers of rows for {} altitudes", self.dungeon.0, self.rows.len(), self.layer_altitudes.len());
        }
        let mut g = LayeredGrid::empty(self.dungeon, self.voxel_size);
        g.origin = self.origin;
        g.layer_altitudes = self.layer_altitudes.clone();
        g.layer_half = self.layer_half;
        g.nx = self.nx;
        g.nz = self.nz;
        let words = (self.nx as usize * self.nz as usize).div_ceil(64);
        g.occupancy = vec![vec![0u64; words]; self.rows.len()];
        for (l, layer) in self.rows.iter().enumerate() {
            if layer.len() != self.nz as usize {
                bail!("grid {} layer {l} has {} rows, expected {}", self.dungeon.0, layer.len(), self.nz);
            }
            for (z, row) in layer.iter().enumerate() {
                for (x, solid) in decode_row(row, self.nx)?.into_iter().enumerate() {
                    if solid {
                        g.set_solid(pcgmeta_core::voxel::Cell { layer: l as u32, ix: x as u32, iz: z as u32 }, true);
                    }
                }
            }
        }
        Ok(g)
    }
}

impl GridFile {
    pub fn new(seed: u64, voxel_size: f64, layers: u32, grids: &[LayeredGrid]) -> Self {
        GridFile { seed, voxel_size, layers, grids: grids.iter().map(GridRecord::encode).collect() }
    }

    pub fn decode(&self) -> Result<Vec<LayeredGrid>> {
        self.grids.iter().map(GridRecord::decode).collect()
    }
}

pub fn write_grids(path: &Path, file: &GridFile) -> Result<()> {
    write_canonical(path, file)
}

/// Reads grids and checks they belong to `world`.
pub fn read_grids(path: &Path, world: &World) -> Result<Vec<LayeredGrid>> {
    let f: GridFile = read_json(path)?;
    if f.seed != world.seed {
        bail!("grid file was built for seed {}, world has seed {}", f.seed, world.seed);
    }
    let grids = f.decode()?;
    if grids.len() != world.dungeons.len() || grids.iter().enumerate().any(|(i, g)| g.dungeon.index() != i) {
        bail!("grid file does not cover the world's dungeons");
    }
    Ok(grids)
}

/// JSON Lines writer with canonical records.
pub struct JsonlWriter<W: Write> {
    out: W,
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        JsonlWriter { out }
    }

    pub fn write<T: Serialize>(&mut self, t: &T) -> Result<()> {
        let s = to_canonical_string(t)?;
        self.out.write_all(s.as_bytes())?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
