//! Mesh and lightmap exports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pcgmeta_core::lightmap::{Atlas, Chart};
use pcgmeta_core::{ElementId, MeshBuffer, World};
use serde::Serialize;

use crate::io::{round_sig, write_canonical};

fn r(x: f64) -> f64 {
    round_sig(x)
}

/// Wavefront OBJ text with one object per element.
pub fn obj_text(world: &World, bake: bool) -> String {
    let mut s = String::new();
    let mut base = 1usize;
    let _ = writeln!(s, "# seed {}", world.seed);
    for e in &world.elements {
        let m: &MeshBuffer = &world.meshes[if bake { e.bake_mesh } else { e.deploy_mesh }.index()];
        let _ = writeln!(s, "o element_{}_{:?}_d{}", e.id.0, e.category, e.dungeon.0);
        for p in &m.positions {
            let _ = writeln!(s, "v {} {} {}", r(p.x), r(p.y), r(p.z));
        }
        for n in &m.normals {
            let _ = writeln!(s, "vn {} {} {}", r(n.x), r(n.y), r(n.z));
        }
        for uv in &m.uvs {
            let _ = writeln!(s, "vt {} {}", r(uv[0]), r(uv[1]));
        }
        let has_n = m.normals.len() == m.positions.len();
        let has_t = m.uvs.len() == m.positions.len();
        for t in &m.indices {
            s.push('f');
            for &i in t {
                let k = base + i as usize;
                match (has_t, has_n) {
                    (true, true) => write!(s, " {k}/{k}/{k}"),
                    (false, true) => write!(s, " {k}//{k}"),
                    (true, false) => write!(s, " {k}/{k}"),
                    (false, false) => write!(s, " {k}"),
                }
                .ok();
            }
            s.push('\n');
        }
        base += m.positions.len();
    }
    s
}

/// Writes `deploy.obj` and `bake.obj` into `dir`.
pub fn write_obj(dir: &Path, world: &World) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut out = Vec::new();
    for (name, bake) in [("deploy.obj", false), ("bake.obj", true)] {
        let p = dir.join(name);
        fs::write(&p, obj_text(world, bake)).with_context(|| format!("writing {}", p.display()))?;
        out.push(p);
    }
    Ok(out)
}

/// Affine map from world position to normalized atlas uv for one face:
/// `u = u_row[0..3]·p + u_row[3]`, likewise for `v`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UvTransform {
    pub u: [f64; 4],
    pub v: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChartEntry {
    pub element: ElementId,
    pub dungeon: u32,
    pub atlas: u32,
    pub rect: [u32; 4],
    pub faces: Vec<UvTransform>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtlasEntry {
    pub id: u32,
    pub size: u32,
    pub file: String,
    pub dungeons: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChartsFile {
    pub seed: u64,
    pub gamma: bool,
    pub atlases: Vec<AtlasEntry>,
    pub charts: Vec<ChartEntry>,
}

pub fn atlas_file_name(id: u32) -> String {
    format!("atlas_{id:02}.png")
}

pub fn chart_entry(c: &Chart, atlas_size: u32) -> ChartEntry {
    let size = atlas_size as f64;
    let faces = c
        .faces
        .iter()
        .map(|f| {
            let su = f.size.0 as f64 / f.extent.0.max(1e-12) / size;
            let sv = f.size.1 as f64 / f.extent.1.max(1e-12) / size;
            let (uu, vv) = (f.u_axis * su, f.v_axis * sv);
            let cu = (c.rect.0 + f.offset) as f64 / size - uu.dot(f.origin);
            let cv = c.rect.1 as f64 / size - vv.dot(f.origin);
            UvTransform { u: [uu.x, uu.y, uu.z, cu], v: [vv.x, vv.y, vv.z, cv] }
        })
        .collect();
    ChartEntry {
        element: c.element,
        dungeon: c.dungeon.0,
        atlas: c.atlas,
        rect: [c.rect.0, c.rect.1, c.rect.2, c.rect.3],
        faces,
    }
}

fn encode_channel(x: f32, gamma: bool) -> u8 {
    let x = x.clamp(0.0, 1.0);
    let y = if gamma { x.powf(1.0 / 2.2) } else { x };
    (y * 255.0 + 0.5).floor() as u8
}

pub fn atlas_image(a: &Atlas, gamma: bool) -> image::RgbImage {
    let mut img = image::RgbImage::new(a.size, a.size);
    for (i, px) in img.pixels_mut().enumerate() {
        let c = a.image.get(i).copied().unwrap_or([0.0; 3]);
        *px = image::Rgb([encode_channel(c[0], gamma), encode_channel(c[1], gamma), encode_channel(c[2], gamma)]);
    }
    img
}

/// Writes one PNG per atlas plus `charts.json`.
pub fn write_bake(dir: &Path, seed: u64, atlases: &[Atlas], charts: &[Chart], gamma: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut entries = Vec::new();
    for a in atlases {
        let name = atlas_file_name(a.id);
        let p = dir.join(&name);
        atlas_image(a, gamma).save_with_format(&p, image::ImageFormat::Png).with_context(|| format!("writing {}", p.display()))?;
        entries.push(AtlasEntry { id: a.id, size: a.size, file: name, dungeons: a.dungeons.iter().map(|d| d.0).collect() });
    }
    let size = atlases.first().map(|a| a.size).unwrap_or(1);
    let file = ChartsFile { seed, gamma, atlases: entries, charts: charts.iter().map(|c| chart_entry(c, size)).collect() };
    write_canonical(&dir.join("charts.json"), &file)
}
