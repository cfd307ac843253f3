use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use crate::worlds::configs;
use crate::{ensure, Outcome};

fn run(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pcgmeta")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(dir.join(format!("{}.stdout", args[0])), out.stdout).map_err(|e| e.to_string())
}

fn files(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files(root, &p, out);
        } else {
            out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
        }
    }
}

/// Runs the whole pipeline twice from the same inputs and compares every
/// output byte for byte.
pub fn pipeline() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = configs().join("chain8.json");
    let base = configs().join("scenarios/populated.json");
    let (cfg, base) = (cfg.to_str().unwrap(), base.to_str().unwrap());
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        std::fs::create_dir(&dir).map_err(|e| e.to_string())?;
        run(&dir, &["generate", "--config", cfg, "--out", "world.json", "--obj", "obj"])?;
        run(&dir, &["voxelize", "--world", "world.json", "--out", "grids.json"])?;
        run(&dir, &["bake", "--world", "world.json", "--out", "bake", "--atlas-size", "512", "--ao-rays", "16"])?;
        run(&dir, &["tour", "--world", "world.json", "--grids", "grids.json", "--ticks", "600", "--base", base, "--out", "tour.json"])?;
        run(&dir, &["simulate", "--world", "world.json", "--grids", "grids.json", "--scenario", "tour.json", "--trace", "trace.jsonl"])?;
        let mut map = BTreeMap::new();
        files(&dir, &dir, &mut map);
        outputs.push(map);
    }
    let (a, b) = (&outputs[0], &outputs[1]);
    ensure!(a.keys().eq(b.keys()), "different file sets: {:?} vs {:?}", a.keys(), b.keys());
    for (k, v) in a {
        ensure!(!v.is_empty() || k.ends_with(".stdout"), "{k} is empty");
        ensure!(*v == b[k], "{k} differs between runs");
    }
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} files ({:.1} MB) identical across runs", a.len(), bytes as f64 / 1e6))
}
