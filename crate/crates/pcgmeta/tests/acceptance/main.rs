//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod determinism;
mod lightmap;
mod motion;
mod search;
mod sim;
mod visibility;
mod voxel;
mod worlds;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

/// Outcome detail on success, reason on failure.
pub type Outcome = Result<String, String>;

#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

const fn c(name: &'static str, secs: u64, run: fn() -> Outcome) -> Criterion {
    Criterion { name, limit: if secs == 0 { None } else { Some(Duration::from_secs(secs)) }, run }
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        c("astar-optimality", 10, search::astar_optimality),
        c("camera-no-clip", 60, sim::camera_no_clip),
        c("pvs-soundness", 180, visibility::soundness),
        c("pvs-locality", 0, visibility::locality),
        c("voxelizer-soundness", 30, voxel::soundness),
        c("bat-flip-turn", 0, motion::bat_flip_turn),
        c("wall-slide", 0, motion::wall_slide),
        c("serpent-chain", 0, motion::serpent_chain),
        c("lightmap-analytics", 0, lightmap::analytics),
        c("determinism", 0, determinism::pipeline),
        c("step-time", 0, sim::step_time),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for k in criteria.iter().filter(|k| filter.is_empty() || filter.iter().any(|f| k.name.contains(f.as_str()))) {
        let t0 = Instant::now();
        let mut out = panic::catch_unwind(AssertUnwindSafe(k.run)).unwrap_or_else(|p| Err(format!("panicked: {}", panic_text(p))));
        let took = t0.elapsed();
        if let (Ok(_), Some(limit)) = (&out, k.limit) {
            if took > limit {
                out = Err(format!("took {:.1} s, limit {} s", took.as_secs_f64(), limit.as_secs()));
            }
        }
        match out {
            Ok(d) => println!("PASS  {:<20} {:>7.2} s  {d}", k.name, took.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("FAIL  {:<20} {:>7.2} s  {e}", k.name, took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
