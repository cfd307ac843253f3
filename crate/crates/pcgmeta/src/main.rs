use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use pcgmeta::commands::{self, BakeOptions};
use pcgmeta::io::{read_json, to_canonical_string};
use pcgmeta::server::{serve, ServeOptions};

#[derive(Parser)]
#[command(name = "pcgmeta", version, about = "Procedural dungeon worlds with geometric metadata")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a world file from a config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write deploy.obj and bake.obj here.
        #[arg(long)]
        obj: Option<PathBuf>,
    },
    /// Build layered camera grids for every dungeon.
    Voxelize {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        voxel: Option<f64>,
        #[arg(long)]
        layers: Option<u32>,
    },
    /// Bake lightmap atlases and charts.json.
    Bake {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        atlas_size: Option<u32>,
        #[arg(long)]
        ao_rays: Option<u32>,
        #[arg(long)]
        texels_per_unit: Option<f64>,
        /// Encode PNGs with gamma 2.2 instead of linear values.
        #[arg(long)]
        gamma: bool,
    },
    /// Run a scenario and write its trace as JSON Lines.
    Simulate {
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        grids: Option<PathBuf>,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Run the per-tick invariant audits.
        #[arg(long)]
        audit: bool,
        /// Also write the metrics here.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Write a scripted tour through every dungeon as a scenario.
    Tour {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        grids: PathBuf,
        #[arg(long, default_value_t = 5000)]
        ticks: u64,
        /// Scenario supplying camera, agents and parameters.
        #[arg(long)]
        base: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve interactive sessions over WebSocket.
    Serve {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        grids: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Scenario supplying camera, agents and parameters.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Generate { config, seed, out, obj } => {
            let w = commands::generate_cmd(&config, seed, &out, obj.as_deref())?;
            eprintln!("{}: {} dungeons, {} elements", out.display(), w.dungeons.len(), w.elements.len());
        }
        Cmd::Voxelize { world, out, voxel, layers } => {
            let f = commands::voxelize_cmd(&world, &out, voxel, layers)?;
            eprintln!("{}: {} grids", out.display(), f.grids.len());
        }
        Cmd::Bake { world, out, atlas_size, ao_rays, texels_per_unit, gamma } => {
            commands::bake_cmd(&world, &out, &BakeOptions { atlas_size, ao_rays, texels_per_unit, gamma })?;
        }
        Cmd::Simulate { world, grids, scenario, trace, audit, metrics } => {
            let m = commands::simulate_cmd(world.as_deref(), grids.as_deref(), &scenario, &trace, audit)?;
            let text = to_canonical_string(&m)?;
            if let Some(p) = metrics {
                std::fs::write(p, format!("{text}\n"))?;
            }
            println!("{text}");
        }
        Cmd::Tour { world, grids, ticks, base, out } => {
            let sc = commands::tour_cmd(&world, &grids, ticks, base.as_deref(), &out)?;
            eprintln!("{}: {} timeline entries", out.display(), sc.timeline.len());
        }
        Cmd::Serve { world, grids, port, host, scenario } => {
            let l = commands::load(&world, &grids)?;
            let mut opts = ServeOptions::default();
            if let Some(p) = scenario {
                opts.scenario = read_json(&p)?;
            }
            let listener = TcpListener::bind((host.as_str(), port))?;
            eprintln!("listening on ws://{}", listener.local_addr()?);
            serve(listener, &l.world, &l.grids, &opts)?;
        }
    }
    Ok(())
}
