//! Procedural dungeon worlds with geometric metadata, and the runtime
//! subsystems that consume it: layered camera grids, grid A* camera
//! control, NPC motion, portal visibility and lightmap baking.
#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod camera;
pub mod geometry;
pub mod lightmap;
pub mod math;
pub mod metastore;
pub mod npc;
pub mod pvs;
pub mod rng;
pub mod sim;
pub mod world;
pub mod voxel;
pub mod worldgen;

pub use geometry::*;
pub use math::Vec3;
pub use world::*;
