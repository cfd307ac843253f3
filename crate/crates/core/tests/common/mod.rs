#![allow(dead_code)]

use pcgmeta_core::world::{World, WorldConfig};
use pcgmeta_core::worldgen::generate_world;

pub fn config(name: &str) -> WorldConfig {
    let path = format!("{}/../../configs/{}.json", env!("CARGO_MANIFEST_DIR"), name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    serde_json::from_str(&text).expect("config parses")
}

pub fn world(name: &str) -> World {
    generate_world(&config(name)).expect("config generates")
}

pub fn single_room(sides: u32, seed: u64, columns: bool) -> WorldConfig {
    let text = format!(
        r#"{{"seed":{seed},"dungeons":[{{"id":0,"name":"solo","side_count":{sides},"radius":[7.0,7.0],
        "floor_altitude":0.0,"stairs":false,"columns":{columns},"torches":true,"progression":0}}],"connections":[]}}"#
    );
    serde_json::from_str(&text).unwrap()
}

/// Single room with every knob exposed.
pub fn room(sides: u32, seed: u64, radius: f64, columns: bool, torches: bool, density: f64) -> WorldConfig {
    let text = format!(
        r#"{{"seed":{seed},"dungeons":[{{"id":0,"name":"solo","side_count":{sides},"radius":[{radius},{radius}],
        "floor_altitude":0.0,"stairs":false,"columns":{columns},"torches":{torches},"progression":0}}],"connections":[],
        "style":{{"column_density":[{density},{density}]}}}}"#
    );
    serde_json::from_str(&text).unwrap()
}

/// Two equal rooms joined by one passage of the given kind.
pub fn pair(kind: &str, radius: f64, seed: u64) -> WorldConfig {
    let text = format!(
        r#"{{"seed":{seed},"dungeons":[
        {{"id":0,"name":"a","side_count":6,"radius":[{radius},{radius}],"floor_altitude":0.0,"stairs":false,"columns":false,"torches":false,"progression":0}},
        {{"id":1,"name":"b","side_count":6,"radius":[{radius},{radius}],"floor_altitude":0.0,"stairs":false,"columns":false,"torches":false,"progression":1}}],
        "connections":[{{"from":0,"to":1,"kind":"{kind}"}}],
        "style":{{"corridor_length":[4.0,4.0],"opening_width":[2.8,2.8],"opening_height":[3.2,3.2]}}}}"#
    );
    serde_json::from_str(&text).unwrap()
}

/// Appends a static wall element with the given face (normal = free side).
pub fn add_wall(world: &mut World, d: pcgmeta_core::DungeonId, face: pcgmeta_core::ConvexPolygon3) {
    use pcgmeta_core::*;
    let id = ElementId(world.elements.len() as u32);
    let m = world.meshes.len() as u32;
    let mut mesh = MeshBuffer::new(Category::Wall, d);
    mesh.push_polygon(&face);
    world.meshes.push(mesh.clone());
    world.meshes.push(mesh);
    world.elements.push(Element {
        id,
        category: Category::Wall,
        dungeon: d,
        connector: None,
        volume: pcgmeta_core::worldgen::slab_volume(&face, pcgmeta_core::worldgen::SLAB),
        planes: vec![face.plane(PlaneRole::Wall)],
        faces: vec![face],
        deploy_mesh: MeshId(m),
        bake_mesh: MeshId(m + 1),
    });
    world.dungeons[d.index()].elements.push(id);
}
