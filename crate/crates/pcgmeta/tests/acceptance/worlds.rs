use std::path::PathBuf;

use pcgmeta_core::sim::Scenario;
use pcgmeta_core::worldgen::{build_singularity_tables, generate_world, oriented, slab_volume, SLAB};
use pcgmeta_core::*;

pub fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn config(name: &str) -> WorldConfig {
    let path = configs().join(format!("{name}.json"));
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

pub fn world(name: &str) -> World {
    generate_world(&config(name)).unwrap()
}

/// Shipped scenario with NPCs of every kind.
pub fn populated() -> Scenario {
    let path = configs().join("scenarios/populated.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Single room with every knob exposed.
pub fn room(sides: u32, seed: u64, radius: f64, columns: bool, torches: bool, density: f64) -> World {
    let text = format!(
        r#"{{"seed":{seed},"dungeons":[{{"id":0,"name":"solo","side_count":{sides},"radius":[{radius},{radius}],
        "floor_altitude":0.0,"stairs":false,"columns":{columns},"torches":{torches},"progression":0}}],"connections":[],
        "style":{{"column_density":[{density},{density}]}}}}"#
    );
    generate_world(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn add_wall(world: &mut World, d: DungeonId, face: ConvexPolygon3) {
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
        volume: slab_volume(&face, SLAB),
        planes: vec![face.plane(PlaneRole::Wall)],
        faces: vec![face],
        deploy_mesh: MeshId(m),
        bake_mesh: MeshId(m + 1),
    });
    world.dungeons[d.index()].elements.push(id);
}

/// A room with a narrow dead-end alley built against wall 0. Returns the
/// world, the alley's closed end and the alley direction (pointing out).
pub fn dead_end() -> (World, Vec3, Vec3) {
    let mut w = room(6, 2, 8.0, false, false, 0.0);
    let d = w.dungeons[0].clone();
    let n = d.walls[0].normal.flat().normalize_or_zero();
    let lat = Vec3::new(-n.z, 0.0, n.x);
    let end = d.center - n * d.apothem;
    let (half, len, h) = (0.6, 5.0, 5.0);
    for s in [-1.0, 1.0] {
        let a = end + lat * (s * half);
        let b = a + n * len;
        let quad = ConvexPolygon3::new(vec![a, b, b + Vec3::Y * h, a + Vec3::Y * h]);
        add_wall(&mut w, d.id, oriented(quad, lat * -s));
    }
    w.singularity_tables = build_singularity_tables(&w);
    (w, end, n)
}
