//! Builds a small scene by executing concepts, prints its scene graph, and
//! answers a structure-size query.
//!
//! Run with: `cargo run --example scene_graph`

use std::collections::BTreeSet;

use spg::corpus::gold_library;
use spg::dsl::execute_program;
use spg::scenegraph::{extract_scene_graph, find_size};
use spg::world::{Block, ExecContext, Pose, Scene};

fn main() -> spg::Result<()> {
    let library = gold_library();

    // Six white dice stocked on the table; build a tower of three from them.
    let mut scene = Scene::with_default_table();
    for id in 0..6u32 {
        scene.insert(Block {
            id,
            color: "white".into(),
            shape: "dice".into(),
            pose: Pose::new(2.5 + 2.0 * id as f64, 15.5, 0.5),
        });
    }
    let ctx = ExecContext::new(scene, Pose::new(5.5, 5.5, 0.5), (0..6).collect());
    let (done, _) = execute_program(library.get("tower")?, 3, ctx, &library)?;

    let ids: BTreeSet<u32> = done.scene.blocks.keys().copied().collect();
    println!("scene graph after building tower(3):");
    for line in extract_scene_graph(&done.scene, &ids).render_lines() {
        println!("  {line}");
    }

    let all: Vec<u32> = ids.iter().copied().collect();
    let size = find_size(&done.scene, "tower", &all, &library)?;
    println!("find_size(tower) = {size}");
    Ok(())
}
