//! Goal-directed planning from messy initial scenes: builds a staircase of 3
//! from scattered stock, then repairs an adversarial tower whose middle slot
//! holds the wrong block.
//!
//! Run with: `cargo run --example plan_goal`

use spg::corpus::gold_library;
use spg::goalplan::{forward_search, goal_from_sketch, heuristic, PlannerAction, PlannerConfig};
use spg::sketch::GroundedSketch;
use spg::world::{Block, Pose, Scene};

fn block(id: u32, x: f64, y: f64, z: f64) -> Block {
    Block {
        id,
        color: "red".into(),
        shape: "cube".into(),
        pose: Pose::new(x, y, z),
    }
}

fn describe(actions: &[PlannerAction]) {
    for action in actions {
        match action {
            PlannerAction::Move {
                rel,
                mover,
                reference,
            } => println!("  move({}, block {mover}, block {reference})", rel.name()),
            PlannerAction::PlaceRandom { mover } => println!("  place-random(block {mover})"),
        }
    }
}

fn main() -> spg::Result<()> {
    let library = gold_library();

    // Staircase of 3 from six scattered blocks.
    let mut scene = Scene::with_default_table();
    let spots = [
        (2.5, 15.5),
        (5.5, 12.5),
        (9.5, 17.5),
        (13.5, 14.5),
        (17.5, 11.5),
        (11.5, 10.5),
    ];
    for (i, (x, y)) in spots.iter().enumerate() {
        scene.insert(block(i as u32, *x, *y, 0.5));
    }
    let grounded = GroundedSketch {
        concept: "staircase".into(),
        size: 3,
        object_ids: vec![0, 1, 2, 3, 4, 5],
    };
    let goal = goal_from_sketch(&grounded, &library, Pose::new(4.5, 4.5, 0.5))?;
    let outcome = forward_search(&scene, &goal, &PlannerConfig::default())?;
    println!(
        "staircase(3) from scratch: {} actions, {} expansions, final h = {}",
        outcome.actions.len(),
        outcome.expansions,
        heuristic(outcome.scenes.last().unwrap(), &goal)
    );
    describe(&outcome.actions);

    // Adversarial tower: goal stacking is 0-1-2 but block 3 occupies the
    // middle; it must be cleared before block 1 can be stacked.
    let mut scene = Scene::with_default_table();
    scene.insert(block(0, 5.5, 5.5, 0.5));
    scene.insert(block(3, 5.5, 5.5, 1.5));
    scene.insert(block(1, 5.5, 5.5, 2.5));
    scene.insert(block(2, 12.5, 12.5, 0.5));
    let grounded = GroundedSketch {
        concept: "tower".into(),
        size: 3,
        object_ids: vec![0, 1, 2],
    };
    let goal = goal_from_sketch(&grounded, &library, scene.blocks[&0].pose)?;
    let outcome = forward_search(&scene, &goal, &PlannerConfig::default())?;
    println!(
        "adversarial tower(3): {} actions, {} expansions, final h = {}",
        outcome.actions.len(),
        outcome.expansions,
        heuristic(outcome.scenes.last().unwrap(), &goal)
    );
    describe(&outcome.actions);
    Ok(())
}
