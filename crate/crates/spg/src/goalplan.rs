//! Goal-conditioned forward search: a grounded sketch becomes a relational
//! goal over task-relevant blocks, reached by best-first search over
//! pick-and-place moves under physical preconditions.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsl::{imagined_placements, ConceptLibrary};
use crate::error::{Result, SpgError};
use crate::scenegraph::{extract_scene_graph, holds_relation, Relation};
use crate::sketch::GroundedSketch;
use crate::world::{
    is_clear, is_clear_excluding, placement_valid_excluding, sample_free_position, Block,
    Direction, Pose, Scene, ALL_DIRECTIONS, EPS,
};

/// A relational goal: the scene-graph relations the construction must
/// realize, plus the anchor the goal was imagined from.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalSpec {
    pub relations: BTreeSet<Relation>,
    pub anchor: Pose,
}

/// One planner action: a relational pick-and-place, or a random table
/// placement used to clear blocks out of the way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerAction {
    Move {
        rel: Direction,
        mover: u32,
        reference: u32,
    },
    PlaceRandom {
        mover: u32,
    },
}

/// Search bounds and the seed for random placements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannerConfig {
    pub max_expansions: usize,
    pub max_place_random: usize,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> PlannerConfig {
        PlannerConfig {
            max_expansions: 20_000,
            max_place_random: 3,
            seed: 0,
        }
    }
}

/// Imagines the concept built from `anchor` with the grounded object ids (in
/// order) and extracts the scene graph over the placed blocks as the goal.
pub fn goal_from_sketch(
    grounded: &GroundedSketch,
    library: &ConceptLibrary,
    anchor: Pose,
) -> Result<GoalSpec> {
    let poses = imagined_placements(&grounded.concept, grounded.size, library, anchor)?;
    if grounded.object_ids.len() < poses.len() {
        return Err(SpgError::InsufficientObjects {
            required: poses.len(),
            available: grounded.object_ids.len(),
        });
    }
    let mut imagined = Scene::with_default_table();
    let mut ids = BTreeSet::new();
    for (pose, &id) in poses.iter().zip(&grounded.object_ids) {
        ids.insert(id);
        imagined.insert(Block {
            id,
            color: String::new(),
            shape: String::new(),
            pose: *pose,
        });
    }
    Ok(GoalSpec {
        relations: extract_scene_graph(&imagined, &ids).relations,
        anchor,
    })
}

/// Ids named by the goal, closed under sharing any directional relation in
/// the initial scene.
pub fn relevant_objects(goal: &GoalSpec, scene: &Scene) -> BTreeSet<u32> {
    let mut relevant: BTreeSet<u32> = goal
        .relations
        .iter()
        .flat_map(|r| [r.subject, r.object])
        .collect();
    let all: BTreeSet<u32> = scene.blocks.keys().copied().collect();
    let initial = extract_scene_graph(scene, &all);
    loop {
        let mut grew = false;
        for r in &initial.relations {
            if relevant.contains(&r.subject) && relevant.insert(r.object) {
                grew = true;
            }
            if relevant.contains(&r.object) && relevant.insert(r.subject) {
                grew = true;
            }
        }
        if !grew {
            return relevant;
        }
    }
}

/// Number of goal relations absent from the scene; zero iff the goal is
/// satisfied.
pub fn heuristic(scene: &Scene, goal: &GoalSpec) -> usize {
    goal.relations
        .iter()
        .filter(|r| !holds_relation(scene, r.subject, r.object, r.dir).unwrap_or(false))
        .count()
}

fn graspable(scene: &Scene, id: u32) -> bool {
    is_clear(scene, id, Direction::Top).unwrap_or(false)
}

fn with_moved(scene: &Scene, id: u32, pose: Pose) -> Scene {
    let mut next = scene.clone();
    if let Some(b) = next.blocks.get_mut(&id) {
        b.pose = pose;
    }
    next
}

/// Physically enabled successor states. Moves must strictly decrease the
/// heuristic; random placements (when allowed) are the unpruned escape
/// hatch for clearing blocks.
pub fn successors(
    scene: &Scene,
    goal: &GoalSpec,
    relevant: &BTreeSet<u32>,
    allow_place_random: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<(PlannerAction, Scene)> {
    let h0 = heuristic(scene, goal);
    let mut out = Vec::new();
    for &mover in relevant {
        if scene.blocks.get(&mover).is_none() || !graspable(scene, mover) {
            continue;
        }
        let current = scene.blocks[&mover].pose;
        for &reference in relevant {
            if reference == mover || scene.blocks.get(&reference).is_none() {
                continue;
            }
            for dir in ALL_DIRECTIONS {
                if !is_clear_excluding(scene, reference, dir, mover).unwrap_or(false) {
                    continue;
                }
                let (dx, dy, dz) = dir.displacement();
                let pose = scene.blocks[&reference].pose.translated(dx, dy, dz);
                if pose.approx_eq(&current) || pose.z < 0.5 - EPS {
                    continue;
                }
                if !scene.table.contains_footprint(pose.x, pose.y) {
                    continue;
                }
                let check = placement_valid_excluding(scene, pose, Some(mover));
                if !(check.collision_free && check.supported) {
                    continue;
                }
                let next = with_moved(scene, mover, pose);
                if heuristic(&next, goal) < h0 {
                    out.push((
                        PlannerAction::Move {
                            rel: dir,
                            mover,
                            reference,
                        },
                        next,
                    ));
                }
            }
        }
        if allow_place_random {
            if let Ok(pose) = sample_free_position(scene, rng) {
                out.push((
                    PlannerAction::PlaceRandom { mover },
                    with_moved(scene, mover, pose),
                ));
            }
        }
    }
    out
}

/// A successful plan with the scene after every action.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub actions: Vec<PlannerAction>,
    /// Initial scene followed by the scene after each action.
    pub scenes: Vec<Scene>,
    pub expansions: usize,
}

fn scene_key(scene: &Scene, relevant: &BTreeSet<u32>) -> Vec<(u32, i64, i64, i64)> {
    relevant
        .iter()
        .filter_map(|id| scene.blocks.get(id))
        .map(|b| {
            (
                b.id,
                (b.pose.x * 1e6).round() as i64,
                (b.pose.y * 1e6).round() as i64,
                (b.pose.z * 1e6).round() as i64,
            )
        })
        .collect()
}

/// Best-first search ordered by moves-so-far plus the (non-admissible)
/// missing-relation heuristic. Deterministic under a fixed seed. Fails with
/// the best heuristic reached when the expansion budget runs out.
pub fn forward_search(
    scene: &Scene,
    goal: &GoalSpec,
    config: &PlannerConfig,
) -> Result<PlanOutcome> {
    struct Node {
        scene: Scene,
        parent: Option<(usize, PlannerAction)>,
        g: usize,
        place_randoms: usize,
    }

    let relevant = relevant_objects(goal, scene);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut nodes = vec![Node {
        scene: scene.clone(),
        parent: None,
        g: 0,
        place_randoms: 0,
    }];
    let mut visited = BTreeSet::new();
    visited.insert(scene_key(scene, &relevant));

    let root_h = heuristic(scene, goal);
    let mut best_h = root_h;
    let mut heap: BinaryHeap<Reverse<(usize, usize, u64, usize)>> = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Reverse((root_h, 0, seq, 0)));

    let mut expansions = 0;
    while let Some(Reverse((_, _, _, idx))) = heap.pop() {
        let h = heuristic(&nodes[idx].scene, goal);
        if h == 0 {
            let mut actions = Vec::new();
            let mut scenes = vec![nodes[idx].scene.clone()];
            let mut at = idx;
            while let Some((parent, action)) = nodes[at].parent {
                actions.push(action);
                at = parent;
                scenes.push(nodes[at].scene.clone());
            }
            actions.reverse();
            scenes.reverse();
            return Ok(PlanOutcome {
                actions,
                scenes,
                expansions,
            });
        }
        if expansions >= config.max_expansions {
            break;
        }
        expansions += 1;
        let allow_pr = nodes[idx].place_randoms < config.max_place_random;
        let succ = successors(&nodes[idx].scene, goal, &relevant, allow_pr, &mut rng);
        for (action, next) in succ {
            let key = scene_key(&next, &relevant);
            if !visited.insert(key) {
                continue;
            }
            let g = nodes[idx].g + 1;
            let nh = heuristic(&next, goal);
            best_h = best_h.min(nh);
            let place_randoms = nodes[idx].place_randoms
                + usize::from(matches!(action, PlannerAction::PlaceRandom { .. }));
            nodes.push(Node {
                scene: next,
                parent: Some((idx, action)),
                g,
                place_randoms,
            });
            seq += 1;
            heap.push(Reverse((g + nh, g, seq, nodes.len() - 1)));
        }
    }
    Err(SpgError::PlanningFailed(best_h))
}
