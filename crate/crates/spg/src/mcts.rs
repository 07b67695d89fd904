//! The Plan stage: demonstration-guided tree search over primitive and macro
//! actions, with off-policy Q backups, an oracle pruner, and top-k plan
//! extraction.
//!
//! Each iteration selects by UCB, expands one edge, seeds the new leaf with
//! a pruner-guided rollout value, and backs values up with
//! Q(s,a) = r + γ·V(s'), V(s) = max_a Q(s,a). The rollout continuation is an
//! executable primitive chain, so its return is kept as a floor under V:
//! greedy macro rewards must beat a realizable primitive completion, not a
//! zero-initialized leaf.
//! Rewards are IoU overlaps between attempted placements and the
//! demonstration's per-transition target cuboids; a macro edge earns the
//! undiscounted sum of its internal placement rewards (discounting applies
//! per tree edge, not per inner step).

use crate::dsl::{expand_plan, is_keep_equivalent, ConceptLibrary, Plan, PlanStep, PrimOp};
use crate::error::{Result, SpgError};
use crate::scenegraph::RELATION_IOU_THRESHOLD;
use crate::sketch::GroundedSketch;
use crate::world::{
    overlap_iou3d, placement_valid_excluding, Direction, ExecContext, Pose, Scene, EPS,
    ALL_DIRECTIONS,
};

/// One demonstration transition: which block moved and where it ended up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoDiff {
    pub block_id: u32,
    pub target: Pose,
}

/// A keyframe demonstration S_1..S_g with per-transition moved-block diffs.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoTrace {
    pub instruction: String,
    pub keyframes: Vec<Scene>,
    pub diffs: Vec<DemoDiff>,
}

impl DemoTrace {
    /// Derives the diffs, insisting that exactly one block moves per
    /// transition.
    pub fn from_keyframes(instruction: impl Into<String>, keyframes: Vec<Scene>) -> Result<DemoTrace> {
        if keyframes.len() < 2 {
            return Err(SpgError::Invalid(
                "demonstration needs at least two keyframes".into(),
            ));
        }
        let mut diffs = Vec::new();
        for (t, pair) in keyframes.windows(2).enumerate() {
            let (before, after) = (&pair[0], &pair[1]);
            let mut moved = Vec::new();
            for (id, b) in &after.blocks {
                match before.blocks.get(id) {
                    Some(prev) if prev.pose.approx_eq(&b.pose) => {}
                    Some(_) => moved.push(DemoDiff {
                        block_id: *id,
                        target: b.pose,
                    }),
                    None => {
                        return Err(SpgError::Invalid(format!(
                            "block {id} appears mid-demonstration at transition {t}"
                        )))
                    }
                }
            }
            match moved.as_slice() {
                [one] => diffs.push(*one),
                _ => {
                    return Err(SpgError::Invalid(format!(
                        "transition {t} moves {} blocks, expected exactly 1",
                        moved.len()
                    )))
                }
            }
        }
        Ok(DemoTrace {
            instruction: instruction.into(),
            keyframes,
            diffs,
        })
    }
}

/// Search hyperparameters and variant switches.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub gamma: f64,
    pub c_ucb: f64,
    pub budget: usize,
    pub k: usize,
    pub use_library: bool,
    pub use_pruner: bool,
    pub iou_threshold: f64,
}

impl Default for SearchConfig {
    fn default() -> SearchConfig {
        SearchConfig {
            gamma: 0.95,
            c_ucb: std::f64::consts::SQRT_2,
            budget: 5000,
            k: 5,
            use_library: true,
            use_pruner: true,
            iou_threshold: RELATION_IOU_THRESHOLD,
        }
    }
}

/// A search edge: one primitive, or a whole concept at a greedily chosen
/// size.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Prim(PrimOp),
    Macro {
        lib_idx: usize,
        concept: String,
        size: i64,
    },
}

impl Action {
    /// Deterministic tie-break order: moves, keep, store, reset, then macros
    /// by library position and size.
    fn key(&self) -> (u8, usize, i64) {
        match self {
            Action::Prim(PrimOp::Move(d)) => {
                let rank = match d {
                    Direction::Left => 0,
                    Direction::Right => 1,
                    Direction::Front => 2,
                    Direction::Back => 3,
                    Direction::Top => 4,
                };
                (rank, 0, 0)
            }
            Action::Prim(PrimOp::Keep) => (5, 0, 0),
            Action::Prim(PrimOp::Store) => (6, 0, 0),
            Action::Prim(PrimOp::Reset) => (7, 0, 0),
            Action::Macro { lib_idx, size, .. } => (8, *lib_idx, *size),
        }
    }

    fn to_plan_step(&self) -> PlanStep {
        match self {
            Action::Prim(p) => PlanStep::Prim(*p),
            Action::Macro { concept, size, .. } => PlanStep::Macro {
                concept: concept.clone(),
                size: *size,
            },
        }
    }
}

/// A ranked search result.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanCandidate {
    pub plan: Plan,
    pub ret: f64,
    /// Per-placement rewards in attempt order.
    pub rewards: Vec<f64>,
}

/// Instrumentation of one search run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchStats {
    pub expansions: usize,
    /// Expansion count at which the best return was first reached.
    pub expansions_to_best: usize,
    pub best_return: f64,
}

// ---------------------------------------------------------------------------
// Lenient replay: invalid placements earn zero reward and leave the scene
// untouched, but every attempted placement consumes one demo transition.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct SimState {
    ctx: ExecContext,
    kf_ptr: usize,
}

fn lenient_run(state: &mut SimState, prims: &[PrimOp], demo: &DemoTrace) -> Vec<f64> {
    let mut placements = Vec::new();
    for p in prims {
        match p {
            PrimOp::Move(d) => {
                let (dx, dy, dz) = d.displacement();
                state.ctx.head.center = state.ctx.head.center.translated(dx, dy, dz);
            }
            PrimOp::Store => state.ctx.head_stack.push(state.ctx.head.center),
            PrimOp::Reset => {
                if let Some(p) = state.ctx.head_stack.pop() {
                    state.ctx.head.center = p;
                }
            }
            PrimOp::Keep => {
                let mut reward = 0.0;
                if state.kf_ptr < demo.diffs.len() {
                    let cuboid = state.ctx.head.center;
                    if let Some(&id) = state.ctx.remaining.first() {
                        let check = placement_valid_excluding(&state.ctx.scene, cuboid, Some(id));
                        if check.collision_free && check.supported {
                            state.ctx.remaining.remove(0);
                            state.ctx.scene.blocks.get_mut(&id).expect("id in scene").pose =
                                cuboid;
                            reward =
                                overlap_iou3d(cuboid, demo.diffs[state.kf_ptr].target);
                        }
                    }
                }
                placements.push(reward);
                state.kf_ptr = (state.kf_ptr + 1).min(demo.diffs.len());
            }
        }
    }
    placements
}

/// Executes one macro from `ctx`, scoring placements against the demo.
/// Returns (total reward, placements consumed, resulting state).
pub fn macro_reward(
    ctx: &ExecContext,
    kf_ptr: usize,
    concept: &str,
    size: i64,
    demo: &DemoTrace,
    library: &ConceptLibrary,
) -> Result<(f64, usize, ExecContext)> {
    let plan: Plan = vec![PlanStep::Macro {
        concept: concept.to_string(),
        size,
    }];
    let prims = expand_plan(&plan, library)?;
    let mut state = SimState {
        ctx: ctx.clone(),
        kf_ptr,
    };
    let placements = lenient_run(&mut state, &prims, demo);
    Ok((placements.iter().sum(), placements.len(), state.ctx))
}

/// Smallest size whose total macro reward attains the maximum over the sizes
/// examined. The size sweep stops once a size consumes all remaining demo
/// transitions.
pub fn greedy_macro_size(
    ctx: &ExecContext,
    kf_ptr: usize,
    concept: &str,
    demo: &DemoTrace,
    library: &ConceptLibrary,
) -> i64 {
    let remaining = demo.diffs.len().saturating_sub(kf_ptr).max(1);
    let mut best_total = f64::NEG_INFINITY;
    let mut best_size = 1i64;
    for size in 1..=(remaining as i64) {
        let (total, consumed) = match macro_reward(ctx, kf_ptr, concept, size, demo, library) {
            Ok((t, c, _)) => (t, c),
            Err(_) => (0.0, 0),
        };
        if total > best_total + 1e-12 {
            best_total = total;
            best_size = size;
        }
        if consumed >= remaining {
            break;
        }
    }
    best_size
}

/// Deterministic geometric pruner: keep when the head already covers the next
/// target, otherwise step along the axis of largest center offset toward it.
/// Never emits store/reset. When no axis admits a move toward the target
/// (the target lies strictly below), falls back to the feasible move that
/// minimizes the remaining distance.
pub fn pruner_oracle(head: Pose, target: Pose, threshold: f64) -> PrimOp {
    if overlap_iou3d(head, target) > threshold {
        return PrimOp::Keep;
    }
    let offsets = [target.x - head.x, target.y - head.y, target.z - head.z];
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&a, &b| {
        offsets[b]
            .abs()
            .partial_cmp(&offsets[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    for axis in axes {
        let off = offsets[axis];
        if off.abs() <= EPS {
            continue;
        }
        let dir = match (axis, off > 0.0) {
            (0, true) => Some(Direction::Right),
            (0, false) => Some(Direction::Left),
            (1, true) => Some(Direction::Front),
            (1, false) => Some(Direction::Back),
            (2, true) => Some(Direction::Top),
            // There is no `down` direction; this axis cannot be improved.
            (_, false) => None,
            _ => unreachable!(),
        };
        if let Some(d) = dir {
            return PrimOp::Move(d);
        }
    }
    let dist = |p: Pose| {
        let (dx, dy, dz) = (p.x - target.x, p.y - target.y, p.z - target.z);
        dx * dx + dy * dy + dz * dz
    };
    let best = ALL_DIRECTIONS
        .into_iter()
        .min_by(|a, b| {
            let pa = {
                let (dx, dy, dz) = a.displacement();
                dist(head.translated(dx, dy, dz))
            };
            let pb = {
                let (dx, dy, dz) = b.displacement();
                dist(head.translated(dx, dy, dz))
            };
            pa.partial_cmp(&pb).unwrap()
        })
        .expect("five directions");
    PrimOp::Move(best)
}

// ---------------------------------------------------------------------------
// Search tree
// ---------------------------------------------------------------------------

struct EdgeSlot {
    action: Action,
    child: Option<usize>,
    reward: f64,
    placements: Vec<f64>,
    q: f64,
    n: u32,
}

struct Node {
    state: SimState,
    edges: Option<Vec<EdgeSlot>>,
    visits: u32,
    value: f64,
    /// Rollout value at creation. The rollout continuation is an executable
    /// primitive chain (it follows the oracle action, which with the pruner
    /// is this node's own primitive edge), so it is a realizable lower bound
    /// on the node's value and backups never let V sink below it.
    prior: f64,
}

struct Tree<'a> {
    nodes: Vec<Node>,
    demo: &'a DemoTrace,
    library: &'a ConceptLibrary,
    config: &'a SearchConfig,
}

impl<'a> Tree<'a> {
    fn terminal(&self, id: usize) -> bool {
        self.nodes[id].state.kf_ptr >= self.demo.diffs.len()
    }

    fn available_actions(&self, state: &SimState) -> Vec<Action> {
        let mut actions = Vec::new();
        if self.config.use_pruner {
            if state.kf_ptr < self.demo.diffs.len() {
                let target = self.demo.diffs[state.kf_ptr].target;
                actions.push(Action::Prim(pruner_oracle(
                    state.ctx.head.center,
                    target,
                    self.config.iou_threshold,
                )));
            }
        } else {
            for d in ALL_DIRECTIONS {
                actions.push(Action::Prim(PrimOp::Move(d)));
            }
            if !state.ctx.remaining.is_empty() {
                actions.push(Action::Prim(PrimOp::Keep));
            }
            actions.push(Action::Prim(PrimOp::Store));
            if !state.ctx.head_stack.is_empty() {
                actions.push(Action::Prim(PrimOp::Reset));
            }
        }
        if self.config.use_library {
            for (lib_idx, program) in self.library.programs().iter().enumerate() {
                let size = greedy_macro_size(
                    &state.ctx,
                    state.kf_ptr,
                    &program.name,
                    self.demo,
                    self.library,
                );
                // A size-1 macro that just places one block at the head is a
                // reward-for-reward duplicate of `keep`; keeping both would
                // split visits between identical subtrees and fragment the
                // budget as the library grows. The generalizer restores the
                // call spelling where a uniform skeleton needs it.
                let plan: Plan = vec![PlanStep::Macro {
                    concept: program.name.clone(),
                    size,
                }];
                match expand_plan(&plan, self.library) {
                    // A macro whose expansion fails (e.g. a fixed-shape
                    // concept degenerate at this size) would be a no-op edge
                    // to a duplicate of the current state.
                    Err(_) => continue,
                    Ok(prims) => {
                        if size == 1 && is_keep_equivalent(&prims) {
                            continue;
                        }
                    }
                }
                actions.push(Action::Macro {
                    lib_idx,
                    concept: program.name.clone(),
                    size,
                });
            }
        }
        actions.sort_by_key(|a| a.key());
        actions
    }

    fn ensure_edges(&mut self, id: usize) {
        if self.nodes[id].edges.is_none() {
            let actions = self.available_actions(&self.nodes[id].state);
            self.nodes[id].edges = Some(
                actions
                    .into_iter()
                    .map(|action| EdgeSlot {
                        action,
                        child: None,
                        reward: 0.0,
                        placements: Vec::new(),
                        q: 0.0,
                        n: 0,
                    })
                    .collect(),
            );
        }
    }

    fn apply(&self, state: &SimState, action: &Action) -> (SimState, f64, Vec<f64>) {
        let mut next = state.clone();
        let placements = match action {
            Action::Prim(p) => lenient_run(&mut next, &[*p], self.demo),
            Action::Macro { concept, size, .. } => {
                let plan: Plan = vec![PlanStep::Macro {
                    concept: concept.clone(),
                    size: *size,
                }];
                // Library concepts always expand: they were registered with
                // resolved dependencies and size ≥ 1.
                let prims = expand_plan(&plan, self.library).unwrap_or_default();
                lenient_run(&mut next, &prims, self.demo)
            }
        };
        let reward = placements.iter().sum();
        (next, reward, placements)
    }

    /// Pruner-guided rollout from a state: follow the oracle to the end of
    /// the demonstration and report the discounted return. Used to seed leaf
    /// values so that deep primitive completions compete with greedy macro
    /// rewards from the first visit. Without the pruner there is no rollout
    /// policy and leaves start at zero.
    fn rollout_value(&self, state: &SimState) -> f64 {
        if !self.config.use_pruner {
            return 0.0;
        }
        let mut sim = state.clone();
        let mut ret = 0.0;
        let mut discount = 1.0;
        // The oracle's fallback moves cannot always make progress (targets
        // strictly below the head); the cap breaks such non-consuming loops.
        let cap = 10 * self.demo.diffs.len() + 20;
        for _ in 0..cap {
            if sim.kf_ptr >= self.demo.diffs.len() {
                break;
            }
            let target = self.demo.diffs[sim.kf_ptr].target;
            let prim = pruner_oracle(sim.ctx.head.center, target, self.config.iou_threshold);
            let placements = lenient_run(&mut sim, &[prim], self.demo);
            ret += discount * placements.iter().sum::<f64>();
            discount *= self.config.gamma;
        }
        ret
    }

    /// Optimistic value bound for an unexpanded leaf: every remaining demo
    /// transition could still earn reward 1 under per-edge discounting, so
    /// V ≤ Σ_{t<R} γ^t = (1 − γ^R)/(1 − γ). Fresh leaves start here, which
    /// makes selection prefer branches that can still place every remaining
    /// block over greedy macros that burn transitions for partial reward;
    /// the bound is replaced by backed-up child values once the leaf expands.
    fn optimistic_bound(&self, state: &SimState) -> f64 {
        let remaining = self.demo.diffs.len().saturating_sub(state.kf_ptr) as i32;
        let gamma = self.config.gamma;
        if (gamma - 1.0).abs() < 1e-12 {
            return remaining as f64;
        }
        (1.0 - gamma.powi(remaining)) / (1.0 - gamma)
    }

    fn select_edge(&self, id: usize) -> Option<usize> {
        let node = &self.nodes[id];
        let edges = node.edges.as_ref()?;
        if edges.is_empty() {
            return None;
        }
        if let Some(i) = edges.iter().position(|e| e.n == 0) {
            return Some(i);
        }
        let ln_visits = (node.visits.max(1) as f64).ln();
        edges
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                let ua = a.q + self.config.c_ucb * (ln_visits / a.n as f64).sqrt();
                let ub = b.q + self.config.c_ucb * (ln_visits / b.n as f64).sqrt();
                ua.partial_cmp(&ub).unwrap()
            })
            .map(|(i, _)| i)
    }
}

/// Runs demonstration-guided MCTS and returns the top-k plan candidates with
/// search statistics.
pub fn plan_search(
    demo: &DemoTrace,
    grounded: &GroundedSketch,
    library: &ConceptLibrary,
    config: &SearchConfig,
) -> Result<(Vec<PlanCandidate>, SearchStats)> {
    if demo.diffs.is_empty() {
        return Err(SpgError::SearchStuck);
    }
    let root_ctx = ExecContext::new(
        demo.keyframes[0].clone(),
        demo.diffs[0].target,
        grounded.object_ids.clone(),
    );
    let mut tree = Tree {
        nodes: vec![Node {
            state: SimState {
                ctx: root_ctx,
                kf_ptr: 0,
            },
            edges: None,
            visits: 0,
            value: 0.0,
            prior: 0.0,
        }],
        demo,
        library,
        config,
    };
    tree.ensure_edges(0);
    if tree.nodes[0].edges.as_ref().map_or(true, Vec::is_empty) {
        return Err(SpgError::SearchStuck);
    }

    let mut stats = SearchStats {
        expansions: 0,
        expansions_to_best: 0,
        best_return: f64::NEG_INFINITY,
    };
    for step in 1..=config.budget {
        stats.expansions = step;
        // Selection until an unexpanded edge or a terminal node.
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut cur = 0usize;
        loop {
            if tree.terminal(cur) {
                break;
            }
            tree.ensure_edges(cur);
            let Some(ei) = tree.select_edge(cur) else {
                break;
            };
            let expanded = tree.nodes[cur].edges.as_ref().unwrap()[ei].child.is_some();
            if expanded {
                let child = tree.nodes[cur].edges.as_ref().unwrap()[ei].child.unwrap();
                path.push((cur, ei));
                cur = child;
            } else {
                let action = tree.nodes[cur].edges.as_ref().unwrap()[ei].action.clone();
                let (next, reward, placements) = tree.apply(&tree.nodes[cur].state, &action);
                let floor = tree.rollout_value(&next);
                let optimistic = tree.optimistic_bound(&next);
                let child = tree.nodes.len();
                tree.nodes.push(Node {
                    state: next,
                    edges: None,
                    visits: 0,
                    value: optimistic.max(floor),
                    prior: floor,
                });
                let edge = &mut tree.nodes[cur].edges.as_mut().unwrap()[ei];
                edge.child = Some(child);
                edge.reward = reward;
                edge.placements = placements;
                path.push((cur, ei));
                cur = child;
                break;
            }
        }

        // Backup along the path.
        tree.nodes[cur].visits += 1;
        for &(nid, ei) in path.iter().rev() {
            let (reward, child) = {
                let edge = &tree.nodes[nid].edges.as_ref().unwrap()[ei];
                (edge.reward, edge.child.unwrap())
            };
            let child_value = tree.nodes[child].value;
            let q = reward + config.gamma * child_value;
            {
                let edge = &mut tree.nodes[nid].edges.as_mut().unwrap()[ei];
                edge.q = q;
                edge.n += 1;
            }
            let node = &mut tree.nodes[nid];
            node.visits += 1;
            node.value = node
                .edges
                .as_ref()
                .unwrap()
                .iter()
                .filter(|e| e.n > 0)
                .map(|e| e.q)
                .fold(node.prior, f64::max);
        }

        // Instrumentation: discounted return of the just-visited path.
        let mut ret = 0.0;
        let mut discount = 1.0;
        for &(nid, ei) in &path {
            ret += discount * tree.nodes[nid].edges.as_ref().unwrap()[ei].reward;
            discount *= config.gamma;
        }
        if ret > stats.best_return + 1e-12 {
            stats.best_return = ret;
            stats.expansions_to_best = step;
        }
    }

    // Top-k root-to-leaf paths by (return desc, length asc, action order).
    let mut paths: Vec<(f64, Vec<(u8, usize, i64)>, Plan, Vec<f64>)> = Vec::new();
    let mut stack: Vec<(usize, f64, f64, Vec<(u8, usize, i64)>, Plan, Vec<f64>)> =
        vec![(0, 0.0, 1.0, Vec::new(), Vec::new(), Vec::new())];
    while let Some((id, ret, discount, keys, plan, rewards)) = stack.pop() {
        let expanded: Vec<usize> = tree.nodes[id]
            .edges
            .as_ref()
            .map(|edges| {
                edges
                    .iter()
                    .enumerate()
                    .filter(|(_, e)| e.child.is_some())
                    .map(|(i, _)| i)
                    .collect()
            })
            .unwrap_or_default();
        if expanded.is_empty() {
            if !plan.is_empty() {
                paths.push((ret, keys, plan, rewards));
            }
            continue;
        }
        for ei in expanded {
            let edge = &tree.nodes[id].edges.as_ref().unwrap()[ei];
            let mut keys = keys.clone();
            keys.push(edge.action.key());
            let mut plan = plan.clone();
            plan.push(edge.action.to_plan_step());
            let mut rewards = rewards.clone();
            rewards.extend_from_slice(&edge.placements);
            stack.push((
                edge.child.unwrap(),
                ret + discount * edge.reward,
                discount * config.gamma,
                keys,
                plan,
                rewards,
            ));
        }
    }
    paths.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.2.len().cmp(&b.2.len()))
            .then(a.1.cmp(&b.1))
    });
    let candidates = paths
        .into_iter()
        .take(config.k)
        .map(|(ret, _, plan, rewards)| PlanCandidate { plan, ret, rewards })
        .collect();
    Ok((candidates, stats))
}

/// Recomputes a plan's discounted return under lenient replay (the invariant
/// checked against [`PlanCandidate::ret`]).
pub fn replay_return(
    plan: &Plan,
    demo: &DemoTrace,
    grounded: &GroundedSketch,
    library: &ConceptLibrary,
    gamma: f64,
) -> f64 {
    let mut state = SimState {
        ctx: ExecContext::new(
            demo.keyframes[0].clone(),
            demo.diffs[0].target,
            grounded.object_ids.clone(),
        ),
        kf_ptr: 0,
    };
    let mut ret = 0.0;
    let mut discount = 1.0;
    for step in plan {
        let prims = match step {
            PlanStep::Prim(p) => vec![*p],
            PlanStep::Macro { concept, size } => {
                let single: Plan = vec![PlanStep::Macro {
                    concept: concept.clone(),
                    size: *size,
                }];
                expand_plan(&single, library).unwrap_or_default()
            }
        };
        let placements = lenient_run(&mut state, &prims, demo);
        ret += discount * placements.iter().sum::<f64>();
        discount *= gamma;
    }
    ret
}

/// Lenient replay of a primitive sequence against a demo from its initial
/// scene, returning the per-placement rewards in attempt order.
pub fn replay_placement_rewards(
    prims: &[PrimOp],
    demo: &DemoTrace,
    grounded: &GroundedSketch,
) -> Vec<f64> {
    let mut state = SimState {
        ctx: ExecContext::new(
            demo.keyframes[0].clone(),
            demo.diffs[0].target,
            grounded.object_ids.clone(),
        ),
        kf_ptr: 0,
    };
    lenient_run(&mut state, prims, demo)
}
