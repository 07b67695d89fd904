//! Deterministic block-world state and primitive action semantics.
//!
//! Blocks are unit cubes on a bounded table. The placement cursor (`Head`)
//! is an imaginary unit cuboid moved around by primitive actions; placing a
//! block teleports it from wherever it currently rests to the head center,
//! subject to collision and support checks.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpgError};

/// Geometric tolerance for overlap, support and footprint checks.
pub const EPS: f64 = 1e-6;

/// Edge length of every block (and of the head cuboid).
pub const BLOCK_EDGE: f64 = 1.0;

/// 3D center of a unit cuboid. A block resting on the table has z = 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Pose { x, y, z }
    }

    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> Pose {
        Pose::new(self.x + dx, self.y + dy, self.z + dz)
    }

    /// True when all three coordinates agree within `EPS`.
    pub fn approx_eq(&self, other: &Pose) -> bool {
        (self.x - other.x).abs() <= EPS
            && (self.y - other.y).abs() <= EPS
            && (self.z - other.z).abs() <= EPS
    }
}

/// Image-plane bounding box with depth of center: (x1, y1, x2, y2, d).
/// Image x tracks world x, image vertical tracks world z, depth is world y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox5 {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub d: f64,
}

/// The five primitive head directions, each a unit axis displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
    Front,
    Back,
    Top,
}

pub const ALL_DIRECTIONS: [Direction; 5] = [
    Direction::Left,
    Direction::Right,
    Direction::Front,
    Direction::Back,
    Direction::Top,
];

impl Direction {
    pub fn displacement(&self) -> (f64, f64, f64) {
        match self {
            Direction::Left => (-BLOCK_EDGE, 0.0, 0.0),
            Direction::Right => (BLOCK_EDGE, 0.0, 0.0),
            Direction::Front => (0.0, BLOCK_EDGE, 0.0),
            Direction::Back => (0.0, -BLOCK_EDGE, 0.0),
            Direction::Top => (0.0, 0.0, BLOCK_EDGE),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
            Direction::Front => "front",
            Direction::Back => "back",
            Direction::Top => "top",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s {
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            "front" => Some(Direction::Front),
            "back" => Some(Direction::Back),
            "top" => Some(Direction::Top),
            _ => None,
        }
    }
}

/// A unit-cube block with symbolic visual attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: u32,
    pub color: String,
    pub shape: String,
    pub pose: Pose,
}

/// Axis-aligned table rectangle in (x, y) at z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableExtent {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl TableExtent {
    pub const DEFAULT: TableExtent = TableExtent {
        x_min: 0.0,
        y_min: 0.0,
        x_max: 20.0,
        y_max: 20.0,
    };

    /// Whether a unit-cube footprint centered at (x, y) lies on the table.
    pub fn contains_footprint(&self, x: f64, y: f64) -> bool {
        let h = BLOCK_EDGE / 2.0;
        x - h >= self.x_min - EPS
            && x + h <= self.x_max + EPS
            && y - h >= self.y_min - EPS
            && y + h <= self.y_max + EPS
    }
}

/// Object-centric world state: blocks keyed by id on a bounded table.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub blocks: BTreeMap<u32, Block>,
    pub table: TableExtent,
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    table: [f64; 4],
    blocks: Vec<BlockFile>,
}

#[derive(Serialize, Deserialize)]
struct BlockFile {
    id: u32,
    color: String,
    shape: String,
    pose: [f64; 3],
}

impl Serialize for Scene {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let file = SceneFile {
            table: [
                self.table.x_min,
                self.table.y_min,
                self.table.x_max,
                self.table.y_max,
            ],
            blocks: self
                .blocks
                .values()
                .map(|b| BlockFile {
                    id: b.id,
                    color: b.color.clone(),
                    shape: b.shape.clone(),
                    pose: [b.pose.x, b.pose.y, b.pose.z],
                })
                .collect(),
        };
        file.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Scene {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let file = SceneFile::deserialize(de)?;
        let mut scene = Scene::empty(TableExtent {
            x_min: file.table[0],
            y_min: file.table[1],
            x_max: file.table[2],
            y_max: file.table[3],
        });
        for b in file.blocks {
            scene.blocks.insert(
                b.id,
                Block {
                    id: b.id,
                    color: b.color,
                    shape: b.shape,
                    pose: Pose::new(b.pose[0], b.pose[1], b.pose[2]),
                },
            );
        }
        Ok(scene)
    }
}

impl Scene {
    pub fn empty(table: TableExtent) -> Scene {
        Scene {
            blocks: BTreeMap::new(),
            table,
        }
    }

    pub fn with_default_table() -> Scene {
        Scene::empty(TableExtent::DEFAULT)
    }

    pub fn insert(&mut self, block: Block) {
        self.blocks.insert(block.id, block);
    }

    pub fn block(&self, id: u32) -> Result<&Block> {
        self.blocks.get(&id).ok_or(SpgError::UnknownBlock(id))
    }
}

/// The placement cursor: a unit cuboid identified by its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Head {
    pub center: Pose,
}

impl Head {
    pub fn at(center: Pose) -> Head {
        Head { center }
    }
}

/// Primitive actions over the execution context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimitiveAction {
    MoveHead(Direction),
    AssignHead(u32),
    KeepAtHead,
    StoreHead,
    ResetHead,
}

/// Outcome of a `KeepAtHead` attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementResult {
    pub valid: bool,
    /// Center of the attempted cuboid (the head center at placement time).
    pub cuboid: Pose,
    /// Id of the block that was (or would have been) placed.
    pub block_id: Option<u32>,
}

/// Mutable execution state threaded through program interpretation and search.
///
/// Value type: cloning it forks the whole world, which is what tree search
/// relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecContext {
    pub scene: Scene,
    pub head: Head,
    pub head_stack: Vec<Pose>,
    /// Ordered ids still available for placement; consumed front-first.
    pub remaining: Vec<u32>,
}

impl ExecContext {
    pub fn new(scene: Scene, head: Pose, remaining: Vec<u32>) -> ExecContext {
        ExecContext {
            scene,
            head: Head::at(head),
            head_stack: Vec::new(),
            remaining,
        }
    }

    /// Applies one primitive. Returns the placement result for `KeepAtHead`,
    /// `None` for all other actions.
    pub fn apply_primitive(&mut self, action: PrimitiveAction) -> Result<Option<PlacementResult>> {
        match action {
            PrimitiveAction::MoveHead(dir) => {
                let (dx, dy, dz) = dir.displacement();
                self.head.center = self.head.center.translated(dx, dy, dz);
                Ok(None)
            }
            PrimitiveAction::AssignHead(id) => {
                self.head.center = self.scene.block(id)?.pose;
                Ok(None)
            }
            PrimitiveAction::StoreHead => {
                self.head_stack.push(self.head.center);
                Ok(None)
            }
            PrimitiveAction::ResetHead => {
                let top = self.head_stack.pop().ok_or(SpgError::EmptyHeadStack)?;
                self.head.center = top;
                Ok(None)
            }
            PrimitiveAction::KeepAtHead => {
                if self.remaining.is_empty() {
                    return Err(SpgError::NoObjectsLeft);
                }
                let id = self.remaining[0];
                let target = self.head.center;
                let check = placement_valid_excluding(&self.scene, target, Some(id));
                if check.collision_free && check.supported {
                    self.remaining.remove(0);
                    let block = self
                        .scene
                        .blocks
                        .get_mut(&id)
                        .ok_or(SpgError::UnknownBlock(id))?;
                    block.pose = target;
                    Ok(Some(PlacementResult {
                        valid: true,
                        cuboid: target,
                        block_id: Some(id),
                    }))
                } else {
                    Ok(Some(PlacementResult {
                        valid: false,
                        cuboid: target,
                        block_id: Some(id),
                    }))
                }
            }
        }
    }
}

/// Overlap volume of two axis-aligned unit cubes given by their centers.
pub fn overlap_volume(a: Pose, b: Pose) -> f64 {
    let side = |da: f64| (BLOCK_EDGE - da.abs()).max(0.0);
    side(a.x - b.x) * side(a.y - b.y) * side(a.z - b.z)
}

/// 3D intersection-over-union of two axis-aligned unit cubes.
pub fn overlap_iou3d(a: Pose, b: Pose) -> f64 {
    let inter = overlap_volume(a, b);
    let union = 2.0 * BLOCK_EDGE.powi(3) - inter;
    inter / union
}

/// Projects a block to its (x1, y1, x2, y2, d) bounding box.
pub fn render_bbox(block: &Block) -> BBox5 {
    let h = BLOCK_EDGE / 2.0;
    BBox5 {
        x1: block.pose.x - h,
        y1: block.pose.z - h,
        x2: block.pose.x + h,
        y2: block.pose.z + h,
        d: block.pose.y,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementCheck {
    pub collision_free: bool,
    pub supported: bool,
}

/// Collision and support check for a unit cuboid against a scene.
pub fn placement_valid(scene: &Scene, cuboid: Pose) -> PlacementCheck {
    placement_valid_excluding(scene, cuboid, None)
}

/// Same as [`placement_valid`] but ignoring one block (the one being moved).
pub fn placement_valid_excluding(scene: &Scene, cuboid: Pose, exclude: Option<u32>) -> PlacementCheck {
    let mut collision_free = true;
    let mut supported = false;
    let h = BLOCK_EDGE / 2.0;

    if (cuboid.z - h).abs() <= EPS && scene.table.contains_footprint(cuboid.x, cuboid.y) {
        supported = true;
    }
    for block in scene.blocks.values() {
        if Some(block.id) == exclude {
            continue;
        }
        if overlap_volume(block.pose, cuboid) > EPS {
            collision_free = false;
        }
        // Full support: top face of the carrier coincides with our bottom
        // face and the (x, y) centers match exactly.
        if (block.pose.z + BLOCK_EDGE - cuboid.z).abs() <= EPS
            && (block.pose.x - cuboid.x).abs() <= EPS
            && (block.pose.y - cuboid.y).abs() <= EPS
        {
            supported = true;
        }
    }
    PlacementCheck {
        collision_free,
        supported,
    }
}

/// Whether the cell one unit in `dir` from the block is unoccupied.
pub fn is_clear(scene: &Scene, block_id: u32, dir: Direction) -> Result<bool> {
    let pose = scene.block(block_id)?.pose;
    let (dx, dy, dz) = dir.displacement();
    let probe = pose.translated(dx, dy, dz);
    Ok(scene
        .blocks
        .values()
        .all(|b| b.id == block_id || overlap_volume(b.pose, probe) <= EPS))
}

/// Variant of [`is_clear`] that also ignores `exclude` (a block about to be
/// lifted away).
pub fn is_clear_excluding(
    scene: &Scene,
    block_id: u32,
    dir: Direction,
    exclude: u32,
) -> Result<bool> {
    let pose = scene.block(block_id)?.pose;
    let (dx, dy, dz) = dir.displacement();
    let probe = pose.translated(dx, dy, dz);
    Ok(scene
        .blocks
        .values()
        .all(|b| b.id == block_id || b.id == exclude || overlap_volume(b.pose, probe) <= EPS))
}

/// Rejection-samples a collision-free on-table pose (z = 0.5).
pub fn sample_free_position<R: Rng>(scene: &Scene, rng: &mut R) -> Result<Pose> {
    let h = BLOCK_EDGE / 2.0;
    let t = &scene.table;
    for _ in 0..10_000 {
        let x = rng.gen_range(t.x_min + h..=t.x_max - h);
        let y = rng.gen_range(t.y_min + h..=t.y_max - h);
        let pose = Pose::new(x, y, h);
        let check = placement_valid(scene, pose);
        if check.collision_free && check.supported {
            return Ok(pose);
        }
    }
    Err(SpgError::TableFull)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block(id: u32, x: f64, y: f64, z: f64) -> Block {
        Block {
            id,
            color: "red".into(),
            shape: "cube".into(),
            pose: Pose::new(x, y, z),
        }
    }

    fn ctx_with_blocks(blocks: Vec<Block>, head: Pose, remaining: Vec<u32>) -> ExecContext {
        let mut scene = Scene::with_default_table();
        for b in blocks {
            scene.insert(b);
        }
        ExecContext::new(scene, head, remaining)
    }

    #[test]
    fn move_head_unit_displacement() {
        let mut ctx = ctx_with_blocks(vec![], Pose::new(3.0, 3.0, 0.5), vec![]);
        ctx.apply_primitive(PrimitiveAction::MoveHead(Direction::Right))
            .unwrap();
        assert_eq!(ctx.head.center, Pose::new(4.0, 3.0, 0.5));
    }

    #[test]
    fn store_reset_roundtrip() {
        let mut ctx = ctx_with_blocks(vec![], Pose::new(3.0, 3.0, 0.5), vec![]);
        ctx.apply_primitive(PrimitiveAction::StoreHead).unwrap();
        ctx.apply_primitive(PrimitiveAction::MoveHead(Direction::Top))
            .unwrap();
        ctx.apply_primitive(PrimitiveAction::ResetHead).unwrap();
        assert_eq!(ctx.head.center, Pose::new(3.0, 3.0, 0.5));
        assert!(ctx.head_stack.is_empty());
    }

    #[test]
    fn reset_on_empty_stack_errors() {
        let mut ctx = ctx_with_blocks(vec![], Pose::new(0.5, 0.5, 0.5), vec![]);
        assert!(matches!(
            ctx.apply_primitive(PrimitiveAction::ResetHead),
            Err(SpgError::EmptyHeadStack)
        ));
    }

    #[test]
    fn keep_consumes_first_remaining() {
        let mut ctx = ctx_with_blocks(
            vec![block(4, 10.5, 10.5, 0.5), block(7, 12.5, 10.5, 0.5)],
            Pose::new(3.5, 3.5, 0.5),
            vec![4, 7],
        );
        let res = ctx
            .apply_primitive(PrimitiveAction::KeepAtHead)
            .unwrap()
            .unwrap();
        assert!(res.valid);
        assert_eq!(res.block_id, Some(4));
        assert_eq!(ctx.remaining, vec![7]);
        assert_eq!(ctx.scene.block(4).unwrap().pose, Pose::new(3.5, 3.5, 0.5));
    }

    #[test]
    fn keep_with_no_objects_errors() {
        let mut ctx = ctx_with_blocks(vec![], Pose::new(3.5, 3.5, 0.5), vec![]);
        assert!(matches!(
            ctx.apply_primitive(PrimitiveAction::KeepAtHead),
            Err(SpgError::NoObjectsLeft)
        ));
    }

    #[test]
    fn invalid_placement_does_not_mutate() {
        // Floating target: head one unit above an empty cell.
        let mut ctx = ctx_with_blocks(
            vec![block(1, 10.5, 10.5, 0.5)],
            Pose::new(3.5, 3.5, 1.5),
            vec![1],
        );
        let before = ctx.scene.clone();
        let res = ctx
            .apply_primitive(PrimitiveAction::KeepAtHead)
            .unwrap()
            .unwrap();
        assert!(!res.valid);
        assert_eq!(ctx.scene, before);
        assert_eq!(ctx.remaining, vec![1]);
    }

    #[test]
    fn iou_values() {
        let a = Pose::new(3.0, 3.0, 0.5);
        assert!((overlap_iou3d(a, a) - 1.0).abs() < 1e-12);
        assert_eq!(overlap_iou3d(a, a.translated(2.0, 0.0, 0.0)), 0.0);
        let third = overlap_iou3d(a, a.translated(0.5, 0.0, 0.0));
        assert!((third - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn render_bbox_formula() {
        let b = block(0, 3.0, 4.0, 0.5);
        let bb = render_bbox(&b);
        assert_eq!((bb.x1, bb.y1, bb.x2, bb.y2, bb.d), (2.5, 0.0, 3.5, 1.0, 4.0));
        let b2 = block(1, 0.5, 0.5, 0.5);
        let bb2 = render_bbox(&b2);
        assert_eq!(
            (bb2.x1, bb2.y1, bb2.x2, bb2.y2, bb2.d),
            (0.0, 0.0, 1.0, 1.0, 0.5)
        );
    }

    #[test]
    fn bbox_depth_only_differs() {
        let a = render_bbox(&block(0, 3.0, 4.0, 0.5));
        let b = render_bbox(&block(1, 3.0, 9.0, 0.5));
        assert_eq!((a.x1, a.y1, a.x2, a.y2), (b.x1, b.y1, b.x2, b.y2));
        assert_ne!(a.d, b.d);
    }

    #[test]
    fn placement_validity_cases() {
        let empty = Scene::with_default_table();
        let on_table = placement_valid(&empty, Pose::new(3.5, 3.5, 0.5));
        assert!(on_table.collision_free && on_table.supported);

        let floating = placement_valid(&empty, Pose::new(3.5, 3.5, 1.5));
        assert!(floating.collision_free && !floating.supported);

        let mut scene = Scene::with_default_table();
        scene.insert(block(0, 3.5, 3.5, 0.5));
        let stacked = placement_valid(&scene, Pose::new(3.5, 3.5, 1.5));
        assert!(stacked.collision_free && stacked.supported);

        let off_table = placement_valid(&empty, Pose::new(-0.5, 3.5, 0.5));
        assert!(!off_table.supported);
    }

    #[test]
    fn partial_overlap_support_rejected() {
        let mut scene = Scene::with_default_table();
        scene.insert(block(0, 3.5, 3.5, 0.5));
        let check = placement_valid(&scene, Pose::new(4.0, 3.5, 1.5));
        assert!(!check.supported);
    }

    #[test]
    fn is_clear_cases() {
        let mut scene = Scene::with_default_table();
        scene.insert(block(0, 3.5, 3.5, 0.5));
        assert!(is_clear(&scene, 0, Direction::Right).unwrap());
        scene.insert(block(1, 4.5, 3.5, 0.5));
        assert!(!is_clear(&scene, 0, Direction::Right).unwrap());
        scene.insert(block(2, 3.5, 3.5, 1.5));
        assert!(!is_clear(&scene, 0, Direction::Top).unwrap());
        assert!(matches!(
            is_clear(&scene, 99, Direction::Left),
            Err(SpgError::UnknownBlock(99))
        ));
    }

    #[test]
    fn sample_free_position_is_deterministic_and_valid() {
        let scene = Scene::with_default_table();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p1 = sample_free_position(&scene, &mut rng).unwrap();
        let check = placement_valid(&scene, p1);
        assert!(check.collision_free && check.supported);
        assert_eq!(p1.z, 0.5);

        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let p2 = sample_free_position(&scene, &mut rng2).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn sample_free_position_full_table_errors() {
        // 1x1 table fully occupied by one block.
        let mut scene = Scene::empty(TableExtent {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 1.0,
            y_max: 1.0,
        });
        scene.insert(block(0, 0.5, 0.5, 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_free_position(&scene, &mut rng),
            Err(SpgError::TableFull)
        ));
    }

    #[test]
    fn scene_json_roundtrip() {
        let mut scene = Scene::with_default_table();
        scene.insert(block(3, 1.5, 2.5, 0.5));
        let text = serde_json::to_string(&scene).unwrap();
        let back: Scene = serde_json::from_str(&text).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn lifo_law_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut ctx = ctx_with_blocks(vec![], Pose::new(5.0, 5.0, 0.5), vec![]);
            let mut expected: Vec<Pose> = Vec::new();
            for _ in 0..rng.gen_range(1..20) {
                match rng.gen_range(0..3) {
                    0 => {
                        expected.push(ctx.head.center);
                        ctx.apply_primitive(PrimitiveAction::StoreHead).unwrap();
                    }
                    1 => {
                        let dir = ALL_DIRECTIONS[rng.gen_range(0..5)];
                        ctx.apply_primitive(PrimitiveAction::MoveHead(dir)).unwrap();
                    }
                    _ => {
                        if let Some(want) = expected.pop() {
                            ctx.apply_primitive(PrimitiveAction::ResetHead).unwrap();
                            assert_eq!(ctx.head.center, want);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn opposite_moves_cancel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let start = Pose::new(
                rng.gen_range(0.0..20.0),
                rng.gen_range(0.0..20.0),
                rng.gen_range(0.5..5.0),
            );
            let mut ctx = ctx_with_blocks(vec![], start, vec![]);
            for (a, b) in [
                (Direction::Left, Direction::Right),
                (Direction::Front, Direction::Back),
            ] {
                ctx.apply_primitive(PrimitiveAction::MoveHead(a)).unwrap();
                ctx.apply_primitive(PrimitiveAction::MoveHead(b)).unwrap();
                assert!(ctx.head.center.approx_eq(&start));
            }
        }
    }

    #[test]
    fn iou_strictly_decreasing_in_distance() {
        let a = Pose::new(0.0, 0.0, 0.5);
        let mut prev = overlap_iou3d(a, a);
        for step in 1..=10 {
            let d = step as f64 * 0.1;
            let cur = overlap_iou3d(a, a.translated(d, 0.0, 0.0));
            assert!(cur < prev);
            prev = cur;
        }
    }
}
