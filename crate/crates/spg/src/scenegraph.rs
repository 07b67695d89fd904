//! Directional spatial relations between blocks, and structure-size queries
//! answered by imagined reconstruction.

use std::collections::BTreeSet;

use crate::dsl::{imagined_placements, ConceptLibrary};
use crate::error::{Result, SpgError};
use crate::world::{overlap_iou3d, Direction, Scene, ALL_DIRECTIONS};

/// Default IoU threshold for the head-displacement relation test. Noiseless
/// grid-aligned scenes yield IoU ∈ {0, 1}, so the threshold only matters for
/// perturbed scenes; it is kept configurable via the `_with` variants.
pub const RELATION_IOU_THRESHOLD: f64 = 0.75;

/// `subject` lies in direction `dir` of `object`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relation {
    pub dir: Direction,
    pub subject: u32,
    pub object: u32,
}

/// The set of directional relations holding over a chosen id set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SceneGraph {
    pub relations: BTreeSet<Relation>,
}

impl SceneGraph {
    pub fn contains(&self, dir: Direction, subject: u32, object: u32) -> bool {
        self.relations.contains(&Relation {
            dir,
            subject,
            object,
        })
    }

    /// Relations as sorted "dir(subject,object)" lines.
    pub fn render_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .relations
            .iter()
            .map(|r| format!("{}({},{})", r.dir.name(), r.subject, r.object))
            .collect();
        lines.sort();
        lines
    }
}

/// Whether `subject` sits one unit in `dir` of `object` (head-displacement
/// IoU test at the default threshold).
pub fn holds_relation(scene: &Scene, subject: u32, object: u32, dir: Direction) -> Result<bool> {
    holds_relation_with(scene, subject, object, dir, RELATION_IOU_THRESHOLD)
}

pub fn holds_relation_with(
    scene: &Scene,
    subject: u32,
    object: u32,
    dir: Direction,
    threshold: f64,
) -> Result<bool> {
    if subject == object {
        return Err(SpgError::Invalid("relation subject equals object".into()));
    }
    let subj = scene.block(subject)?.pose;
    let obj = scene.block(object)?.pose;
    let (dx, dy, dz) = dir.displacement();
    let predicted = obj.translated(dx, dy, dz);
    Ok(overlap_iou3d(predicted, subj) > threshold)
}

/// All relations over ordered pairs of `ids` across the five directions.
pub fn extract_scene_graph(scene: &Scene, ids: &BTreeSet<u32>) -> SceneGraph {
    let mut graph = SceneGraph::default();
    for &object in ids {
        for &subject in ids {
            if subject == object {
                continue;
            }
            for dir in ALL_DIRECTIONS {
                if holds_relation(scene, subject, object, dir).unwrap_or(false) {
                    graph.relations.insert(Relation {
                        dir,
                        subject,
                        object,
                    });
                }
            }
        }
    }
    graph
}

/// Largest size at which the concept is realized by existing blocks.
///
/// For every candidate anchor block, the concept is imagined at sizes 1, 2, …
/// from that block's pose; a size counts as realized when every imagined
/// placement matches a distinct block from `objects` with IoU above the
/// relation threshold. Returns the maximum realized size over all anchors,
/// or 0 when no size is realized anywhere.
pub fn find_size(
    scene: &Scene,
    concept: &str,
    objects: &[u32],
    library: &ConceptLibrary,
) -> Result<u32> {
    library.get(concept)?;
    let poses = objects
        .iter()
        .map(|&id| scene.block(id).map(|b| b.pose))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0u32;
    for anchor in &poses {
        for size in 1.. {
            let placed = imagined_placements(concept, size, library, *anchor)?;
            if placed.len() > poses.len() {
                break;
            }
            let mut used = vec![false; poses.len()];
            let realized = placed.iter().all(|p| {
                if let Some(j) = (0..poses.len()).find(|&j| {
                    !used[j] && overlap_iou3d(*p, poses[j]) > RELATION_IOU_THRESHOLD
                }) {
                    used[j] = true;
                    true
                } else {
                    false
                }
            });
            if realized {
                best = best.max(size as u32);
            }
        }
    }
    Ok(best)
}
