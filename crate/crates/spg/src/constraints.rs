//! Constrained construction: compile attribute clauses over the slots of an
//! imagined structure into a color CSP, solve it with backtracking plus
//! forward checking, and emit a grounded plan whose object order realizes
//! the assignment.

use std::collections::BTreeMap;

use crate::dsl::{imagined_placements, unroll_to_plan, ConceptLibrary, Plan};
use crate::error::{Result, SpgError};
use crate::scenegraph::find_size;
use crate::sketch::{self, ParsedInstruction, TaskSketch};
use crate::world::{Pose, Scene, EPS};

/// One symbolic placement of the imagined construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub pose: Pose,
    /// Vertical level, 0 on the table.
    pub level: usize,
    /// Slot one cell to the left (imagined right-relation partner).
    pub left: Option<usize>,
    /// Slot directly underneath (imagined top-relation partner).
    pub below: Option<usize>,
}

/// The slots of a concept at a size, in placement order, with grid
/// adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotGrid {
    pub concept: String,
    pub n: i64,
    pub slots: Vec<Slot>,
}

/// Symbolically unrolls the concept and records pose, level, and adjacency
/// per placement.
pub fn derive_slots(concept: &str, n: i64, library: &ConceptLibrary) -> Result<SlotGrid> {
    let anchor = Pose::new(0.5, 0.5, 0.5);
    let poses = imagined_placements(concept, n, library, anchor)?;
    let neighbor = |j: usize, dx: f64, dz: f64| {
        let p = poses[j];
        poses.iter().position(|q| {
            (q.x - (p.x - dx)).abs() <= EPS
                && (q.y - p.y).abs() <= EPS
                && (q.z - (p.z - dz)).abs() <= EPS
        })
    };
    let slots = (0..poses.len())
        .map(|j| Slot {
            pose: poses[j],
            level: (poses[j].z - 0.5).round().max(0.0) as usize,
            left: neighbor(j, 1.0, 0.0),
            below: neighbor(j, 0.0, 1.0),
        })
        .collect();
    Ok(SlotGrid {
        concept: concept.to_string(),
        n,
        slots,
    })
}

/// One parsed constraint clause.
#[derive(Debug, Clone, PartialEq)]
pub enum Clause {
    /// "all blocks have the same color as the block to their left"
    SameColorAsLeft,
    /// "no block should have the same color as the block on top of it"
    DiffColorFromTop,
    /// "alternating <first> and <second>" by vertical level parity,
    /// starting with the first-mentioned color.
    Alternating { first: String, second: String },
    /// "same height as the existing <concept> of <attributes>"
    SizeEquals { concept: String, filter: Vec<String> },
}

/// Parses the clause strings extracted by the instruction parser.
pub fn parse_clauses(raw: &[String]) -> Result<Vec<Clause>> {
    let mut out = Vec::new();
    for chunk in raw {
        for sentence in chunk.split('.') {
            let s = sentence.trim();
            if s.is_empty() {
                continue;
            }
            out.push(parse_clause(s)?);
        }
    }
    Ok(out)
}

fn parse_clause(s: &str) -> Result<Clause> {
    if let Some(rest) = s.strip_prefix("alternating ") {
        let mut colors = rest
            .split_whitespace()
            .filter(|t| *t != "and")
            .map(|t| t.to_string());
        match (colors.next(), colors.next()) {
            (Some(first), Some(second)) => return Ok(Clause::Alternating { first, second }),
            _ => return Err(SpgError::Invalid(format!("bad alternation clause '{s}'"))),
        }
    }
    if let Some(rest) = s.strip_prefix("same height as ") {
        let rest = rest
            .trim_start_matches("the ")
            .trim_start_matches("existing ");
        let (concept, attrs) = rest
            .split_once(" of ")
            .ok_or_else(|| SpgError::Invalid(format!("bad size clause '{s}'")))?;
        let concept = concept.split_whitespace().last().unwrap_or("").to_string();
        let filter = sketch::clause_filter_tokens(attrs);
        if concept.is_empty() || filter.is_empty() {
            return Err(SpgError::Invalid(format!("bad size clause '{s}'")));
        }
        return Ok(Clause::SizeEquals { concept, filter });
    }
    let same_color = s.contains("same color as");
    if same_color && s.contains("left") && !s.starts_with("no ") {
        return Ok(Clause::SameColorAsLeft);
    }
    if same_color && s.contains("top") && s.starts_with("no ") {
        return Ok(Clause::DiffColorFromTop);
    }
    Err(SpgError::Invalid(format!("unsupported clause '{s}'")))
}

/// One compiled constraint over slot color variables.
#[derive(Debug, Clone, PartialEq)]
pub enum ColorConstraint {
    Equal(usize, usize),
    NotEqual(usize, usize),
    Fixed(usize, String),
}

/// Compiles clauses against a slot grid. `SizeEquals` clauses must be
/// resolved (into the grid's size) before compilation and are rejected
/// here; clauses that touch no adjacency in the grid are errors.
pub fn compile_constraints(clauses: &[Clause], grid: &SlotGrid) -> Result<Vec<ColorConstraint>> {
    let mut out = Vec::new();
    for clause in clauses {
        match clause {
            Clause::SameColorAsLeft => {
                let before = out.len();
                for (j, slot) in grid.slots.iter().enumerate() {
                    if let Some(i) = slot.left {
                        out.push(ColorConstraint::Equal(j, i));
                    }
                }
                if out.len() == before {
                    return Err(SpgError::Invalid(
                        "left-neighbor clause on a grid without horizontal adjacency".into(),
                    ));
                }
            }
            Clause::DiffColorFromTop => {
                let before = out.len();
                for (j, slot) in grid.slots.iter().enumerate() {
                    if let Some(i) = slot.below {
                        out.push(ColorConstraint::NotEqual(j, i));
                    }
                }
                if out.len() == before {
                    return Err(SpgError::Invalid(
                        "vertical clause on a grid without vertical adjacency".into(),
                    ));
                }
            }
            Clause::Alternating { first, second } => {
                for (j, slot) in grid.slots.iter().enumerate() {
                    let color = if slot.level % 2 == 0 { first } else { second };
                    out.push(ColorConstraint::Fixed(j, color.clone()));
                }
            }
            Clause::SizeEquals { .. } => {
                return Err(SpgError::Invalid(
                    "size clause must be resolved before compilation".into(),
                ));
            }
        }
    }
    Ok(out)
}

/// A satisfying assignment: a color and a concrete block per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CSPAssignment {
    pub colors: Vec<String>,
    pub blocks: Vec<u32>,
}

/// Solver outcome; UNSAT carries the constraint set that failed.
#[derive(Debug, Clone, PartialEq)]
pub enum Solution {
    Sat(CSPAssignment),
    Unsat(Vec<ColorConstraint>),
}

/// Backtracking search over slot colors with forward checking on color
/// capacities, then injective block selection. Variable order is slot
/// index; value order is color-lexicographic; blocks are taken in
/// ascending id order per color.
pub fn solve_csp(
    grid: &SlotGrid,
    constraints: &[ColorConstraint],
    available: &[(u32, String)],
) -> Solution {
    let mut capacity: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, color) in available {
        *capacity.entry(color.as_str()).or_insert(0) += 1;
    }
    let domain: Vec<&str> = capacity.keys().copied().collect();
    let slots = grid.slots.len();
    let mut colors: Vec<&str> = Vec::with_capacity(slots);

    fn consistent(colors: &[&str], constraints: &[ColorConstraint]) -> bool {
        let get = |i: usize| colors.get(i).copied();
        constraints.iter().all(|c| match c {
            ColorConstraint::Equal(a, b) => match (get(*a), get(*b)) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            },
            ColorConstraint::NotEqual(a, b) => match (get(*a), get(*b)) {
                (Some(x), Some(y)) => x != y,
                _ => true,
            },
            ColorConstraint::Fixed(a, v) => get(*a).map(|x| x == v).unwrap_or(true),
        })
    }

    fn capacity_ok(colors: &[&str], capacity: &BTreeMap<&str, usize>) -> bool {
        let mut used: BTreeMap<&str, usize> = BTreeMap::new();
        for c in colors {
            *used.entry(c).or_insert(0) += 1;
        }
        used.iter()
            .all(|(c, k)| capacity.get(c).copied().unwrap_or(0) >= *k)
    }

    fn search<'a>(
        colors: &mut Vec<&'a str>,
        slots: usize,
        domain: &[&'a str],
        constraints: &[ColorConstraint],
        capacity: &BTreeMap<&str, usize>,
    ) -> bool {
        if colors.len() == slots {
            return true;
        }
        for value in domain {
            colors.push(value);
            if consistent(colors, constraints)
                && capacity_ok(colors, capacity)
                && search(colors, slots, domain, constraints, capacity)
            {
                return true;
            }
            colors.pop();
        }
        false
    }

    if !search(&mut colors, slots, &domain, constraints, &capacity) {
        return Solution::Unsat(constraints.to_vec());
    }

    let mut pool: Vec<(u32, &str)> = available.iter().map(|(id, c)| (*id, c.as_str())).collect();
    pool.sort();
    let mut blocks = Vec::with_capacity(slots);
    let mut taken = vec![false; pool.len()];
    for color in &colors {
        let pick = pool
            .iter()
            .enumerate()
            .find(|(k, (_, c))| !taken[*k] && c == color)
            .map(|(k, (id, _))| (k, *id));
        match pick {
            Some((k, id)) => {
                taken[k] = true;
                blocks.push(id);
            }
            None => return Solution::Unsat(constraints.to_vec()),
        }
    }
    Solution::Sat(CSPAssignment {
        colors: colors.into_iter().map(|c| c.to_string()).collect(),
        blocks,
    })
}

/// A grounded constrained plan: the unrolled concept plus the object order
/// that realizes the assignment slot by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedConstrainedPlan {
    pub plan: Plan,
    /// Object ids in placement-consumption order.
    pub remaining: Vec<u32>,
}

/// Grounds an assignment: the concept's plan with the object supply
/// reordered so each placement consumes exactly the assigned block.
pub fn to_grounded_plan(
    assignment: &CSPAssignment,
    grid: &SlotGrid,
    library: &ConceptLibrary,
) -> Result<GroundedConstrainedPlan> {
    let program = library.get(&grid.concept)?;
    Ok(GroundedConstrainedPlan {
        plan: unroll_to_plan(program, grid.n)?,
        remaining: assignment.blocks.clone(),
    })
}

/// Full result of interpreting one constrained instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainOutcome {
    pub sketch: TaskSketch,
    pub grid: SlotGrid,
    pub constraints: Vec<ColorConstraint>,
    pub solution: Solution,
}

/// End-to-end constraint workflow: parse the instruction, resolve any size
/// clause against the scene, derive slots, compile, and solve over the
/// blocks matching the sketch filter (excluding any reference structure).
pub fn constrain_task(
    scene: &Scene,
    instruction: &str,
    library: &ConceptLibrary,
) -> Result<ConstrainOutcome> {
    let (sketch, raw_clauses) = match sketch::parse_instruction(instruction, library)? {
        ParsedInstruction::ConstrainedConstruct { sketch, clauses } => (sketch, clauses),
        ParsedInstruction::Construct(sketch) => (sketch, Vec::new()),
        other => {
            return Err(SpgError::Instruction(format!(
                "not a construction instruction: {other:?}"
            )))
        }
    };
    let clauses = parse_clauses(&raw_clauses)?;

    let mut size = sketch.size;
    let mut reference_ids: Vec<u32> = Vec::new();
    for clause in &clauses {
        if let Clause::SizeEquals { concept, filter } = clause {
            let ids = sketch::matching_ids(scene, filter);
            let found = find_size(scene, concept, &ids, library)?;
            if found == 0 {
                return Err(SpgError::Invalid(format!(
                    "no existing {concept} matches the size clause"
                )));
            }
            size = found as i64;
            reference_ids = ids;
        }
    }

    let grid = derive_slots(&sketch.concept, size, library)?;
    let compilable: Vec<Clause> = clauses
        .iter()
        .filter(|c| !matches!(c, Clause::SizeEquals { .. }))
        .cloned()
        .collect();
    let constraints = compile_constraints(&compilable, &grid)?;

    let available: Vec<(u32, String)> = sketch::matching_ids(scene, &sketch.filter)
        .into_iter()
        .filter(|id| !reference_ids.contains(id))
        .map(|id| (id, scene.blocks[&id].color.clone()))
        .collect();
    let solution = solve_csp(&grid, &constraints, &available);
    Ok(ConstrainOutcome {
        sketch: TaskSketch { size, ..sketch },
        grid,
        constraints,
        solution,
    })
}

/// Re-verifies a solved assignment against its compiled constraints.
pub fn verify_assignment(assignment: &CSPAssignment, constraints: &[ColorConstraint]) -> bool {
    constraints.iter().all(|c| match c {
        ColorConstraint::Equal(a, b) => assignment.colors[*a] == assignment.colors[*b],
        ColorConstraint::NotEqual(a, b) => assignment.colors[*a] != assignment.colors[*b],
        ColorConstraint::Fixed(a, v) => assignment.colors[*a] == *v,
    })
}
