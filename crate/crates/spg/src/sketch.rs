//! The Sketch stage: parse instructions into task sketches and ground them
//! on a scene.
//!
//! A deterministic template grammar covers every instruction form the corpus
//! emits; the optional text-completion backend ([`crate::backend`]) can be
//! plugged in front of the same [`ParsedInstruction`] contract.

use crate::dsl::{placement_count, ConceptLibrary};
use crate::error::{Result, SpgError};
use crate::world::Scene;

/// Parsed function signature of the concept to build: name, size, filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSketch {
    pub concept: String,
    pub size: i64,
    pub filter: Vec<String>,
}

/// A sketch bound to concrete scene objects (ascending id order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundedSketch {
    pub concept: String,
    pub size: i64,
    pub object_ids: Vec<u32>,
}

/// Exhaustive classification of supported instruction forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedInstruction {
    Construct(TaskSketch),
    SizeQuery { concept: String, filter: Vec<String> },
    ConstrainedConstruct { sketch: TaskSketch, clauses: Vec<String> },
    /// Concept name absent from the library; triggers the learn workflow.
    /// The sketch still carries the parsed size and filter.
    UnknownConcept { name: String, sketch: TaskSketch },
}

const SIZE_WORDS: [&str; 6] = ["size", "height", "steps", "length", "levels", "total"];

/// Wildcard filter token matching every block.
pub const WILDCARD_TOKEN: &str = "block";

fn singularize(token: &str) -> String {
    match token {
        "cubes" => "cube".into(),
        "legos" => "lego".into(),
        "dice" | "die" => "dice".into(),
        "blocks" | "block" | "objects" | "object" => WILDCARD_TOKEN.into(),
        other => other.to_string(),
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '.' || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

fn filter_from_tokens(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !matches!(t.as_str(), "a" | "an" | "the" | "and" | "of" | "using" | "with"))
        .map(|t| singularize(t))
        .collect()
}

/// Filter tokens of a clause fragment (used by the constraint compiler).
pub(crate) fn clause_filter_tokens(text: &str) -> Vec<String> {
    filter_from_tokens(&tokenize(text))
}

fn bad(text: &str) -> SpgError {
    SpgError::Instruction(format!(
        "cannot parse '{text}'; supported forms: \
         'construct a <name> of <size|height|steps|length> <k> using <attributes>', \
         'find the size of the <name> made of <attributes>', \
         optionally followed by 'such that <constraints>' or containing \
         'alternating <color> and <color>' / 'same height as <reference>'"
    ))
}

/// Parses one instruction against the current library.
pub fn parse_instruction(text: &str, library: &ConceptLibrary) -> Result<ParsedInstruction> {
    let lowered = text.to_lowercase();

    if let Some(rest) = lowered.trim().strip_prefix("find") {
        // "find the size of the <name> made of <attrs>"
        let rest = rest.trim();
        let after = rest
            .strip_prefix("the size of the ")
            .or_else(|| rest.strip_prefix("the size of "))
            .ok_or_else(|| bad(text))?;
        let (name_part, filter_part) = after.split_once(" made of ").ok_or_else(|| bad(text))?;
        let concept = name_part.trim().to_string();
        let filter = filter_from_tokens(&tokenize(filter_part));
        if concept.is_empty() || filter.is_empty() {
            return Err(bad(text));
        }
        return Ok(ParsedInstruction::SizeQuery { concept, filter });
    }

    // Split off constraint clauses.
    let mut clauses: Vec<String> = Vec::new();
    let mut head = lowered.clone();
    if let Some(idx) = head.find(" such that ") {
        clauses.push(head[idx + " such that ".len()..].trim_end_matches('.').trim().to_string());
        head.truncate(idx);
    }
    if let Some(idx) = head.find(" same height as ") {
        clauses.push(head[idx + 1..].trim_end_matches('.').trim().to_string());
        // Drop a dangling "of the" / "with the" connective before the clause.
        let mut cut = idx;
        for connective in [" of the", " with the", " of", " with"] {
            if head[..cut].ends_with(connective) {
                cut -= connective.len();
                break;
            }
        }
        head.truncate(cut);
    }

    let tokens = tokenize(&head);
    if tokens.first().map(String::as_str) != Some("construct") {
        return Err(bad(text));
    }
    let mut pos = 1;
    while pos < tokens.len() && matches!(tokens[pos].as_str(), "a" | "an" | "the") {
        pos += 1;
    }
    let concept = tokens.get(pos).cloned().ok_or_else(|| bad(text))?;
    pos += 1;

    // Size section: "<sizeword> <k>" or "<k> <sizeword>", anywhere after the
    // name. Absent size (legal only for constrained forms) defaults to 1.
    let mut size: Option<i64> = None;
    for w in pos..tokens.len() {
        if SIZE_WORDS.contains(&tokens[w].as_str()) {
            if let Some(k) = tokens.get(w + 1).and_then(|t| t.parse::<i64>().ok()) {
                size = Some(k);
            } else if w > 0 {
                if let Ok(k) = tokens[w - 1].parse::<i64>() {
                    size = Some(k);
                }
            }
            break;
        }
    }

    // Filter section: after "using"/"with", else everything after the size
    // section.
    let filter_start = tokens
        .iter()
        .position(|t| t == "using" || t == "with")
        .map(|i| i + 1)
        .unwrap_or(tokens.len());
    let mut filter_tokens: Vec<String> = tokens[filter_start..].to_vec();

    // Inline alternation clause: "alternating blue and red blocks".
    if let Some(alt) = filter_tokens.iter().position(|t| t == "alternating") {
        let colors: Vec<String> = filter_tokens[alt + 1..]
            .iter()
            .filter(|t| *t != "and")
            .map(|t| singularize(t))
            .filter(|t| t != WILDCARD_TOKEN)
            .collect();
        if colors.len() >= 2 {
            clauses.push(format!("alternating {} and {}", colors[0], colors[1]));
        } else {
            return Err(bad(text));
        }
        filter_tokens.drain(alt..);
        if filter_tokens.is_empty() {
            filter_tokens.push(WILDCARD_TOKEN.to_string());
        }
    }

    let mut filter = filter_from_tokens(&filter_tokens);
    if filter.is_empty() {
        // λ1-style "using red and blue blocks" collapses to the wildcard;
        // the constraint solver picks concrete colors.
        if clauses.is_empty() {
            return Err(bad(text));
        }
        filter = vec![WILDCARD_TOKEN.to_string()];
    }
    if !clauses.is_empty() && filter.len() > 1 && filter.contains(&WILDCARD_TOKEN.to_string()) {
        filter = vec![WILDCARD_TOKEN.to_string()];
    }

    let size = match size {
        Some(k) if k >= 1 => k,
        Some(k) => return Err(SpgError::Instruction(format!("size must be positive, got {k}"))),
        // Size may be deferred to a same-height clause.
        None if clauses.iter().any(|c| c.starts_with("same height")) => 1,
        None => return Err(bad(text)),
    };

    let sketch = TaskSketch {
        concept: concept.clone(),
        size,
        filter,
    };
    if !clauses.is_empty() {
        Ok(ParsedInstruction::ConstrainedConstruct { sketch, clauses })
    } else if !library.contains(&concept) {
        Ok(ParsedInstruction::UnknownConcept {
            name: concept,
            sketch,
        })
    } else {
        Ok(ParsedInstruction::Construct(sketch))
    }
}

/// Whether a block satisfies one filter token (exact symbolic match; the
/// wildcard token matches everything).
pub fn token_matches(block: &crate::world::Block, token: &str) -> bool {
    token == WILDCARD_TOKEN || block.color == token || block.shape == token
}

/// Ids of blocks matching every filter token, ascending.
pub fn matching_ids(scene: &Scene, filter: &[String]) -> Vec<u32> {
    scene
        .blocks
        .values()
        .filter(|b| filter.iter().all(|t| token_matches(b, t)))
        .map(|b| b.id)
        .collect()
}

/// Grounds a sketch given the number of placements the task requires.
pub fn ground_sketch_with_required(
    sketch: &TaskSketch,
    scene: &Scene,
    required: usize,
) -> Result<GroundedSketch> {
    let ids = matching_ids(scene, &sketch.filter);
    if ids.len() < required.max(1) {
        return Err(SpgError::InsufficientObjects {
            required: required.max(1),
            available: ids.len(),
        });
    }
    Ok(GroundedSketch {
        concept: sketch.concept.clone(),
        size: sketch.size,
        object_ids: ids,
    })
}

/// Grounds a sketch, deriving the required object count from the library
/// (falling back to `size` placements for unknown concepts).
pub fn ground_sketch(
    sketch: &TaskSketch,
    scene: &Scene,
    library: &ConceptLibrary,
) -> Result<GroundedSketch> {
    let required = match library.get(&sketch.concept) {
        Ok(program) => placement_count(program, sketch.size, library)?,
        Err(_) => sketch.size.max(1) as usize,
    };
    ground_sketch_with_required(sketch, scene, required)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program_text;
    use crate::world::{Block, Pose};

    fn lib() -> ConceptLibrary {
        let mut lib = ConceptLibrary::new();
        for text in [
            "(def row (n) (loop n (keep) (move right)))",
            "(def tower (n) (loop n (keep) (move top)))",
            "(def staircase (n) (loop n (call tower (+ i 1)) (move right)))",
        ] {
            lib.register_concept(parse_program_text(text).unwrap()).unwrap();
        }
        lib
    }

    #[test]
    fn construct_tower() {
        let parsed =
            parse_instruction("Construct a tower of height 3 with yellow cubes", &lib()).unwrap();
        assert_eq!(
            parsed,
            ParsedInstruction::Construct(TaskSketch {
                concept: "tower".into(),
                size: 3,
                filter: vec!["yellow".into(), "cube".into()],
            })
        );
    }

    #[test]
    fn construct_staircase_steps_first() {
        let parsed =
            parse_instruction("Construct a staircase of 4 steps using cyan legos", &lib()).unwrap();
        assert_eq!(
            parsed,
            ParsedInstruction::Construct(TaskSketch {
                concept: "staircase".into(),
                size: 4,
                filter: vec!["cyan".into(), "lego".into()],
            })
        );
    }

    #[test]
    fn unknown_concept_carries_sketch() {
        let parsed =
            parse_instruction("Construct a rewot of height 3 with yellow cubes", &lib()).unwrap();
        match parsed {
            ParsedInstruction::UnknownConcept { name, sketch } => {
                assert_eq!(name, "rewot");
                assert_eq!(sketch.size, 3);
                assert_eq!(sketch.filter, vec!["yellow".to_string(), "cube".to_string()]);
            }
            other => panic!("expected UnknownConcept, got {other:?}"),
        }
    }

    #[test]
    fn size_query() {
        let parsed =
            parse_instruction("Find the size of the tower made of white dice", &lib()).unwrap();
        assert_eq!(
            parsed,
            ParsedInstruction::SizeQuery {
                concept: "tower".into(),
                filter: vec!["white".into(), "dice".into()],
            }
        );
    }

    #[test]
    fn such_that_clause() {
        let parsed = parse_instruction(
            "Construct a staircase of 5 steps using red and blue blocks such that \
             no block has the same color as the block on top of it and every block \
             has the same color as the block to its left",
            &lib(),
        )
        .unwrap();
        match parsed {
            ParsedInstruction::ConstrainedConstruct { sketch, clauses } => {
                assert_eq!(sketch.concept, "staircase");
                assert_eq!(sketch.size, 5);
                assert_eq!(sketch.filter, vec![WILDCARD_TOKEN.to_string()]);
                assert_eq!(clauses.len(), 1);
                assert!(clauses[0].contains("same color as the block to its left"));
            }
            other => panic!("expected ConstrainedConstruct, got {other:?}"),
        }
    }

    #[test]
    fn alternating_clause() {
        let parsed = parse_instruction(
            "Construct a tower of height 6 with alternating blue and red blocks",
            &lib(),
        )
        .unwrap();
        match parsed {
            ParsedInstruction::ConstrainedConstruct { sketch, clauses } => {
                assert_eq!(sketch.concept, "tower");
                assert_eq!(sketch.size, 6);
                assert_eq!(clauses, vec!["alternating blue and red".to_string()]);
            }
            other => panic!("expected ConstrainedConstruct, got {other:?}"),
        }
    }

    #[test]
    fn same_height_clause() {
        let parsed = parse_instruction(
            "Construct a tower using red cubes of the same height as the tower made of white dice",
            &lib(),
        )
        .unwrap();
        match parsed {
            ParsedInstruction::ConstrainedConstruct { sketch, clauses } => {
                assert_eq!(sketch.concept, "tower");
                assert_eq!(sketch.filter, vec!["red".to_string(), "cube".to_string()]);
                assert_eq!(clauses.len(), 1);
                assert!(clauses[0].starts_with("same height as"));
            }
            other => panic!("expected ConstrainedConstruct, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_lists_forms() {
        match parse_instruction("please do something nice", &lib()) {
            Err(SpgError::Instruction(msg)) => assert!(msg.contains("supported forms")),
            other => panic!("expected instruction error, got {other:?}"),
        }
    }

    fn scene_with(blocks: &[(u32, &str, &str)]) -> Scene {
        let mut scene = Scene::with_default_table();
        for (k, (id, color, shape)) in blocks.iter().enumerate() {
            scene.insert(Block {
                id: *id,
                color: color.to_string(),
                shape: shape.to_string(),
                pose: Pose::new(0.5 + k as f64 * 2.0, 0.5, 0.5),
            });
        }
        scene
    }

    #[test]
    fn grounding_sorted_and_filtered() {
        // Insertion order scrambled; output must be ascending by id.
        let scene = scene_with(&[
            (9, "green", "dice"),
            (2, "green", "dice"),
            (7, "red", "cube"),
            (5, "green", "dice"),
        ]);
        let sketch = TaskSketch {
            concept: "row".into(),
            size: 3,
            filter: vec!["green".into(), "dice".into()],
        };
        let grounded = ground_sketch(&sketch, &scene, &lib()).unwrap();
        assert_eq!(grounded.object_ids, vec![2, 5, 9]);
    }

    #[test]
    fn grounding_insufficient() {
        let scene = scene_with(&[(0, "red", "cube")]);
        let sketch = TaskSketch {
            concept: "row".into(),
            size: 1,
            filter: vec!["mauve".into()],
        };
        match ground_sketch(&sketch, &scene, &lib()) {
            Err(SpgError::InsufficientObjects { required, available }) => {
                assert_eq!((required, available), (1, 0));
            }
            other => panic!("expected insufficient objects, got {other:?}"),
        }
    }

    #[test]
    fn grounding_exact_count() {
        let scene = scene_with(&[(0, "red", "cube"), (1, "red", "cube"), (2, "red", "cube")]);
        let sketch = TaskSketch {
            concept: "tower".into(),
            size: 3,
            filter: vec!["red".into(), "cube".into()],
        };
        let grounded = ground_sketch(&sketch, &scene, &lib()).unwrap();
        assert_eq!(grounded.object_ids.len(), 3);

        let sketch4 = TaskSketch { size: 4, ..sketch };
        assert!(ground_sketch(&sketch4, &scene, &lib()).is_err());
    }

    #[test]
    fn staircase_required_count_is_triangular() {
        // staircase(3) needs 6 blocks, not 3.
        let scene = scene_with(&[
            (0, "red", "cube"),
            (1, "red", "cube"),
            (2, "red", "cube"),
            (3, "red", "cube"),
        ]);
        let sketch = TaskSketch {
            concept: "staircase".into(),
            size: 3,
            filter: vec!["red".into()],
        };
        match ground_sketch(&sketch, &scene, &lib()) {
            Err(SpgError::InsufficientObjects { required, available }) => {
                assert_eq!((required, available), (6, 4));
            }
            other => panic!("expected insufficient objects, got {other:?}"),
        }
    }

    #[test]
    fn wildcard_token_matches_all() {
        let scene = scene_with(&[(0, "red", "cube"), (1, "blue", "lego")]);
        assert_eq!(matching_ids(&scene, &[WILDCARD_TOKEN.to_string()]), vec![0, 1]);
    }
}
