//! Compares search variants on staircase demonstrations: with the concept
//! library and the pruner (+L+P), and with the library but no pruner (+L−P).
//! The pruner collapses the primitive action space to a single oracle move,
//! which is where the order-of-magnitude efficiency gap comes from.
//!
//! Run with: `cargo run --release --example search_variants`

use spg::corpus::{generate_corpus, instruction_concept_name, DatasetSpec, DatasetVariant};
use spg::dsl::parse_library_text;
use spg::mcts::{plan_search, DemoTrace, SearchConfig};
use spg::sketch::{ground_sketch_with_required, parse_instruction, ParsedInstruction};

fn main() -> spg::Result<()> {
    // The nine simple concepts, as they stand in the library when the
    // curriculum reaches the staircase.
    let library = parse_library_text(
        "(def row (n) (loop n :trim 1 (keep) (move right)))\n\
         (def column (n) (loop n :trim 1 (keep) (move front)))\n\
         (def tower (n) (loop n :trim 1 (keep) (move top)))\n\
         (def inverted_row (n) (loop n :trim 1 (keep) (move left)))\n\
         (def inverted_column (n) (loop n :trim 1 (keep) (move back)))\n\
         (def diagonal_45 (n) (loop n :trim 2 (keep) (move right) (move front)))\n\
         (def diagonal_135 (n) (loop n :trim 2 (keep) (move left) (move front)))\n\
         (def diagonal_225 (n) (loop n :trim 2 (keep) (move left) (move back)))\n\
         (def diagonal_315 (n) (loop n :trim 2 (keep) (move right) (move back)))",
    )?;
    let corpus = generate_corpus(&DatasetSpec::standard(DatasetVariant::One), 0)?;

    for demo_file in &corpus.demos {
        if instruction_concept_name(&demo_file.instruction).as_deref() != Some("staircase") {
            continue;
        }
        let demo = DemoTrace::from_keyframes(
            demo_file.instruction.clone(),
            demo_file.keyframes.clone(),
        )?;
        let sketch = match parse_instruction(&demo_file.instruction, &library)? {
            ParsedInstruction::Construct(s) => s,
            ParsedInstruction::UnknownConcept { sketch, .. } => sketch,
            other => {
                println!("unexpected instruction parse: {other:?}");
                continue;
            }
        };
        let grounded =
            ground_sketch_with_required(&sketch, &demo.keyframes[0], demo.diffs.len())?;

        let with_pruner = SearchConfig::default();
        let without_pruner = SearchConfig {
            use_pruner: false,
            ..SearchConfig::default()
        };
        let (plans, lp) = plan_search(&demo, &grounded, &library, &with_pruner)?;
        let (_, l) = plan_search(&demo, &grounded, &library, &without_pruner)?;
        println!("staircase size {}:", grounded.size);
        println!(
            "  +L+P best return {:.4} after {} expansions",
            lp.best_return, lp.expansions_to_best
        );
        println!(
            "  +L-P best return {:.4} after {} expansions ({}x slower)",
            l.best_return,
            l.expansions_to_best,
            l.expansions_to_best / lp.expansions_to_best.max(1)
        );
        println!("  best plan: {:?}", plans[0].plan);
    }
    Ok(())
}
