//! Learns a handful of concepts from generated demonstrations, reusing each
//! learned concept as a macro action for the next, and prints the programs.
//!
//! Run with: `cargo run --release --example learn_concepts`

use spg::corpus::{
    generate_corpus, instruction_concept_name, learn_concept, DatasetSpec, DatasetVariant,
};
use spg::dsl::{emit_program_text, ConceptLibrary};
use spg::mcts::SearchConfig;

fn main() -> spg::Result<()> {
    let corpus = generate_corpus(&DatasetSpec::standard(DatasetVariant::One), 0)?;
    let config = SearchConfig::default();
    let mut library = ConceptLibrary::new();

    for name in ["row", "tower", "staircase", "pyramid"] {
        let demos: Vec<_> = corpus
            .demos
            .iter()
            .filter(|d| instruction_concept_name(&d.instruction).as_deref() == Some(name))
            .cloned()
            .collect();
        let learned = learn_concept(name, &demos, &library, &config)?;
        let expansions: Vec<usize> = learned.stats.iter().map(|s| s.expansions_to_best).collect();
        println!("{}", emit_program_text(&learned.program));
        println!("  expansions to best plan per demo: {expansions:?}");
        library.register_concept(learned.program)?;
    }
    Ok(())
}
