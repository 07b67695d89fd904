//! Runs the whole curriculum benchmark: generates the standard dataset,
//! learns every concept in curriculum order, and evaluates each learned
//! program on training sizes {3,4,5} and held-out sizes {6,7,8}.
//!
//! Run with: `cargo run --release --example full_benchmark`

use spg::corpus::{
    generate_corpus, run_benchmark, DatasetSpec, DatasetVariant, COMPLEX_CONCEPTS,
    SIMPLE_CONCEPTS,
};
use spg::dsl::emit_library_text;
use spg::mcts::SearchConfig;

fn main() -> spg::Result<()> {
    let variant = DatasetVariant::One;
    let corpus = generate_corpus(&DatasetSpec::standard(variant), 0)?;
    let config = SearchConfig::default();
    let (report, library) = run_benchmark(&corpus, variant, &config, &[3, 4, 5, 6, 7, 8])?;
    print!("{}", report.to_csv());
    println!(
        "mean accuracy: simple {:.4}, complex {:.4}",
        report.mean_accuracy(&SIMPLE_CONCEPTS),
        report.mean_accuracy(&COMPLEX_CONCEPTS)
    );
    println!("\nlearned library:\n{}", emit_library_text(&library));
    Ok(())
}
