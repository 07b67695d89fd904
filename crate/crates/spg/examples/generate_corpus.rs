//! Generates the three demonstration datasets into a temporary directory and
//! prints a summary of each.
//!
//! Run with: `cargo run --example generate_corpus`

use spg::corpus::{generate_corpus, write_corpus, DatasetSpec, DatasetVariant};

fn main() -> spg::Result<()> {
    let root = std::env::temp_dir().join("spg_corpora");
    for variant in [
        DatasetVariant::One,
        DatasetVariant::Two,
        DatasetVariant::Three,
    ] {
        let spec = DatasetSpec::standard(variant);
        let corpus = generate_corpus(&spec, 0)?;
        let dir = root.join(format!("dataset_{}", variant.label()));
        write_corpus(&corpus, &dir)?;
        let keyframes: usize = corpus.demos.iter().map(|d| d.keyframes.len()).sum();
        println!(
            "dataset {}: {} demos, {} keyframes -> {}",
            variant.label(),
            corpus.demos.len(),
            keyframes,
            dir.display()
        );
        println!("  first instruction: {}", corpus.demos[0].instruction);
    }
    Ok(())
}
