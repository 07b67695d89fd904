//! Command-line interface over the full pipeline: corpus generation,
//! learning, execution, goal planning, constrained construction,
//! evaluation, and scene-graph inspection.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spg::constraints::{constrain_task, to_grounded_plan, Solution};
use spg::corpus::{
    generate_corpus, instruction_concept_name, learn_concept, read_corpus, run_benchmark,
    write_corpus, Corpus, DatasetSpec, DatasetVariant, DemoFile,
};
use spg::dsl::{
    emit_library_text, emit_program_text, execute_program, parse_library_text, ConceptLibrary,
};
use spg::goalplan::{forward_search, goal_from_sketch, PlannerAction, PlannerConfig};
use spg::mcts::SearchConfig;
use spg::scenegraph::{extract_scene_graph, find_size};
use spg::sketch::{ground_sketch, matching_ids, parse_instruction, ParsedInstruction};
use spg::world::{sample_free_position, Scene};
use spg::{Result, SpgError};

#[derive(Parser)]
#[command(name = "spg", about = "Sketch-Plan-Generalize block construction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a demonstration dataset.
    GenCorpus {
        /// Dataset variant: 1, 2, or 3.
        #[arg(long)]
        dataset: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Learn concepts from the demonstrations in a directory.
    Learn {
        #[arg(long)]
        demos: PathBuf,
        /// Library file: loaded if present, rewritten with learned concepts.
        #[arg(long)]
        library: PathBuf,
        /// Search variant: lp (+library +pruner), l (+library -pruner),
        /// p (-library +pruner).
        #[arg(long, default_value = "lp")]
        variant: String,
        #[arg(long, default_value_t = 5000)]
        budget: usize,
        #[arg(long, default_value_t = 5)]
        topk: usize,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Execute an instruction against a scene and write the keyframe trace.
    Exec {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        instruction: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plan goal-directed block moves for an instruction.
    Plan {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        instruction: String,
        /// Optional replay trace output (JSON scene array).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve a constrained construction instruction.
    Constrain {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        instruction: String,
        /// Optional grounded plan output (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn and evaluate a whole corpus, writing a CSV report.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// Output file for the learned library.
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Dataset variant the corpus was generated with.
        #[arg(long, default_value_t = 1)]
        dataset: u32,
        #[arg(long, default_value_t = 5000)]
        budget: usize,
    },
    /// Print the scene graph of a scene file.
    Graph {
        #[arg(long)]
        scene: PathBuf,
    },
}

fn load_library(path: &PathBuf) -> Result<ConceptLibrary> {
    if path.exists() {
        parse_library_text(&fs::read_to_string(path)?)
    } else {
        Ok(ConceptLibrary::new())
    }
}

fn load_scene(path: &PathBuf) -> Result<Scene> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn search_config(variant: &str, budget: usize, topk: usize, gamma: f64) -> Result<SearchConfig> {
    let (use_library, use_pruner) = match variant {
        "lp" => (true, true),
        "l" => (true, false),
        "p" => (false, true),
        other => {
            return Err(SpgError::Invalid(format!(
                "unknown variant '{other}'; expected lp, l, or p"
            )))
        }
    };
    Ok(SearchConfig {
        budget,
        k: topk,
        gamma,
        use_library,
        use_pruner,
        ..SearchConfig::default()
    })
}

/// Demonstration groups in order of first appearance.
fn group_demos(corpus: &Corpus) -> Vec<(String, Vec<DemoFile>)> {
    let mut groups: Vec<(String, Vec<DemoFile>)> = Vec::new();
    for demo in &corpus.demos {
        let Some(name) = instruction_concept_name(&demo.instruction) else {
            continue;
        };
        match groups.iter_mut().find(|(n, _)| *n == name) {
            Some((_, list)) => list.push(demo.clone()),
            None => groups.push((name, vec![demo.clone()])),
        }
    }
    groups
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus { dataset, out, seed } => {
            let variant = DatasetVariant::from_index(dataset)?;
            let corpus = generate_corpus(&DatasetSpec::standard(variant), seed)?;
            write_corpus(&corpus, &out)?;
            println!("wrote {} demonstrations to {}", corpus.demos.len(), out.display());
            Ok(())
        }
        Command::Learn {
            demos,
            library,
            variant,
            budget,
            topk,
            gamma,
            seed: _,
        } => {
            let config = search_config(&variant, budget, topk, gamma)?;
            let corpus = read_corpus(&demos)?;
            let mut lib = load_library(&library)?;
            let mut learned = 0usize;
            let mut failed = 0usize;
            for (name, group) in group_demos(&corpus) {
                if lib.contains(&name) {
                    println!("{name}: already in library, skipped");
                    continue;
                }
                match learn_concept(&name, &group, &lib, &config) {
                    Ok(outcome) => {
                        println!("{name}: learned\n{}", emit_program_text(&outcome.program));
                        lib.register_concept(outcome.program)?;
                        learned += 1;
                    }
                    Err(err) => {
                        println!("{name}: failed ({err})");
                        failed += 1;
                    }
                }
            }
            fs::write(&library, emit_library_text(&lib))?;
            println!("library: {} concepts -> {}", lib.len(), library.display());
            if learned == 0 && failed > 0 {
                return Err(SpgError::GeneralizationFailed);
            }
            Ok(())
        }
        Command::Exec {
            library,
            scene,
            instruction,
            out,
            seed,
        } => {
            let lib = load_library(&library)?;
            let scene = load_scene(&scene)?;
            match parse_instruction(&instruction, &lib)? {
                ParsedInstruction::SizeQuery { concept, filter } => {
                    let ids = matching_ids(&scene, &filter);
                    let size = find_size(&scene, &concept, &ids, &lib)?;
                    println!("{size}");
                    Ok(())
                }
                ParsedInstruction::Construct(sketch) => {
                    let grounded = ground_sketch(&sketch, &scene, &lib)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let anchor = sample_free_position(&scene, &mut rng)?;
                    let program = lib.get(&sketch.concept)?;
                    let ctx = spg::world::ExecContext::new(
                        scene.clone(),
                        anchor,
                        grounded.object_ids.clone(),
                    );
                    let (_, trace) = execute_program(program, sketch.size, ctx, &lib)?;
                    fs::write(&out, serde_json::to_string_pretty(&trace)?)?;
                    println!(
                        "executed {} of size {}: {} keyframes -> {}",
                        sketch.concept,
                        sketch.size,
                        trace.len(),
                        out.display()
                    );
                    Ok(())
                }
                other => Err(SpgError::Instruction(format!(
                    "exec expects a plain construction or size query, got {other:?}"
                ))),
            }
        }
        Command::Plan {
            library,
            scene,
            instruction,
            out,
            seed,
        } => {
            let lib = load_library(&library)?;
            let scene = load_scene(&scene)?;
            let sketch = match parse_instruction(&instruction, &lib)? {
                ParsedInstruction::Construct(s) => s,
                other => {
                    return Err(SpgError::Instruction(format!(
                        "plan expects a known construction instruction, got {other:?}"
                    )))
                }
            };
            let grounded = ground_sketch(&sketch, &scene, &lib)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let anchor = sample_free_position(&scene, &mut rng)?;
            let goal = goal_from_sketch(&grounded, &lib, anchor)?;
            let config = PlannerConfig {
                seed,
                ..PlannerConfig::default()
            };
            let outcome = forward_search(&scene, &goal, &config)?;
            for action in &outcome.actions {
                match action {
                    PlannerAction::Move {
                        rel,
                        mover,
                        reference,
                    } => println!("move({}, {mover}, {reference})", rel.name()),
                    PlannerAction::PlaceRandom { mover } => println!("place-random({mover})"),
                }
            }
            if let Some(path) = out {
                fs::write(&path, serde_json::to_string_pretty(&outcome.scenes)?)?;
            }
            Ok(())
        }
        Command::Constrain {
            library,
            scene,
            instruction,
            out,
        } => {
            let lib = load_library(&library)?;
            let scene = load_scene(&scene)?;
            let outcome = constrain_task(&scene, &instruction, &lib)?;
            match &outcome.solution {
                Solution::Sat(assignment) => {
                    println!("SAT");
                    for (i, (color, id)) in assignment
                        .colors
                        .iter()
                        .zip(&assignment.blocks)
                        .enumerate()
                    {
                        println!("slot {i}: {color} block {id}");
                    }
                    if let Some(path) = out {
                        let grounded = to_grounded_plan(assignment, &outcome.grid, &lib)?;
                        fs::write(
                            &path,
                            serde_json::to_string_pretty(&serde_json::json!({
                                "concept": outcome.grid.concept,
                                "size": outcome.grid.n,
                                "remaining": grounded.remaining,
                            }))?,
                        )?;
                    }
                    Ok(())
                }
                Solution::Unsat(constraints) => {
                    println!("UNSAT ({} constraints)", constraints.len());
                    Err(SpgError::Invalid("constraint set unsatisfiable".into()))
                }
            }
        }
        Command::Eval {
            corpus,
            library,
            report,
            dataset,
            budget,
        } => {
            let variant = DatasetVariant::from_index(dataset)?;
            let corpus = read_corpus(&corpus)?;
            let config = SearchConfig {
                budget,
                ..SearchConfig::default()
            };
            let (eval, lib) = run_benchmark(&corpus, variant, &config, &[3, 4, 5, 6, 7, 8])?;
            fs::write(&report, eval.to_csv())?;
            fs::write(&library, emit_library_text(&lib))?;
            print!("{}", eval.to_csv());
            Ok(())
        }
        Command::Graph { scene } => {
            let scene = load_scene(&scene)?;
            let ids: BTreeSet<u32> = scene.blocks.keys().copied().collect();
            for line in extract_scene_graph(&scene, &ids).render_lines() {
                println!("{line}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
