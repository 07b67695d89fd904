//! Learning and planning with inductive spatial concept programs in a
//! deterministic block world.
//!
//! The pipeline has three stages: parse a natural-language-like instruction
//! into a task sketch ([`sketch`]), recover a plan for each demonstration
//! with demonstration-guided tree search ([`mcts`]), and compress the plans
//! into a loop-form program ([`generalize`]). Learned concepts live in a
//! [`dsl::ConceptLibrary`] and can be reused as macro actions. On top of the
//! library sit a goal-directed planner for messy initial scenes ([`goalplan`])
//! and a constraint compiler for attribute-annotated instructions
//! ([`constraints`]). [`corpus`] generates benchmark data and scores learned
//! programs.

pub mod backend;
pub mod constraints;
pub mod corpus;
pub mod dsl;
pub mod error;
pub mod generalize;
pub mod goalplan;
pub mod mcts;
pub mod scenegraph;
pub mod sketch;
pub mod world;

pub use error::{Result, SpgError};
