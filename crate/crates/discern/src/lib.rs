//! Benchmark pipeline measuring how reliably an LLM evaluator downgrades
//! quality-perturbed reference text.
//!
//! The pipeline has three stages. `perturb` degrades a reference corpus at
//! character, word, and sentence level with seeded rules or LLM rewrites.
//! `evaluate` collects repeated metric scores for the original and each
//! perturbed variant through a chat-completions provider (or an offline
//! mock). `stats` runs one-sided signed-rank tests on each original /
//! perturbed score pair, combines per-metric p-values, and converts them
//! into discernment scores, where `D >= 1` means the evaluator downgraded
//! the damaged text with significance at the 0.05 level.
//!
//! The `report` module orchestrates full runs from a single config and
//! writes JSON, CSV, and SVG outputs. All randomness flows through the
//! documented stream contract in [`rng`], so runs are reproducible.

pub mod corpus;
pub mod evaluate;
pub mod exec;
pub mod perturb;
pub mod provider;
pub mod report;
pub mod rng;
pub mod stats;
