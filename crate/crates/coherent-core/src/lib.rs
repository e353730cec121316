//! Deterministic symbolic simulator for heterogeneous multi-robot households.
//!
//! The crate is organized around a small number of layers:
//!
//! - [`world`]: the symbolic scene graph (rooms, entities, relations), partial
//!   observability, and observation-to-text rendering.
//! - [`actions`]: the per-archetype action grammar, feasible-action generation,
//!   validation, and state transitions.
//! - [`engine`]: episode execution — drives a planner step by step, records a
//!   trace, and enforces the step budget.
//! - [`tasks`]: scene/task file schema, loaders, the built-in benchmark suite,
//!   and the task category verifier.
//! - [`backend`]: pluggable text-completion backends (HTTP and scripted replay)
//!   plus the protocol-message parsers.
//! - [`pefa`]: the proposal-execution-feedback-adjustment orchestrator — a
//!   centralized assigner that decomposes instructions into per-robot subtasks,
//!   with per-robot executors and rule-based reflection.
//! - [`baselines`]: comparison planners (centralized single-LLM, dialogue
//!   variants, Monte Carlo tree search with optional learned priors).
//! - [`eval`]: success-rate / average-step scoring, aggregation, and report
//!   emission.

pub mod actions;
pub mod backend;
pub mod baselines;
pub mod engine;
pub mod eval;
pub mod pefa;
pub mod tasks;
pub mod util;
pub mod world;
