//! Discovery orchestration over a sequence of fresh-context LLM agents.
//!
//! The framework runs one agent at a time against a pluggable evaluation
//! playground. Knowledge persists across agents through two artifacts: an
//! append-only experiment [`archive`] and a structured [`digest`] that each
//! agent writes for its successor. The reference playground is a multi-cloud
//! multicast planner: a priced directed [`topology`], a plan [`evaluator`],
//! a [`milp`] model builder with an exact brute-force oracle, and the
//! [`playground`] glue that scores candidate programs in a sandboxed
//! subprocess.
//!
//! - [`topology`] — priced multi-cloud network and transfer instances
//! - [`evaluator`] — plan verification, cost/time model, combined score
//! - [`milp`] — mixed-integer model, LP emission, decoding, exact oracle
//! - [`digest`] — the structured cross-agent handoff summary
//! - [`archive`] — immutable per-agent experiment archive
//! - [`playground`] — candidate execution backends
//! - [`agent`] — one agent exploration: tool loop, budget, struggle tracking
//! - [`orchestrator`] — the full discovery loop and run metrics

pub mod agent;
pub mod archive;
pub mod digest;
pub mod evaluator;
pub mod milp;
pub mod orchestrator;
pub mod playground;
pub mod topology;
pub mod util;
