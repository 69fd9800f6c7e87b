//! Multi-objective quality-diversity evolutionary search over multi-agent
//! workflow scaffolds.
//!
//! Populations of scaffolds (declarative agent-workflow programs) are bred
//! against paired capability and safety benchmarks. Each generation the whole
//! population is embedded, clustered into dynamic niches, and the Pareto front
//! of every niche becomes the elite cohort from which a meta model derives new
//! offspring via mutation and crossover. Three modes are supported:
//!
//! * `blue` — maximize capability and safety together,
//! * `red` — maximize capability while maximizing *inverted* safety,
//! * `capable` — capability only.
//!
//! The library ships deterministic mock providers so whole runs are
//! reproducible offline; an HTTP chat-completions provider covers live models.

pub mod archive;
pub mod config;
pub mod engine;
pub mod eval;
pub mod evolve;
pub mod moea;
pub mod niche;
pub mod par;
pub mod providers;
pub mod rngutil;
pub mod runtime;
pub mod types;
