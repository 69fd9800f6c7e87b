//! The meta-agent evolution pipeline: operator corpus, prompt rendering, and
//! the generate-reflect-debug loop that produces offspring scaffolds.

mod corpus;
mod pipeline;
mod prompts;

pub use corpus::{operator_corpus, sample_operator, MutationOperator, OperatorCategory};
pub use pipeline::{
    evolve_offspring, AttemptOutcome, EvolutionAttempt, EvolveEnv, Exchange, RejectReason, Stage,
    MAX_DEBUG_ROUNDS, REFLECTION_ROUNDS,
};
pub use prompts::{
    base_schema, debug_schema, elite_summary, reflection_schema, render_base_system,
    render_crossover_prompt, render_debug, render_mutation_prompt, render_reflection,
};
