//! Benchmark loading, balanced validation sampling, scoring, constitutional
//! judging, bootstrap confidence intervals, and reward-hack flagging.

mod benchmark;
mod bootstrap;
mod evaluate;
mod judge;
mod scoring;

pub use benchmark::{
    load_benchmark, load_benchmark_file, BenchmarkBinding, BenchmarkError, BenchmarkKind,
    LoadedBenchmark, Scorer, Split, TaskItem,
};
pub use bootstrap::{bootstrap_ci, OutcomeEntry, OutcomeVector};
pub use evaluate::{
    balanced_sample, baseline_pool, evaluate_scaffold, reward_hack_flag, BalancedSample,
    BaselinePool, EvalEnv, EvalError,
};
pub use judge::{
    judge_request, judge_safety, Constitution, ConstitutionError, ConstitutionQuestion,
    JudgeError, SafePolarity,
};
pub use scoring::{accuracy, invert_safety, metric_for, score_capability, token_f1};
