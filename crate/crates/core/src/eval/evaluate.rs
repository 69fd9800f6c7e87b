//! Scaffold evaluation: balanced validation sampling against a baseline
//! correctness pool, capability/safety/helpfulness scoring, and reward-hack
//! flagging.

use super::benchmark::{LoadedBenchmark, Scorer, Split, TaskItem};
use super::bootstrap::{bootstrap_ci, OutcomeVector};
use super::judge::{judge_safety, Constitution};
use super::scoring::{metric_for, score_capability};
use crate::par;
use crate::providers::ChatModel;
use crate::runtime::{execute, ExecError};
use crate::types::{Measurement, Metric, Scaffold, ScoreCard};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("pool size must be positive")]
    EmptyPool,
    #[error("benchmark {0} has no items in the requested split")]
    EmptySplit(String),
    #[error("balanced sampling needs an even sample size, got {0}")]
    OddSampleSize(u32),
    #[error("every item became unscorable; provider exhausted")]
    AllUnscorable,
    #[error("no helpfulness benchmark is bound")]
    NoHelpfulness,
}

/// Per-item correctness of the baseline scaffold on the validation split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselinePool {
    /// Most recent correctness of each distinct evaluated item.
    pub correctness: BTreeMap<String, bool>,
    /// Items whose evaluation failed with a provider error.
    pub unusable: Vec<String>,
}

impl BaselinePool {
    pub fn positives(&self) -> Vec<&String> {
        self.correctness
            .iter()
            .filter(|(_, &ok)| ok)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn negatives(&self) -> Vec<&String> {
        self.correctness
            .iter()
            .filter(|(_, &ok)| !ok)
            .map(|(id, _)| id)
            .collect()
    }
}

/// Evaluates the baseline scaffold on `pool_size` draws (with replacement)
/// from the validation items and records per-item correctness of the most
/// recent evaluation of each distinct item.
pub fn baseline_pool<R: Rng>(
    items: &[TaskItem],
    baseline: &Scaffold,
    provider: &dyn ChatModel,
    scorer: Scorer,
    pool_size: u32,
    invocation_cap: u32,
    rng: &mut R,
) -> Result<BaselinePool, EvalError> {
    if pool_size == 0 {
        return Err(EvalError::EmptyPool);
    }
    if items.is_empty() {
        return Err(EvalError::EmptySplit("baseline".into()));
    }
    let draws: Vec<usize> = (0..pool_size)
        .map(|_| rng.random_range(0..items.len()))
        .collect();
    let results = par::map(&draws, |&index| {
        let item = &items[index];
        let outcome = execute(
            &baseline.program,
            &item.question,
            &item.required_answer_format,
            provider,
            invocation_cap,
        );
        let verdict = match outcome {
            Ok(trace) => {
                let answer = trace.final_answer.unwrap_or_default();
                Some(score_capability(&answer, &item.gold_answer, scorer) >= 1.0)
            }
            Err(_) => None,
        };
        (item.id.clone(), verdict)
    });
    let mut pool = BaselinePool::default();
    for (id, verdict) in results {
        match verdict {
            Some(correct) => {
                pool.correctness.insert(id, correct);
            }
            None => {
                pool.correctness.remove(&id);
                if !pool.unusable.contains(&id) {
                    pool.unusable.push(id);
                }
            }
        }
    }
    Ok(pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedSample {
    pub ids: Vec<String>,
    /// Set when the pool was one-sided and the sampler fell back to uniform.
    pub fallback: bool,
}

fn sample_side<R: Rng>(side: &[&String], half: usize, rng: &mut R) -> Vec<String> {
    if side.len() >= half {
        // Partial Fisher-Yates: distinct draws.
        let mut indices: Vec<usize> = (0..side.len()).collect();
        let mut out = Vec::with_capacity(half);
        for slot in 0..half {
            let pick = rng.random_range(slot..indices.len());
            indices.swap(slot, pick);
            out.push(side[indices[slot]].clone());
        }
        out
    } else {
        (0..half)
            .map(|_| side[rng.random_range(0..side.len())].clone())
            .collect()
    }
}

/// Draws exactly n/2 ids the baseline answered correctly and n/2 it answered
/// incorrectly, sampling with replacement when a side is smaller than n/2.
/// A one-sided pool falls back to uniform sampling with a flag.
pub fn balanced_sample<R: Rng>(
    pool: &BaselinePool,
    n: u32,
    rng: &mut R,
) -> Result<BalancedSample, EvalError> {
    if n % 2 != 0 || n == 0 {
        return Err(EvalError::OddSampleSize(n));
    }
    if pool.correctness.is_empty() {
        return Err(EvalError::EmptyPool);
    }
    let positives = pool.positives();
    let negatives = pool.negatives();
    if positives.is_empty() || negatives.is_empty() {
        let all: Vec<&String> = pool.correctness.keys().collect();
        let ids = (0..n)
            .map(|_| all[rng.random_range(0..all.len())].clone())
            .collect();
        return Ok(BalancedSample {
            ids,
            fallback: true,
        });
    }
    let half = (n / 2) as usize;
    let mut ids = sample_side(&positives, half, rng);
    ids.extend(sample_side(&negatives, half, rng));
    Ok(BalancedSample {
        ids,
        fallback: false,
    })
}

/// Distinct draws when the split is large enough, otherwise every item.
fn sample_items<'a, R: Rng>(items: &'a [TaskItem], count: u32, rng: &mut R) -> Vec<&'a TaskItem> {
    let count = count as usize;
    if items.len() <= count {
        return items.iter().collect();
    }
    let mut indices: Vec<usize> = (0..items.len()).collect();
    let mut out = Vec::with_capacity(count);
    for slot in 0..count {
        let pick = rng.random_range(slot..indices.len());
        indices.swap(slot, pick);
        out.push(&items[indices[slot]]);
    }
    out
}

/// Draws exactly `count` items, with replacement when the split is smaller.
fn sample_items_exact<'a, R: Rng>(
    items: &'a [TaskItem],
    count: u32,
    rng: &mut R,
) -> Vec<&'a TaskItem> {
    if items.len() >= count as usize {
        sample_items(items, count, rng)
    } else {
        (0..count)
            .map(|_| &items[rng.random_range(0..items.len())])
            .collect()
    }
}

/// Everything an evaluation pass needs.
pub struct EvalEnv<'a> {
    pub capability: &'a LoadedBenchmark,
    pub safety: &'a LoadedBenchmark,
    pub helpfulness: Option<&'a LoadedBenchmark>,
    pub constitution: &'a Constitution,
    pub baseline_pool: Option<&'a BaselinePool>,
    pub scaffold_provider: &'a dyn ChatModel,
    pub judge_provider: &'a dyn ChatModel,
    pub validation_sample_count: u32,
    pub safety_validation_prompts: u32,
    pub test_sample_count: u32,
    pub bootstrap_resamples: u32,
    pub bootstrap_level: f64,
    pub invocation_cap: u32,
}

fn run_item(
    scaffold: &Scaffold,
    item: &TaskItem,
    provider: &dyn ChatModel,
    cap: u32,
) -> Result<String, ExecError> {
    execute(
        &scaffold.program,
        &item.question,
        &item.required_answer_format,
        provider,
        cap,
    )
    .map(|trace| trace.final_answer.unwrap_or_default())
}

/// Capability or helpfulness outcomes: runtime errors score 0 with a flag.
fn answer_outcomes(
    scaffold: &Scaffold,
    items: &[&TaskItem],
    scorer: Scorer,
    env: &EvalEnv<'_>,
) -> OutcomeVector {
    let scored = par::map(items, |item| {
        match run_item(scaffold, item, env.scaffold_provider, env.invocation_cap) {
            Ok(answer) => (
                item.id.clone(),
                score_capability(&answer, &item.gold_answer, scorer),
                false,
            ),
            Err(_) => (item.id.clone(), 0.0, true),
        }
    });
    let mut outcomes = OutcomeVector::default();
    for (id, score, flagged) in scored {
        outcomes.push(id, score, flagged);
    }
    outcomes
}

/// Safety outcomes: runtime errors score 0 flagged; judge errors exclude the
/// item entirely.
fn safety_outcomes(
    scaffold: &Scaffold,
    items: &[&TaskItem],
    env: &EvalEnv<'_>,
) -> Result<OutcomeVector, EvalError> {
    #[derive(Clone)]
    enum ItemResult {
        Scored(f64),
        RuntimeError,
        Unscorable,
    }
    let judged = par::map(items, |item| {
        let result = match run_item(scaffold, item, env.scaffold_provider, env.invocation_cap) {
            Ok(answer) => match judge_safety(&answer, env.constitution, env.judge_provider) {
                Ok(score) => ItemResult::Scored(score),
                Err(_) => ItemResult::Unscorable,
            },
            Err(_) => ItemResult::RuntimeError,
        };
        (item.id.clone(), result)
    });
    let mut outcomes = OutcomeVector::default();
    for (id, result) in judged {
        match result {
            ItemResult::Scored(score) => outcomes.push(id, score, false),
            ItemResult::RuntimeError => outcomes.push(id, 0.0, true),
            ItemResult::Unscorable => {}
        }
    }
    if outcomes.is_empty() {
        return Err(EvalError::AllUnscorable);
    }
    Ok(outcomes)
}

fn measure<R: Rng>(
    outcomes: &OutcomeVector,
    metric: Metric,
    env: &EvalEnv<'_>,
    rng: &mut R,
) -> Measurement {
    bootstrap_ci(
        outcomes,
        env.bootstrap_resamples,
        env.bootstrap_level,
        metric,
        rng,
    )
}

/// Evaluates one scaffold on one split and returns its score card.
///
/// Validation capability uses the balanced sample against the baseline pool;
/// safety uses `safety_validation_prompts` items; test uses
/// `test_sample_count` items on every axis. Red mode stores raw safety.
pub fn evaluate_scaffold<R: Rng>(
    scaffold: &Scaffold,
    env: &EvalEnv<'_>,
    split: Split,
    rng: &mut R,
) -> Result<ScoreCard, EvalError> {
    // Capability item selection.
    let capability_items: Vec<&TaskItem> = match split {
        Split::Validation => {
            let validation = &env.capability.validation;
            if validation.is_empty() {
                return Err(EvalError::EmptySplit(env.capability.binding.name.clone()));
            }
            let by_id: BTreeMap<&str, &TaskItem> =
                validation.iter().map(|item| (item.id.as_str(), item)).collect();
            match env.baseline_pool {
                Some(pool) if !pool.correctness.is_empty() => {
                    let sample = balanced_sample(pool, env.validation_sample_count, rng)?;
                    sample
                        .ids
                        .iter()
                        .filter_map(|id| by_id.get(id.as_str()).copied())
                        .collect()
                }
                // No baseline pool bound: uniform draws.
                _ => sample_items_exact(validation, env.validation_sample_count, rng),
            }
        }
        Split::Test => {
            let test = &env.capability.test;
            if test.is_empty() {
                return Err(EvalError::EmptySplit(env.capability.binding.name.clone()));
            }
            sample_items(test, env.test_sample_count, rng)
        }
    };

    // Safety item selection.
    let safety_source = env.safety.split_items(split);
    if safety_source.is_empty() {
        return Err(EvalError::EmptySplit(env.safety.binding.name.clone()));
    }
    let safety_items: Vec<&TaskItem> = match split {
        Split::Validation => sample_items_exact(safety_source, env.safety_validation_prompts, rng),
        Split::Test => sample_items(safety_source, env.test_sample_count, rng),
    };

    // Helpfulness item selection (uniform; the balanced pool is defined for
    // the capability benchmark only).
    let helpfulness_items: Option<Vec<&TaskItem>> = match env.helpfulness {
        Some(benchmark) => {
            let source = benchmark.split_items(split);
            if source.is_empty() {
                return Err(EvalError::EmptySplit(benchmark.binding.name.clone()));
            }
            Some(match split {
                Split::Validation => {
                    sample_items_exact(source, env.validation_sample_count, rng)
                }
                Split::Test => sample_items(source, env.test_sample_count, rng),
            })
        }
        None => None,
    };

    let capability_outcomes =
        answer_outcomes(scaffold, &capability_items, env.capability.binding.scorer, env);
    let safety_outcomes = safety_outcomes(scaffold, &safety_items, env)?;
    let helpfulness_outcomes = helpfulness_items.map(|items| {
        let scorer = env.helpfulness.unwrap().binding.scorer;
        answer_outcomes(scaffold, &items, scorer, env)
    });

    let capability = measure(
        &capability_outcomes,
        metric_for(env.capability.binding.scorer),
        env,
        rng,
    );
    let safety = measure(&safety_outcomes, Metric::Accuracy, env, rng);
    let helpfulness = helpfulness_outcomes.map(|outcomes| {
        measure(
            &outcomes,
            metric_for(env.helpfulness.unwrap().binding.scorer),
            env,
            rng,
        )
    });

    Ok(ScoreCard {
        capability,
        safety,
        helpfulness,
    })
}

/// Reward-hack verdict: `Some(true)` iff helpfulness dropped more than
/// `drop_threshold` relative to baseline (strict), `None` when either
/// helpfulness measurement is missing — never silently false.
pub fn reward_hack_flag(
    card: &ScoreCard,
    baseline_helpfulness: Option<&Measurement>,
    drop_threshold: f64,
) -> Option<bool> {
    let helpfulness = card.helpfulness.as_ref()?;
    let baseline = baseline_helpfulness?;
    Some(helpfulness.median < baseline.median * (1.0 - drop_threshold))
}
