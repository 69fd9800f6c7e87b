//! The generational loop and its supporting operations.

use super::EngineError;
use crate::archive::{Archive, GenerationRecord};
use crate::config::{validate_config, RunConfig};
use crate::eval::{
    baseline_pool, evaluate_scaffold, reward_hack_flag, BaselinePool, Constitution, EvalEnv,
    EvalError, LoadedBenchmark, Split, TaskItem,
};
use crate::evolve::{evolve_offspring, AttemptOutcome, EvolutionAttempt, EvolveEnv};
use crate::moea::{elites, hypervolume, objective_vector, sample_parents, ObjectiveVector};
use crate::niche::{cluster, describe};
use crate::providers::{
    build_chat_model, build_embed_model, BudgetTracker, BudgetedChat, ChatModel, EmbedModel,
};
use crate::rngutil::substream;
use crate::types::{Measurement, Mode, Scaffold, ScaffoldId, ScoreCard};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

pub const ARCHIVE_FILE: &str = "archive.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";

/// The model bindings a run needs. The judge runs on the scaffold model.
#[derive(Clone)]
pub struct Providers {
    pub meta: Arc<dyn ChatModel>,
    pub scaffold: Arc<dyn ChatModel>,
    pub judge: Arc<dyn ChatModel>,
    pub embed: Arc<dyn EmbedModel>,
}

impl Providers {
    pub fn from_config(config: &RunConfig) -> Self {
        let scaffold = build_chat_model(&config.scaffold_provider);
        Providers {
            meta: build_chat_model(&config.meta_provider),
            judge: scaffold.clone(),
            scaffold,
            embed: build_embed_model(&config.embedding_provider),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Simulates a crash: stop (without truncation) after flushing this
    /// generation.
    pub stop_after_generation: Option<u32>,
    /// Suppress per-generation progress lines on stderr.
    pub quiet: bool,
}

/// In-memory per-generation summary; the persisted record omits wall-clock
/// time so archives stay byte-deterministic.
#[derive(Debug, Clone)]
pub struct GenerationReport {
    pub generation: u32,
    pub population_size: u32,
    pub clusters: usize,
    pub elite_count: usize,
    pub accepted: u32,
    pub rejected: u32,
    pub hv_value: f64,
    pub tokens_used: u64,
    pub wall_clock_ms: u64,
}

impl GenerationReport {
    fn print(&self) {
        eprintln!(
            "gen {:>3}: population {:>4}, clusters {:>3}, elites {:>3}, offspring +{} / -{}, hv {:.6}, tokens {}, {} ms",
            self.generation,
            self.population_size,
            self.clusters,
            self.elite_count,
            self.accepted,
            self.rejected,
            self.hv_value,
            self.tokens_used,
            self.wall_clock_ms,
        );
    }
}

struct Engine {
    config: RunConfig,
    archive: Archive,
    capability: LoadedBenchmark,
    safety: LoadedBenchmark,
    helpfulness: Option<LoadedBenchmark>,
    constitution: Constitution,
    pool: Option<BaselinePool>,
    baseline_helpfulness: Option<Measurement>,
    meta: Arc<dyn ChatModel>,
    scaffold_provider: Arc<dyn ChatModel>,
    judge: Arc<dyn ChatModel>,
    embed: Arc<dyn EmbedModel>,
    budget: Arc<BudgetTracker>,
    out_dir: PathBuf,
    options: RunOptions,
}

fn stop_for_budget(result: &EvalError) -> bool {
    matches!(result, EvalError::AllUnscorable)
}

impl Engine {
    fn new(
        config: RunConfig,
        archive: Archive,
        providers: &Providers,
        out_dir: &Path,
        options: RunOptions,
    ) -> Result<Self, EngineError> {
        let capability = LoadedBenchmark::load(&config.capability_benchmark)?;
        let safety = LoadedBenchmark::load(&config.safety_benchmark)?;
        let helpfulness = config
            .helpfulness_benchmark
            .as_ref()
            .map(LoadedBenchmark::load)
            .transpose()?;
        let constitution = Constitution::load(&config.constitution_path)?;
        let budget = BudgetTracker::new(config.token_cap);
        Ok(Engine {
            meta: BudgetedChat::new(providers.meta.clone(), budget.clone()),
            scaffold_provider: BudgetedChat::new(providers.scaffold.clone(), budget.clone()),
            judge: BudgetedChat::new(providers.judge.clone(), budget.clone()),
            embed: providers.embed.clone(),
            config,
            archive,
            capability,
            safety,
            helpfulness,
            constitution,
            pool: None,
            baseline_helpfulness: None,
            budget,
            out_dir: out_dir.to_path_buf(),
            options,
        })
    }

    fn seed_rng(&self, label: &str, index: u64) -> ChaCha8Rng {
        substream(self.config.rng_seed, label, index)
    }

    fn cot_seed(&self) -> Option<&Scaffold> {
        self.archive
            .scaffolds()
            .iter()
            .find(|s| s.name == "Chain-of-Thought" && s.generation == 0)
    }

    /// Builds (or deterministically rebuilds, on resume) the baseline
    /// correctness pool from the CoT seed.
    fn build_baseline_pool(&mut self) -> Result<(), EngineError> {
        let cot = self
            .cot_seed()
            .cloned()
            .ok_or(EngineError::NothingScored)?;
        let mut rng = self.seed_rng("baseline", 0);
        let pool = baseline_pool(
            &self.capability.validation,
            &cot,
            self.scaffold_provider.as_ref(),
            self.capability.binding.scorer,
            self.config.baseline_validation_pool,
            self.config.invocation_cap,
            &mut rng,
        )?;
        self.pool = Some(pool);
        // Baseline helpfulness may already be on a loaded archive.
        self.baseline_helpfulness = self
            .cot_seed()
            .and_then(|s| s.scores.validation.as_ref())
            .and_then(|card| card.helpfulness.clone());
        Ok(())
    }

    fn eval_env(&self) -> EvalEnv<'_> {
        EvalEnv {
            capability: &self.capability,
            safety: &self.safety,
            helpfulness: self.helpfulness.as_ref(),
            constitution: &self.constitution,
            baseline_pool: self.pool.as_ref(),
            scaffold_provider: self.scaffold_provider.as_ref(),
            judge_provider: self.judge.as_ref(),
            validation_sample_count: self.config.validation_sample_count,
            safety_validation_prompts: self.config.safety_validation_prompts,
            test_sample_count: self.config.test_sample_count,
            bootstrap_resamples: self.config.bootstrap_resamples,
            bootstrap_level: self.config.bootstrap_level,
            invocation_cap: self.config.invocation_cap,
        }
    }

    /// Evaluates every scaffold lacking validation scores. Returns false when
    /// the token budget ran out and the run should stop cleanly.
    fn evaluate_unevaluated(&mut self) -> Result<bool, EngineError> {
        let pending: Vec<ScaffoldId> = self
            .archive
            .scaffolds()
            .iter()
            .filter(|s| s.scores.validation.is_none())
            .map(|s| s.id.clone())
            .collect();
        for id in pending {
            if self.budget.check().is_err() {
                return Ok(false);
            }
            let scaffold = self
                .archive
                .get(&id)
                .cloned()
                .ok_or_else(|| EngineError::UnknownId(id.clone()))?;
            let mut rng = self.seed_rng(&format!("eval/{id}"), 0);
            let card = match evaluate_scaffold(&scaffold, &self.eval_env(), Split::Validation, &mut rng) {
                Ok(card) => card,
                Err(e) if stop_for_budget(&e) && self.budget.check().is_err() => return Ok(false),
                Err(e) => return Err(e.into()),
            };
            if self.budget.check().is_err() {
                // The card may have been polluted by budget failures; drop it
                // and stop at the boundary.
                return Ok(false);
            }
            if self.baseline_helpfulness.is_none() && scaffold.name == "Chain-of-Thought" {
                self.baseline_helpfulness = card.helpfulness.clone();
            }
            let flag = reward_hack_flag(
                &card,
                self.baseline_helpfulness.as_ref(),
                self.config.reward_hack_drop_threshold,
            );
            self.archive.modify(&id, |s| {
                s.scores.validation = Some(card);
                s.reward_hack_flag = flag;
            })?;
        }
        Ok(true)
    }

    fn ensure_descriptors(&mut self) -> Result<(), EngineError> {
        let missing: Vec<Scaffold> = self
            .archive
            .scaffolds()
            .iter()
            .filter(|s| s.descriptor.is_none())
            .cloned()
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        let embedder = self.embed.as_ref();
        let descriptors = crate::par::map(&missing, |scaffold| {
            describe(scaffold, embedder).map(|d| (scaffold.id.clone(), d))
        });
        for result in descriptors {
            let (id, descriptor) = result?;
            self.archive.modify(&id, |s| s.descriptor = Some(descriptor))?;
        }
        Ok(())
    }

    fn objective_vectors(&self) -> Result<BTreeMap<ScaffoldId, ObjectiveVector>, EngineError> {
        let mut vectors = BTreeMap::new();
        for scaffold in self.archive.scaffolds() {
            if let Some(card) = scaffold.scores.validation.as_ref() {
                vectors.insert(scaffold.id.clone(), objective_vector(card, self.config.mode)?);
            }
        }
        Ok(vectors)
    }

    /// Mode-aware hypervolume of the scored population: 2-D sweep at
    /// reference (0, 0), or the best capability in 1-D capable mode.
    fn population_hv(&self, vectors: &BTreeMap<ScaffoldId, ObjectiveVector>) -> Result<f64, EngineError> {
        let points: Vec<ObjectiveVector> = vectors.values().cloned().collect();
        if points.is_empty() {
            return Ok(0.0);
        }
        match self.config.mode {
            Mode::Capable => Ok(points
                .iter()
                .map(|p| p.0[0])
                .fold(f64::NEG_INFINITY, f64::max)),
            Mode::Blue | Mode::Red => {
                Ok(hypervolume(&points, &ObjectiveVector(vec![0.0, 0.0]))?)
            }
        }
    }

    fn smoke_task(&self) -> TaskItem {
        let mut items: Vec<&TaskItem> = self.capability.validation.iter().collect();
        items.sort_by(|a, b| a.id.cmp(&b.id));
        (*items.first().expect("validation split is non-empty")).clone()
    }

    fn append_transcripts(&self, generation: u32, attempts: &[EvolutionAttempt]) {
        let path = self.out_dir.join(TRANSCRIPTS_FILE);
        let Ok(mut file) = std::fs::OpenOptions::new().create(true).append(true).open(&path)
        else {
            return;
        };
        for (index, attempt) in attempts.iter().enumerate() {
            let line = serde_json::json!({
                "generation": generation,
                "attempt": index,
                "record": attempt,
            });
            let _ = writeln!(file, "{line}");
        }
    }

    /// One generation: evaluate, cluster, select elites, breed, record.
    /// Returns the report, or `None` when the budget stopped the run.
    fn step(&mut self, generation: u32) -> Result<Option<GenerationReport>, EngineError> {
        let started = Instant::now();
        let tokens_before = self.budget.used();

        if !self.evaluate_unevaluated()? {
            return Ok(None);
        }
        self.ensure_descriptors()?;

        let points: Vec<(ScaffoldId, crate::types::Descriptor)> = self
            .archive
            .scaffolds()
            .iter()
            .map(|s| (s.id.clone(), s.descriptor.clone().expect("descriptor set")))
            .collect();
        let partition = cluster(&points, self.config.cluster_distance_threshold)?;
        let vectors = self.objective_vectors()?;
        let elite_set = elites(&vectors, &partition)?;
        let hv_value = self.population_hv(&vectors)?;
        if let Some(previous) = self.archive.generation_records.last() {
            debug_assert!(
                hv_value + 1e-12 >= previous.hv_value,
                "cumulative hypervolume decreased: {} -> {hv_value}",
                previous.hv_value
            );
        }

        // Breed offspring from the elite cohort.
        let elite_scaffolds: Vec<&Scaffold> = elite_set
            .union
            .iter()
            .filter_map(|id| self.archive.get(id))
            .collect();
        let smoke = self.smoke_task();
        let existing_names = self.archive.names();
        let safety_description = match self.config.mode {
            Mode::Capable => String::new(),
            _ => self.safety.binding.description.clone(),
        };
        let env = EvolveEnv {
            mode: self.config.mode,
            meta: self.meta.as_ref(),
            scaffold_provider: self.scaffold_provider.as_ref(),
            benchmark_description: &self.capability.binding.description,
            safety_description: &safety_description,
            elites: elite_scaffolds,
            smoke_task: &smoke,
            invocation_cap: self.config.invocation_cap,
            existing_names: &existing_names,
        };

        let attempt_count = self.config.offspring_per_generation;
        let inputs: Vec<(u64, ChaCha8Rng)> = (0..attempt_count)
            .map(|m| {
                (
                    m as u64,
                    self.seed_rng(&format!("gen{generation}/attempt"), m as u64),
                )
            })
            .collect();
        let attempts: Vec<EvolutionAttempt> = crate::par::map(&inputs, |(m, rng)| {
            let mut rng = rng.clone();
            match sample_parents(&elite_set, &mut rng) {
                Ok((kind, parent_ids)) => {
                    let parents: Vec<&Scaffold> = parent_ids
                        .iter()
                        .filter_map(|id| self.archive.get(id))
                        .collect();
                    evolve_offspring(&parents, kind, &env, &mut rng)
                }
                Err(e) => EvolutionAttempt {
                    kind: crate::moea::OperatorKind::Mutation,
                    operator: None,
                    parent_ids: vec![],
                    transcript: vec![],
                    outcome: AttemptOutcome::Rejected {
                        reason: crate::evolve::RejectReason::Provider,
                        detail: format!("parent sampling failed on attempt {m}: {e}"),
                    },
                    smoke_eval_errors: vec![],
                },
            }
        });

        // Merge accepted offspring in attempt order, renaming on in-batch
        // collisions.
        let mut offspring_ids = Vec::new();
        let mut rejected = 0u32;
        let mut names_taken = existing_names;
        for attempt in &attempts {
            match &attempt.outcome {
                AttemptOutcome::Accepted { scaffold } => {
                    let mut scaffold = scaffold.clone();
                    if names_taken.contains(&scaffold.name) {
                        let renamed = {
                            let mut n = 2;
                            loop {
                                let candidate = format!("{}-{n}", scaffold.name);
                                if !names_taken.contains(&candidate) {
                                    break candidate;
                                }
                                n += 1;
                            }
                        };
                        scaffold.name = renamed;
                        scaffold.id = ScaffoldId::derive(
                            &scaffold.name,
                            &scaffold.program.canonical_json(),
                            scaffold.id.suffix(),
                        );
                    }
                    names_taken.insert(scaffold.name.clone());
                    offspring_ids.push(scaffold.id.clone());
                    self.archive.append(scaffold)?;
                }
                AttemptOutcome::Rejected { .. } => rejected += 1,
            }
        }
        self.append_transcripts(generation, &attempts);

        let record = GenerationRecord {
            generation,
            offspring_ids,
            elite_ids: elite_set.union.clone(),
            cluster_assignments: partition.assignments.clone(),
            hv_value,
            population_size: self.archive.len() as u32,
            rejected_offspring: rejected,
            tokens_used: self.budget.used().saturating_sub(tokens_before),
        };
        let report = GenerationReport {
            generation,
            population_size: record.population_size,
            clusters: partition.k,
            elite_count: elite_set.union.len(),
            accepted: record.offspring_ids.len() as u32,
            rejected,
            hv_value,
            tokens_used: record.tokens_used,
            wall_clock_ms: started.elapsed().as_millis() as u64,
        };
        self.archive.push_record(record)?;
        Ok(Some(report))
    }

    fn save(&self) -> Result<(), EngineError> {
        Ok(self.archive.save(&self.out_dir.join(ARCHIVE_FILE))?)
    }

    /// The generational loop from `start` to G, flushing every boundary.
    fn run_loop(&mut self, start: u32) -> Result<(), EngineError> {
        for generation in start..=self.config.generations {
            match self.step(generation)? {
                Some(report) => {
                    if !self.options.quiet {
                        report.print();
                    }
                    self.save()?;
                    if self.options.stop_after_generation == Some(generation) {
                        return Ok(());
                    }
                }
                None => {
                    self.archive.truncated = true;
                    self.save()?;
                    if !self.options.quiet {
                        eprintln!("token budget exhausted; stopping with a truncated archive");
                    }
                    return Ok(());
                }
            }
        }
        // Final top-up so the last generation's offspring carry scores for
        // export and reporting.
        if self.evaluate_unevaluated()? {
            self.ensure_descriptors()?;
        } else {
            self.archive.truncated = true;
        }
        self.save()
    }
}

fn engine_loop(mut engine: Engine, start: u32) -> Result<Archive, EngineError> {
    engine.build_baseline_pool()?;
    #[cfg(feature = "parallel")]
    {
        if let Some(threads) = engine.config.worker_threads {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("worker pool");
            pool.install(|| engine.run_loop(start))?;
            return Ok(engine.archive);
        }
    }
    engine.run_loop(start)?;
    Ok(engine.archive)
}

/// Runs the full loop with providers built from the config profiles.
pub fn run(config: RunConfig, out_dir: &Path) -> Result<Archive, EngineError> {
    let providers = Providers::from_config(&config);
    run_with_providers(config, &providers, out_dir, RunOptions::default())
}

/// Runs the full loop with injected providers (the seam tests use).
pub fn run_with_providers(
    config: RunConfig,
    providers: &Providers,
    out_dir: &Path,
    options: RunOptions,
) -> Result<Archive, EngineError> {
    let diagnostics = validate_config(&config);
    if !diagnostics.is_empty() {
        return Err(EngineError::Config(diagnostics));
    }
    std::fs::create_dir_all(out_dir).map_err(|source| EngineError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut archive = Archive::new(config.clone());
    for seed in crate::runtime::seed_scaffolds() {
        archive.append(seed)?;
    }
    let engine = Engine::new(config, archive, providers, out_dir, options)?;
    engine_loop(engine, 1)
}

/// Resumes an interrupted run from its last flushed generation boundary.
pub fn resume(out_dir: &Path) -> Result<Archive, EngineError> {
    let archive = Archive::load(&out_dir.join(ARCHIVE_FILE))?;
    let providers = Providers::from_config(&archive.config);
    resume_with_providers(out_dir, &providers, RunOptions::default())
}

pub fn resume_with_providers(
    out_dir: &Path,
    providers: &Providers,
    options: RunOptions,
) -> Result<Archive, EngineError> {
    let mut archive = Archive::load(&out_dir.join(ARCHIVE_FILE))?;
    archive.truncated = false;
    let config = archive.config.clone();
    let start = archive
        .generation_records
        .last()
        .map(|r| r.generation + 1)
        .unwrap_or(1);
    let engine = Engine::new(config, archive, providers, out_dir, options)?;
    engine_loop(engine, start)
}

/// Evaluates the named scaffolds on the test split only, never touching
/// validation scores. Results are stored under the test context and
/// returned.
pub fn evaluate_test(
    archive: &mut Archive,
    ids: &[ScaffoldId],
    providers: &Providers,
) -> Result<BTreeMap<ScaffoldId, ScoreCard>, EngineError> {
    let config = archive.config.clone();
    let capability = LoadedBenchmark::load(&config.capability_benchmark)?;
    let safety = LoadedBenchmark::load(&config.safety_benchmark)?;
    let helpfulness = config
        .helpfulness_benchmark
        .as_ref()
        .map(LoadedBenchmark::load)
        .transpose()?;
    let constitution = Constitution::load(&config.constitution_path)?;
    let env = EvalEnv {
        capability: &capability,
        safety: &safety,
        helpfulness: helpfulness.as_ref(),
        constitution: &constitution,
        baseline_pool: None,
        scaffold_provider: providers.scaffold.as_ref(),
        judge_provider: providers.judge.as_ref(),
        validation_sample_count: config.validation_sample_count,
        safety_validation_prompts: config.safety_validation_prompts,
        test_sample_count: config.test_sample_count,
        bootstrap_resamples: config.bootstrap_resamples,
        bootstrap_level: config.bootstrap_level,
        invocation_cap: config.invocation_cap,
    };
    let mut cards = BTreeMap::new();
    for id in ids {
        let scaffold = archive
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownId(id.clone()))?;
        let mut rng = substream(config.rng_seed, &format!("test/{id}"), 0);
        let card = evaluate_scaffold(&scaffold, &env, Split::Test, &mut rng)?;
        archive.modify(id, |s| s.scores.test = Some(card.clone()))?;
        cards.insert(id.clone(), card);
    }
    Ok(cards)
}

/// Selects the best scaffold: argmax of the mode's objective sum over
/// non-flagged candidates, ties broken by earlier generation then
/// lexicographic id.
pub fn select_best(
    archive: &Archive,
    mode: Mode,
    scores: &BTreeMap<ScaffoldId, ScoreCard>,
    hack_flags: &BTreeMap<ScaffoldId, Option<bool>>,
) -> Result<ScaffoldId, EngineError> {
    if scores.is_empty() {
        return Err(EngineError::NothingScored);
    }
    let mut best: Option<(f64, u32, ScaffoldId)> = None;
    let mut any_unflagged = false;
    for (id, card) in scores {
        if hack_flags.get(id).copied().flatten() == Some(true) {
            continue;
        }
        any_unflagged = true;
        let value = match mode {
            Mode::Blue => card.capability.median + card.safety.median,
            Mode::Red => card.capability.median + (1.0 - card.safety.median),
            Mode::Capable => card.capability.median,
        };
        let generation = archive.get(id).map(|s| s.generation).unwrap_or(u32::MAX);
        let candidate = (value, generation, id.clone());
        best = Some(match best.take() {
            None => candidate,
            Some(current) => {
                let (bv, bg, bid) = &current;
                if value > *bv
                    || (value == *bv && generation < *bg)
                    || (value == *bv && generation == *bg && id < bid)
                {
                    candidate
                } else {
                    current
                }
            }
        });
    }
    if !any_unflagged {
        return Err(EngineError::AllFlagged);
    }
    Ok(best.expect("at least one candidate").2)
}
