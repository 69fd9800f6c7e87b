//! The meta-agent pipeline: base generation, two reflection rounds, then up
//! to three debug rounds gated by static validation and a smoke execution.

use super::corpus::{sample_operator, MutationOperator};
use super::prompts::{
    render_base_system, render_crossover_prompt, render_debug, render_mutation_prompt,
    render_reflection,
};
use crate::eval::TaskItem;
use crate::moea::OperatorKind;
use crate::providers::{extract_first_json_object, ChatModel, ChatRequest, Message};
use crate::runtime::{execute, validate_program, WorkflowProgram};
use crate::types::{Mode, Origin, Scaffold, ScaffoldId, ScoresByContext};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const REFLECTION_ROUNDS: u8 = 2;
pub const MAX_DEBUG_ROUNDS: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Base,
    Reflection1,
    Reflection2,
    Debug1,
    Debug2,
    Debug3,
}

impl Stage {
    fn debug(round: u8) -> Stage {
        match round {
            1 => Stage::Debug1,
            2 => Stage::Debug2,
            _ => Stage::Debug3,
        }
    }

    pub fn is_debug(self) -> bool {
        matches!(self, Stage::Debug1 | Stage::Debug2 | Stage::Debug3)
    }
}

/// One meta-model exchange: the newly added prompt text and the structured
/// response. Conversation history is implicit in the ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub stage: Stage,
    pub prompt: String,
    pub response: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Provider,
    Parse,
    Runtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum AttemptOutcome {
    Accepted { scaffold: Scaffold },
    Rejected { reason: RejectReason, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionAttempt {
    pub kind: OperatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<MutationOperator>,
    pub parent_ids: Vec<ScaffoldId>,
    pub transcript: Vec<Exchange>,
    pub outcome: AttemptOutcome,
    pub smoke_eval_errors: Vec<String>,
}

impl EvolutionAttempt {
    pub fn accepted(&self) -> Option<&Scaffold> {
        match &self.outcome {
            AttemptOutcome::Accepted { scaffold } => Some(scaffold),
            AttemptOutcome::Rejected { .. } => None,
        }
    }

    pub fn debug_rounds(&self) -> usize {
        self.transcript.iter().filter(|e| e.stage.is_debug()).count()
    }
}

/// Everything one evolution attempt needs besides parents and randomness.
pub struct EvolveEnv<'a> {
    pub mode: Mode,
    pub meta: &'a dyn ChatModel,
    pub scaffold_provider: &'a dyn ChatModel,
    pub benchmark_description: &'a str,
    pub safety_description: &'a str,
    /// Current elite cohort, rendered into the archive slot.
    pub elites: Vec<&'a Scaffold>,
    /// The single held-out validation task used for the smoke execution.
    pub smoke_task: &'a TaskItem,
    pub invocation_cap: u32,
    /// Names already present in the archive, for offspring deduplication.
    pub existing_names: &'a BTreeSet<String>,
}

struct Candidate {
    thought: String,
    name: String,
    code: String,
}

impl Candidate {
    fn from_fields(fields: &BTreeMap<String, String>) -> Candidate {
        Candidate {
            thought: fields.get("thought").cloned().unwrap_or_default(),
            name: fields.get("name").cloned().unwrap_or_default(),
            code: fields.get("code").cloned().unwrap_or_default(),
        }
    }
}

/// Parse, statically validate, and smoke-execute a candidate program.
/// Returns the program or a description of the first failure.
fn check_candidate(
    candidate: &Candidate,
    env: &EvolveEnv<'_>,
) -> Result<WorkflowProgram, (RejectReason, String)> {
    let value = extract_first_json_object(&candidate.code).ok_or((
        RejectReason::Parse,
        "no JSON object found in the code field".to_string(),
    ))?;
    let program: WorkflowProgram = serde_json::from_value(value)
        .map_err(|e| (RejectReason::Parse, format!("program does not match the schema: {e}")))?;
    let diagnostics = validate_program(&program, env.invocation_cap);
    if !diagnostics.is_empty() {
        let listing = diagnostics
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err((RejectReason::Runtime, format!("validation failed: {listing}")));
    }
    let smoke = execute(
        &program,
        &env.smoke_task.question,
        &env.smoke_task.required_answer_format,
        env.scaffold_provider,
        env.invocation_cap,
    );
    match smoke {
        Ok(_) => Ok(program),
        Err(e) => Err((RejectReason::Runtime, format!("smoke execution failed: {e}"))),
    }
}

fn dedup_name(name: &str, taken: &BTreeSet<String>) -> String {
    let base = if name.trim().is_empty() { "unnamed" } else { name.trim() };
    if !taken.contains(base) {
        return base.to_string();
    }
    for suffix in 2.. {
        let candidate = format!("{base}-{suffix}");
        if !taken.contains(&candidate) {
            return candidate;
        }
    }
    unreachable!()
}

/// Runs one full evolution attempt for the sampled parents.
///
/// Mutation samples an operator for the mode; crossover takes both parents
/// as-is. The meta conversation is: base prompt, two reflections, then up to
/// three debug rounds, each gated by parse + validation + smoke execution.
pub fn evolve_offspring<R: Rng>(
    parents: &[&Scaffold],
    kind: OperatorKind,
    env: &EvolveEnv<'_>,
    rng: &mut R,
) -> EvolutionAttempt {
    let parent_ids: Vec<ScaffoldId> = parents.iter().map(|p| p.id.clone()).collect();
    let operator = match kind {
        OperatorKind::Mutation => Some(sample_operator(env.mode, rng)),
        OperatorKind::Crossover => None,
    };
    // Drawn up front so the id suffix does not depend on how many debug
    // rounds the meta conversation takes.
    let id_suffix = format!("{:04x}", rng.random_range(0..0x1_0000u32));

    let mut attempt = EvolutionAttempt {
        kind,
        operator: operator.clone(),
        parent_ids: parent_ids.clone(),
        transcript: Vec::new(),
        outcome: AttemptOutcome::Rejected {
            reason: RejectReason::Provider,
            detail: "attempt not run".into(),
        },
        smoke_eval_errors: Vec::new(),
    };

    let system = render_base_system(env.benchmark_description, env.safety_description, &env.elites);
    let opening = match kind {
        OperatorKind::Mutation => {
            render_mutation_prompt(parents[0], operator.as_ref().expect("operator sampled"))
        }
        OperatorKind::Crossover => render_crossover_prompt(parents[0], parents[1]),
    };

    let mut conversation: Vec<Message> = vec![Message::system(system)];
    let exchange = |conversation: &mut Vec<Message>,
                        stage: Stage,
                        request: ChatRequest,
                        attempt: &mut EvolutionAttempt|
     -> Result<BTreeMap<String, String>, String> {
        let prompt = request.messages[0].content.clone();
        conversation.push(Message::user(prompt.clone()));
        let full_request = ChatRequest {
            messages: conversation.clone(),
            temperature: request.temperature,
            response_schema: request.response_schema,
        };
        let response = env.meta.chat(&full_request).map_err(|e| e.to_string())?;
        conversation.push(Message::assistant(response.raw_text.clone()));
        attempt.transcript.push(Exchange {
            stage,
            prompt,
            response: response.fields.clone(),
        });
        Ok(response.fields)
    };

    // Base + two reflection rounds.
    let mut fields = match exchange(&mut conversation, Stage::Base, opening, &mut attempt) {
        Ok(fields) => fields,
        Err(detail) => {
            attempt.outcome = AttemptOutcome::Rejected {
                reason: RejectReason::Provider,
                detail,
            };
            return attempt;
        }
    };
    for round in 1..=REFLECTION_ROUNDS {
        let stage = if round == 1 { Stage::Reflection1 } else { Stage::Reflection2 };
        match exchange(&mut conversation, stage, render_reflection(round), &mut attempt) {
            Ok(reflected) => fields = reflected,
            Err(detail) => {
                attempt.outcome = AttemptOutcome::Rejected {
                    reason: RejectReason::Provider,
                    detail,
                };
                return attempt;
            }
        }
    }

    // Candidate checking with up to three debug rounds.
    let mut candidate = Candidate::from_fields(&fields);
    let mut debug_round = 0u8;
    let program = loop {
        match check_candidate(&candidate, env) {
            Ok(program) => break program,
            Err((reason, detail)) => {
                attempt.smoke_eval_errors.push(detail.clone());
                if debug_round >= MAX_DEBUG_ROUNDS {
                    attempt.outcome = AttemptOutcome::Rejected { reason, detail };
                    return attempt;
                }
                debug_round += 1;
                match exchange(
                    &mut conversation,
                    Stage::debug(debug_round),
                    render_debug(&detail),
                    &mut attempt,
                ) {
                    Ok(debugged) => candidate = Candidate::from_fields(&debugged),
                    Err(detail) => {
                        attempt.outcome = AttemptOutcome::Rejected {
                            reason: RejectReason::Provider,
                            detail,
                        };
                        return attempt;
                    }
                }
            }
        }
    };

    let generation = 1 + parents.iter().map(|p| p.generation).max().unwrap_or(0);
    let name = dedup_name(&candidate.name, env.existing_names);
    let id = ScaffoldId::derive(&name, &program.canonical_json(), &id_suffix);
    attempt.outcome = AttemptOutcome::Accepted {
        scaffold: Scaffold {
            id,
            name,
            thought: candidate.thought,
            program,
            generation,
            parent_ids,
            origin: match kind {
                OperatorKind::Mutation => Origin::Mutation,
                OperatorKind::Crossover => Origin::Crossover,
            },
            descriptor: None,
            scores: ScoresByContext::default(),
            reward_hack_flag: None,
        },
    };
    attempt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ScriptedChat;
    use crate::providers::{DeterministicChat, ProviderProfile};
    use crate::rngutil::substream;
    use crate::runtime::seed_scaffolds;

    fn smoke_task() -> TaskItem {
        TaskItem {
            id: "smoke-1".into(),
            question: "What is 2 + 2?".into(),
            gold_answer: "4".into(),
            required_answer_format: "a single number".into(),
            split: crate::eval::Split::Validation,
        }
    }

    fn valid_program_json() -> String {
        seed_scaffolds()[0].program.canonical_json()
    }

    fn meta_response(code: &str) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("thought".into(), "a new idea".into());
        map.insert("name".into(), "Offspring".into());
        map.insert("code".into(), code.to_string());
        map.insert("reflection".into(), "looks fine".into());
        map.insert("debug_thought".into(), "fixing".into());
        map
    }

    fn run_attempt(meta: &ScriptedChat) -> EvolutionAttempt {
        let seeds = seed_scaffolds();
        let scaffold_provider = DeterministicChat::new(ProviderProfile::mock("scaffold", 41));
        let existing = BTreeSet::new();
        let task = smoke_task();
        let env = EvolveEnv {
            mode: Mode::Blue,
            meta,
            scaffold_provider: &scaffold_provider,
            benchmark_description: "bench",
            safety_description: "safety",
            elites: seeds.iter().collect(),
            smoke_task: &task,
            invocation_cap: 20,
            existing_names: &existing,
        };
        let mut rng = substream(13, "evolve", 0);
        evolve_offspring(&[&seeds[0]], OperatorKind::Mutation, &env, &mut rng)
    }

    #[test]
    fn happy_path_accepts_after_two_reflections_no_debug() {
        let valid = valid_program_json();
        let meta = ScriptedChat::from_responses(vec![
            meta_response(&valid),
            meta_response(&valid),
            meta_response(&valid),
        ]);
        let attempt = run_attempt(&meta);
        let scaffold = attempt.accepted().expect("accepted");
        assert_eq!(attempt.debug_rounds(), 0);
        assert_eq!(attempt.transcript.len(), 3);
        assert_eq!(
            attempt
                .transcript
                .iter()
                .filter(|e| matches!(e.stage, Stage::Reflection1 | Stage::Reflection2))
                .count(),
            2
        );
        assert_eq!(scaffold.generation, 1);
        assert_eq!(scaffold.origin, Origin::Mutation);
        assert_eq!(scaffold.parent_ids.len(), 1);
        assert!(crate::runtime::validate_program(&scaffold.program, 20).is_empty());
    }

    #[test]
    fn two_invalid_candidates_mean_exactly_two_debug_rounds() {
        let valid = valid_program_json();
        let meta = ScriptedChat::from_responses(vec![
            meta_response("not json at all"),
            meta_response("still not json"),
            meta_response("{\"agents\": \"wrong shape\"}"),
            meta_response("{\"agents\": []}"),
            meta_response(&valid),
        ]);
        let attempt = run_attempt(&meta);
        assert!(attempt.accepted().is_some());
        assert_eq!(attempt.debug_rounds(), 2);
        assert_eq!(attempt.transcript.len(), 5);
        assert_eq!(attempt.smoke_eval_errors.len(), 2);
    }

    #[test]
    fn four_invalid_candidates_reject_after_three_debug_rounds() {
        let meta = ScriptedChat::from_responses(vec![
            meta_response("bad 1"),
            meta_response("bad 2"),
            meta_response("bad 3"),
            meta_response("bad 4"),
            meta_response("bad 5"),
            meta_response("bad 6"),
            meta_response("bad 7"),
        ]);
        let attempt = run_attempt(&meta);
        match &attempt.outcome {
            AttemptOutcome::Rejected { reason, .. } => {
                assert_eq!(*reason, RejectReason::Parse);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        assert_eq!(attempt.debug_rounds(), 3);
        // base + 2 reflections + 3 debug exchanges and no more.
        assert_eq!(attempt.transcript.len(), 6);
        assert_eq!(attempt.smoke_eval_errors.len(), 4);
    }

    #[test]
    fn provider_failure_rejects_with_provider_reason() {
        let meta = ScriptedChat::new(
            ProviderProfile {
                max_retries: 0,
                ..ProviderProfile::mock("scripted", 0)
            },
            vec![Err(crate::providers::ProviderError::Timeout(5))],
        );
        let attempt = run_attempt(&meta);
        assert!(matches!(
            attempt.outcome,
            AttemptOutcome::Rejected {
                reason: RejectReason::Provider,
                ..
            }
        ));
    }

    #[test]
    fn offspring_names_are_deduplicated() {
        let mut taken = BTreeSet::new();
        taken.insert("Offspring".to_string());
        taken.insert("Offspring-2".to_string());
        assert_eq!(dedup_name("Offspring", &taken), "Offspring-3");
        assert_eq!(dedup_name("Fresh", &taken), "Fresh");
        assert_eq!(dedup_name("  ", &taken), "unnamed");
    }

    #[test]
    fn crossover_offspring_has_two_parents() {
        let valid = valid_program_json();
        let meta = ScriptedChat::from_responses(vec![
            meta_response(&valid),
            meta_response(&valid),
            meta_response(&valid),
        ]);
        let seeds = seed_scaffolds();
        let scaffold_provider = DeterministicChat::new(ProviderProfile::mock("scaffold", 41));
        let existing = BTreeSet::new();
        let task = smoke_task();
        let env = EvolveEnv {
            mode: Mode::Blue,
            meta: &meta,
            scaffold_provider: &scaffold_provider,
            benchmark_description: "bench",
            safety_description: "safety",
            elites: vec![],
            smoke_task: &task,
            invocation_cap: 20,
            existing_names: &existing,
        };
        let mut rng = substream(14, "evolve", 0);
        let attempt =
            evolve_offspring(&[&seeds[0], &seeds[1]], OperatorKind::Crossover, &env, &mut rng);
        let scaffold = attempt.accepted().unwrap();
        assert_eq!(scaffold.origin, Origin::Crossover);
        assert_eq!(scaffold.parent_ids.len(), 2);
        assert!(attempt.operator.is_none());
        assert!(scaffold.check_lineage(&[0, 0]).is_ok());
    }
}
