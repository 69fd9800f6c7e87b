//! Prompt rendering for the meta-agent pipeline. Templates ship as text
//! assets with `<< SLOT >>` markers.

use super::corpus::MutationOperator;
use crate::providers::{ChatRequest, Message, SchemaField};
use crate::types::{Scaffold, ScoreCard};

pub const BASE_PROMPT: &str = include_str!("../../assets/prompts/base_prompt.txt");
pub const REFLECTION_1: &str = include_str!("../../assets/prompts/reflection_1.txt");
pub const REFLECTION_2: &str = include_str!("../../assets/prompts/reflection_2.txt");
pub const DEBUGGING: &str = include_str!("../../assets/prompts/debugging.txt");
pub const MUTATION_BASE: &str = include_str!("../../assets/prompts/mutation_base.txt");
pub const CROSSOVER_BASE: &str = include_str!("../../assets/prompts/crossover_base.txt");
pub const WORKFLOW_SCHEMA: &str = include_str!("../../assets/prompts/workflow_schema.txt");
pub const WRONG_EXAMPLES: &str = include_str!("../../assets/prompts/wrong_examples.txt");
pub const CORRECT_EXAMPLES: &str = include_str!("../../assets/prompts/correct_examples.txt");
pub const OUTPUT_EXAMPLE: &str = include_str!("../../assets/prompts/output_example.txt");

/// Response schema for base and mutation/crossover exchanges.
pub fn base_schema() -> Vec<SchemaField> {
    vec![
        SchemaField::new(
            "thought",
            "Your reasoning about the next interesting system to try and its design",
        ),
        SchemaField::new("name", "The name of the new agent architecture"),
        SchemaField::new("code", "The complete workflow program as a JSON object"),
    ]
}

/// Reflection rounds add a leading "reflection" field.
pub fn reflection_schema() -> Vec<SchemaField> {
    let mut schema = vec![SchemaField::new(
        "reflection",
        "Your reflection on the architecture's interestingness, mistakes, and improvements",
    )];
    schema.extend(base_schema());
    schema
}

/// Debug rounds add a "debug_thought" field.
pub fn debug_schema() -> Vec<SchemaField> {
    let mut schema = base_schema();
    schema.push(SchemaField::new(
        "debug_thought",
        "Your thinking while debugging the failing program",
    ));
    schema
}

/// One elite's summary line for the archive slot.
pub fn elite_summary(scaffold: &Scaffold) -> String {
    let fitness = match scaffold.scores.validation.as_ref() {
        Some(card) => score_line(card),
        None => "unscored".to_string(),
    };
    serde_json::json!({
        "name": scaffold.name,
        "thought": scaffold.thought,
        "fitness": fitness,
    })
    .to_string()
}

fn score_line(card: &ScoreCard) -> String {
    let mut line = format!(
        "capability median {:.3} [{:.3}, {:.3}]; safety median {:.3} [{:.3}, {:.3}]",
        card.capability.median,
        card.capability.ci_low,
        card.capability.ci_high,
        card.safety.median,
        card.safety.ci_low,
        card.safety.ci_high,
    );
    if let Some(h) = card.helpfulness.as_ref() {
        line.push_str(&format!("; helpfulness median {:.3}", h.median));
    }
    line
}

/// Renders the system message: the base prompt with benchmark, safety,
/// schema, archive, and example slots filled.
pub fn render_base_system(
    benchmark_description: &str,
    safety_description: &str,
    elites: &[&Scaffold],
) -> String {
    let archive = if elites.is_empty() {
        "(the archive is empty)".to_string()
    } else {
        elites
            .iter()
            .map(|s| elite_summary(s))
            .collect::<Vec<_>>()
            .join("\n")
    };
    BASE_PROMPT
        .replace("<< BENCHMARK DESCRIPTION >>", benchmark_description)
        .replace("<< SAFETY DESCRIPTION >>", safety_description)
        .replace("<< WORKFLOW SCHEMA >>", WORKFLOW_SCHEMA.trim_end())
        .replace("<< ARCHIVE >>", &archive)
        .replace("<< EXAMPLE >>", OUTPUT_EXAMPLE.trim_end())
        .replace("<< WRONG IMPLEMENTATION EXAMPLES >>", WRONG_EXAMPLES.trim_end())
        .replace("<< CORRECT IMPLEMENTATION EXAMPLES >>", CORRECT_EXAMPLES.trim_end())
}

/// Renders the mutation request: parent slots, the sampled operator, the
/// schema description, and the answer-format instruction.
pub fn render_mutation_prompt(parent: &Scaffold, operator: &MutationOperator) -> ChatRequest {
    let content = MUTATION_BASE
        .replace("<< SYSTEM NAME >>", &parent.name)
        .replace("<< SYSTEM THOUGHT PROCESS >>", &parent.thought)
        .replace("<< SYSTEM CODE >>", &parent.canonical_program())
        .replace("<< SAMPLED MUTATION OPERATOR >>", &operator.text)
        .replace("<< WORKFLOW SCHEMA >>", WORKFLOW_SCHEMA.trim_end());
    ChatRequest {
        messages: vec![Message::user(content)],
        temperature: 0.7,
        response_schema: base_schema(),
    }
}

/// Renders the crossover request with both parent slots.
pub fn render_crossover_prompt(first: &Scaffold, second: &Scaffold) -> ChatRequest {
    let content = CROSSOVER_BASE
        .replace("<< SYSTEM 1 NAME >>", &first.name)
        .replace("<< SYSTEM 1 THOUGHT PROCESS >>", &first.thought)
        .replace("<< SYSTEM 1 CODE >>", &first.canonical_program())
        .replace("<< SYSTEM 2 NAME >>", &second.name)
        .replace("<< SYSTEM 2 THOUGHT PROCESS >>", &second.thought)
        .replace("<< SYSTEM 2 CODE >>", &second.canonical_program())
        .replace("<< WORKFLOW SCHEMA >>", WORKFLOW_SCHEMA.trim_end());
    ChatRequest {
        messages: vec![Message::user(content)],
        temperature: 0.7,
        response_schema: base_schema(),
    }
}

/// Renders the first or second reflection request.
pub fn render_reflection(round: u8) -> ChatRequest {
    let content = match round {
        1 => REFLECTION_1.replace("<< EXAMPLE >>", OUTPUT_EXAMPLE.trim_end()),
        _ => REFLECTION_2.to_string(),
    };
    ChatRequest {
        messages: vec![Message::user(content)],
        temperature: 0.7,
        response_schema: reflection_schema(),
    }
}

/// Renders a debugging request carrying the evaluation error text.
pub fn render_debug(error: &str) -> ChatRequest {
    ChatRequest {
        messages: vec![Message::user(DEBUGGING.replace("<< ERROR >>", error))],
        temperature: 0.7,
        response_schema: debug_schema(),
    }
}
