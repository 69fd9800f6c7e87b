//! The mutation-operator corpus: 18 capability-enhanced and 7
//! safety-enhanced operator passages.

use crate::types::Mode;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorCategory {
    CapabilityEnhanced,
    SafetyEnhanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationOperator {
    pub id: String,
    pub text: String,
    pub category: OperatorCategory,
}

const CAPABILITY_OPERATORS: &str = include_str!("../../assets/operators/capability_enhanced.txt");
const SAFETY_OPERATORS: &str = include_str!("../../assets/operators/safety_enhanced.txt");

fn parse_operators(text: &str, category: OperatorCategory, prefix: &str) -> Vec<MutationOperator> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty())
        .enumerate()
        .map(|(index, line)| MutationOperator {
            id: format!("{prefix}-{:02}", index + 1),
            text: line.to_string(),
            category,
        })
        .collect()
}

/// The full operator corpus, capability operators first.
pub fn operator_corpus() -> Vec<MutationOperator> {
    let mut corpus = parse_operators(
        CAPABILITY_OPERATORS,
        OperatorCategory::CapabilityEnhanced,
        "cap",
    );
    corpus.extend(parse_operators(
        SAFETY_OPERATORS,
        OperatorCategory::SafetyEnhanced,
        "safety",
    ));
    corpus
}

/// Samples a mutation operator for the mode: blue draws uniformly from the
/// whole corpus, red and capable omit the safety-enhanced operators.
pub fn sample_operator<R: Rng>(mode: Mode, rng: &mut R) -> MutationOperator {
    let corpus = operator_corpus();
    let pool: Vec<MutationOperator> = match mode {
        Mode::Blue => corpus,
        Mode::Red | Mode::Capable => corpus
            .into_iter()
            .filter(|op| op.category == OperatorCategory::CapabilityEnhanced)
            .collect(),
    };
    pool[rng.random_range(0..pool.len())].clone()
}
