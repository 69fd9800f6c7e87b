//! Benchmark bindings and JSON-lines task loading.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    MultipleChoice,
    FreeForm,
    SafetyPrompts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Accuracy,
    TokenF1,
    ConstitutionJudge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkBinding {
    pub name: String,
    pub path: PathBuf,
    pub kind: BenchmarkKind,
    pub scorer: Scorer,
    /// Fed into the meta-agent prompt's benchmark-description slot.
    pub description: String,
}

impl BenchmarkBinding {
    /// SafetyPrompts pairs only with ConstitutionJudge, and vice versa.
    pub fn kind_scorer_consistent(&self) -> bool {
        (self.kind == BenchmarkKind::SafetyPrompts) == (self.scorer == Scorer::ConstitutionJudge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskItem {
    pub id: String,
    pub question: String,
    /// Empty for safety prompts.
    #[serde(rename = "answer")]
    pub gold_answer: String,
    pub required_answer_format: String,
    pub split: Split,
}

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate item id {id:?} in {path} at line {line}")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("benchmark {0} has an empty {1:?} split")]
    EmptySplit(String, Split),
}

/// Loads a JSON-lines benchmark file. Every line carries
/// `(id, question, answer, required_answer_format, split)`.
pub fn load_benchmark(binding: &BenchmarkBinding) -> Result<Vec<TaskItem>, BenchmarkError> {
    load_benchmark_file(&binding.path)
}

pub fn load_benchmark_file(path: &Path) -> Result<Vec<TaskItem>, BenchmarkError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| BenchmarkError::Io {
        path: display.clone(),
        source,
    })?;
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: TaskItem =
            serde_json::from_str(line).map_err(|e| BenchmarkError::Parse {
                path: display.clone(),
                line: index + 1,
                message: e.to_string(),
            })?;
        if !seen.insert(item.id.clone()) {
            return Err(BenchmarkError::DuplicateId {
                path: display,
                line: index + 1,
                id: item.id,
            });
        }
        items.push(item);
    }
    Ok(items)
}

/// A binding together with its loaded items, split apart.
#[derive(Debug, Clone)]
pub struct LoadedBenchmark {
    pub binding: BenchmarkBinding,
    pub validation: Vec<TaskItem>,
    pub test: Vec<TaskItem>,
}

impl LoadedBenchmark {
    pub fn load(binding: &BenchmarkBinding) -> Result<Self, BenchmarkError> {
        let items = load_benchmark(binding)?;
        let (validation, test): (Vec<_>, Vec<_>) = items
            .into_iter()
            .partition(|item| item.split == Split::Validation);
        Ok(LoadedBenchmark {
            binding: binding.clone(),
            validation,
            test,
        })
    }

    pub fn split_items(&self, split: Split) -> &[TaskItem] {
        match split {
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(file, "{line}").unwrap();
        }
        file
    }

    #[test]
    fn loads_three_items() {
        let file = write_lines(&[
            r#"{"id":"a","question":"Q1","answer":"A","required_answer_format":"letter","split":"validation"}"#,
            r#"{"id":"b","question":"Q2","answer":"B","required_answer_format":"letter","split":"validation"}"#,
            r#"{"id":"c","question":"Q3","answer":"C","required_answer_format":"letter","split":"test"}"#,
        ]);
        let items = load_benchmark_file(file.path()).unwrap();
        assert_eq!(items.len(), 3);
        assert_eq!(items[2].split, Split::Test);
    }

    #[test]
    fn duplicate_id_names_the_id() {
        let file = write_lines(&[
            r#"{"id":"dup","question":"Q1","answer":"A","required_answer_format":"f","split":"validation"}"#,
            r#"{"id":"dup","question":"Q2","answer":"B","required_answer_format":"f","split":"test"}"#,
        ]);
        match load_benchmark_file(file.path()) {
            Err(BenchmarkError::DuplicateId { id, line, .. }) => {
                assert_eq!(id, "dup");
                assert_eq!(line, 2);
            }
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn missing_split_is_a_parse_error_with_line() {
        let file = write_lines(&[
            r#"{"id":"a","question":"Q1","answer":"A","required_answer_format":"f","split":"validation"}"#,
            r#"{"id":"b","question":"Q2","answer":"B","required_answer_format":"f"}"#,
        ]);
        match load_benchmark_file(file.path()) {
            Err(BenchmarkError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn kind_scorer_pairing() {
        let mut binding = BenchmarkBinding {
            name: "safety".into(),
            path: "x".into(),
            kind: BenchmarkKind::SafetyPrompts,
            scorer: Scorer::ConstitutionJudge,
            description: String::new(),
        };
        assert!(binding.kind_scorer_consistent());
        binding.scorer = Scorer::Accuracy;
        assert!(!binding.kind_scorer_consistent());
    }
}
