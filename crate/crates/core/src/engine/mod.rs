//! The generational engine: seeds the population, evaluates, clusters,
//! extracts elites, breeds offspring, persists the archive every generation,
//! and provides test evaluation, best-scaffold selection, front export, and
//! text reporting.

mod export;
mod report;
mod run;

pub use export::export_front;
pub use report::report;
pub use run::{
    evaluate_test, resume, resume_with_providers, run, run_with_providers, select_best,
    GenerationReport, Providers, RunOptions, ARCHIVE_FILE, TRANSCRIPTS_FILE,
};

use crate::archive::ArchiveError;
use crate::config::ConfigDiagnostic;
use crate::eval::{BenchmarkError, ConstitutionError, EvalError};
use crate::moea::MoeaError;
use crate::niche::NicheError;
use crate::types::ScaffoldId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration is invalid:\n{}", format_diagnostics(.0))]
    Config(Vec<ConfigDiagnostic>),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Constitution(#[from] ConstitutionError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Niche(#[from] NicheError),
    #[error(transparent)]
    Moea(#[from] MoeaError),
    #[error("unknown scaffold id {0}")]
    UnknownId(ScaffoldId),
    #[error("every scored scaffold is reward-hack flagged; no best scaffold exists")]
    AllFlagged,
    #[error("no scored scaffolds to select from")]
    NothingScored,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("archive has no generation records")]
    NoGenerations,
}

fn format_diagnostics(diagnostics: &[ConfigDiagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| format!("  - {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}
