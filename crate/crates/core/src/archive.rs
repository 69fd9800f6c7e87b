//! The cumulative population archive and its JSON-lines persistence.
//!
//! File layout: one header line (schema version, truncation flag, config
//! snapshot), then one line per scaffold, then one line per generation
//! record. The archive is append-only and rewritten atomically at every
//! generation boundary, so a crashed run resumes from the last boundary.

use crate::config::RunConfig;
use crate::types::{Scaffold, ScaffoldId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const ARCHIVE_SCHEMA: &str = "agentbreeder-archive/1";

/// Per-generation bookkeeping: offspring Q_g, elites E_g, the clustering,
/// the hypervolume of the scored population, and N_g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    pub offspring_ids: Vec<ScaffoldId>,
    pub elite_ids: Vec<ScaffoldId>,
    pub cluster_assignments: BTreeMap<ScaffoldId, usize>,
    pub hv_value: f64,
    pub population_size: u32,
    pub rejected_offspring: u32,
    pub tokens_used: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema: String,
    truncated: bool,
    config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Scaffold(Scaffold),
    Generation(GenerationRecord),
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("duplicate scaffold id {0}")]
    DuplicateId(ScaffoldId),
    #[error("parent {parent} of scaffold {child} is not in the archive")]
    DanglingParent { child: ScaffoldId, parent: ScaffoldId },
    #[error("lineage violation for {id}: {source}")]
    Lineage {
        id: ScaffoldId,
        source: crate::types::LineageError,
    },
    #[error("record references unknown scaffold {0}")]
    UnknownScaffold(ScaffoldId),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("archive parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("archive file is empty")]
    Empty,
    #[error("unsupported archive schema {found:?}, expected {ARCHIVE_SCHEMA:?}")]
    Schema { found: String },
    #[error("scaffold {0} not found")]
    NotFound(ScaffoldId),
}

/// The cumulative population P_g with per-generation records.
#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub config: RunConfig,
    pub truncated: bool,
    scaffolds: Vec<Scaffold>,
    index: BTreeMap<ScaffoldId, usize>,
    pub generation_records: Vec<GenerationRecord>,
}

impl Archive {
    pub fn new(config: RunConfig) -> Self {
        Archive {
            config,
            truncated: false,
            scaffolds: Vec::new(),
            index: BTreeMap::new(),
            generation_records: Vec::new(),
        }
    }

    pub fn scaffolds(&self) -> &[Scaffold] {
        &self.scaffolds
    }

    pub fn len(&self) -> usize {
        self.scaffolds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scaffolds.is_empty()
    }

    pub fn contains(&self, id: &ScaffoldId) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &ScaffoldId) -> Option<&Scaffold> {
        self.index.get(id).map(|&i| &self.scaffolds[i])
    }

    /// Appends a scaffold after checking id uniqueness, parent resolution,
    /// and lineage shape.
    pub fn append(&mut self, scaffold: Scaffold) -> Result<(), ArchiveError> {
        if self.index.contains_key(&scaffold.id) {
            return Err(ArchiveError::DuplicateId(scaffold.id));
        }
        let mut parent_generations = Vec::with_capacity(scaffold.parent_ids.len());
        for parent in &scaffold.parent_ids {
            match self.get(parent) {
                Some(resolved) => parent_generations.push(resolved.generation),
                None => {
                    return Err(ArchiveError::DanglingParent {
                        child: scaffold.id,
                        parent: parent.clone(),
                    })
                }
            }
        }
        scaffold
            .check_lineage(&parent_generations)
            .map_err(|source| ArchiveError::Lineage {
                id: scaffold.id.clone(),
                source,
            })?;
        self.index.insert(scaffold.id.clone(), self.scaffolds.len());
        self.scaffolds.push(scaffold);
        Ok(())
    }

    /// In-place update of one scaffold's mutable state (scores, descriptor,
    /// flags). Single-writer by construction: requires `&mut self`.
    pub fn modify<F: FnOnce(&mut Scaffold)>(
        &mut self,
        id: &ScaffoldId,
        update: F,
    ) -> Result<(), ArchiveError> {
        match self.index.get(id) {
            Some(&i) => {
                update(&mut self.scaffolds[i]);
                Ok(())
            }
            None => Err(ArchiveError::NotFound(id.clone())),
        }
    }

    /// Appends a generation record after checking that every referenced id
    /// resolves.
    pub fn push_record(&mut self, record: GenerationRecord) -> Result<(), ArchiveError> {
        for id in record
            .offspring_ids
            .iter()
            .chain(&record.elite_ids)
            .chain(record.cluster_assignments.keys())
        {
            if !self.contains(id) {
                return Err(ArchiveError::UnknownScaffold(id.clone()));
            }
        }
        self.generation_records.push(record);
        Ok(())
    }

    /// Names currently in use, for offspring deduplication.
    pub fn names(&self) -> std::collections::BTreeSet<String> {
        self.scaffolds.iter().map(|s| s.name.clone()).collect()
    }

    /// Serializes the archive to its JSON-lines form.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            schema: ARCHIVE_SCHEMA.to_string(),
            truncated: self.truncated,
            config: self.config.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for scaffold in &self.scaffolds {
            out.push_str(
                &serde_json::to_string(&Line::Scaffold(scaffold.clone()))
                    .expect("scaffold serializes"),
            );
            out.push('\n');
        }
        for record in &self.generation_records {
            out.push_str(
                &serde_json::to_string(&Line::Generation(record.clone()))
                    .expect("record serializes"),
            );
            out.push('\n');
        }
        out
    }

    /// Atomically writes the archive: temp file in the target directory,
    /// then rename.
    pub fn save(&self, path: &Path) -> Result<(), ArchiveError> {
        let io_err = |source| ArchiveError::Io {
            path: path.display().to_string(),
            source,
        };
        let directory = path.parent().unwrap_or_else(|| Path::new("."));
        std::fs::create_dir_all(directory).map_err(io_err)?;
        let temp = directory.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("archive")
        ));
        std::fs::write(&temp, self.to_jsonl()).map_err(io_err)?;
        std::fs::rename(&temp, path).map_err(io_err)?;
        Ok(())
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ArchiveError> {
        let mut lines = text.lines().enumerate();
        let (_, header_line) = lines.next().ok_or(ArchiveError::Empty)?;
        let header: Header =
            serde_json::from_str(header_line).map_err(|e| ArchiveError::Parse {
                line: 1,
                message: e.to_string(),
            })?;
        if header.schema != ARCHIVE_SCHEMA {
            return Err(ArchiveError::Schema {
                found: header.schema,
            });
        }
        let mut archive = Archive::new(header.config);
        archive.truncated = header.truncated;
        for (index, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(line).map_err(|e| ArchiveError::Parse {
                line: index + 1,
                message: e.to_string(),
            })?;
            match parsed {
                Line::Scaffold(scaffold) => archive.append(scaffold)?,
                Line::Generation(record) => archive.push_record(record)?,
            }
        }
        Ok(archive)
    }

    pub fn load(path: &Path) -> Result<Self, ArchiveError> {
        let text = std::fs::read_to_string(path).map_err(|source| ArchiveError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Archive::from_jsonl(&text)
    }
}
