//! Core domain types: modes, measurements, score cards, descriptors, and the
//! scaffold genome itself.

use crate::rngutil::stable_hash;
use crate::runtime::WorkflowProgram;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Optimization mode of a run.
///
/// * `Blue` maximizes capability and safety.
/// * `Red` maximizes capability and inverted safety (1 - f_S).
/// * `Capable` maximizes capability only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Blue,
    Red,
    Capable,
}

impl Mode {
    /// Number of optimization objectives in this mode.
    pub fn objective_count(self) -> usize {
        match self {
            Mode::Capable => 1,
            Mode::Blue | Mode::Red => 2,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Blue => write!(f, "blue"),
            Mode::Red => write!(f, "red"),
            Mode::Capable => write!(f, "capable"),
        }
    }
}

/// Scoring metric behind a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    TokenF1,
}

/// A benchmark measurement: median with a bootstrap confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: u32,
    pub metric: Metric,
}

impl Measurement {
    /// Checks `0 <= ci_low <= median <= ci_high <= 1`.
    pub fn is_valid(&self) -> bool {
        0.0 <= self.ci_low
            && self.ci_low <= self.median
            && self.median <= self.ci_high
            && self.ci_high <= 1.0
            && self.n_samples > 0
    }
}

/// Capability / safety / helpfulness measurements of one scaffold in one
/// evaluation context. Red mode stores the raw safety value; inversion
/// happens when the objective vector is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub capability: Measurement,
    pub safety: Measurement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helpfulness: Option<Measurement>,
}

/// Validation and test scores are kept under distinct keys so validation
/// results can never leak into test reporting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoresByContext {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ScoreCard>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<ScoreCard>,
}

/// Evaluation context selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalContext {
    Validation,
    Test,
}

/// The niching descriptor: a 12-dimensional text embedding of the scaffold's
/// name and program.
pub const DESCRIPTOR_DIMENSIONS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub vector: Vec<f64>,
    pub normalized: bool,
}

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("descriptor must have exactly {DESCRIPTOR_DIMENSIONS} dimensions, got {0}")]
    Dimensions(usize),
    #[error("descriptor norm is zero")]
    ZeroNorm,
}

impl Descriptor {
    /// Builds a unit-normalized descriptor; errors on wrong dimension count
    /// or a zero vector.
    pub fn normalized(mut vector: Vec<f64>) -> Result<Self, DescriptorError> {
        if vector.len() != DESCRIPTOR_DIMENSIONS {
            return Err(DescriptorError::Dimensions(vector.len()));
        }
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 0.0 {
            return Err(DescriptorError::ZeroNorm);
        }
        for v in &mut vector {
            *v /= norm;
        }
        Ok(Descriptor {
            vector,
            normalized: true,
        })
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Descriptor) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Cosine distance `1 - a.b` (both sides unit-normalized).
    pub fn cosine_distance(&self, other: &Descriptor) -> f64 {
        1.0 - self.dot(other)
    }
}

/// How a scaffold came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Mutation,
    Crossover,
}

/// Content-addressed scaffold identifier: a hash of the name and canonical
/// program serialization plus a short suffix to disambiguate identical
/// content.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScaffoldId(pub String);

impl ScaffoldId {
    pub fn derive(name: &str, canonical_program: &str, suffix: &str) -> Self {
        let h = stable_hash(&[name.as_bytes(), canonical_program.as_bytes()]);
        ScaffoldId(format!("{:012x}-{}", h & 0xffff_ffff_ffff, suffix))
    }

    /// The disambiguation suffix after the content hash.
    pub fn suffix(&self) -> &str {
        self.0.rsplit('-').next().unwrap_or("")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ScaffoldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The genome: identity, lineage, a validated workflow program, and scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaffold {
    pub id: ScaffoldId,
    pub name: String,
    pub thought: String,
    pub program: WorkflowProgram,
    pub generation: u32,
    pub parent_ids: Vec<ScaffoldId>,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<Descriptor>,
    #[serde(default)]
    pub scores: ScoresByContext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_hack_flag: Option<bool>,
}

#[derive(Debug, Error)]
pub enum LineageError {
    #[error("seed scaffolds must have no parents and generation 0")]
    SeedShape,
    #[error("mutation offspring must have exactly 1 parent, got {0}")]
    MutationParents(usize),
    #[error("crossover offspring must have exactly 2 distinct parents")]
    CrossoverParents,
    #[error("generation must be 1 + max parent generation ({expected}), got {actual}")]
    Generation { expected: u32, actual: u32 },
}

impl Scaffold {
    /// Canonical serialization of the program, used for content addressing
    /// and descriptors.
    pub fn canonical_program(&self) -> String {
        self.program.canonical_json()
    }

    /// Checks the origin/parent/generation consistency rules. Parent
    /// generations are supplied by the caller (the archive resolves them).
    pub fn check_lineage(&self, parent_generations: &[u32]) -> Result<(), LineageError> {
        match self.origin {
            Origin::Seed => {
                if !self.parent_ids.is_empty() || self.generation != 0 {
                    return Err(LineageError::SeedShape);
                }
            }
            Origin::Mutation => {
                if self.parent_ids.len() != 1 {
                    return Err(LineageError::MutationParents(self.parent_ids.len()));
                }
            }
            Origin::Crossover => {
                if self.parent_ids.len() != 2 || self.parent_ids[0] == self.parent_ids[1] {
                    return Err(LineageError::CrossoverParents);
                }
            }
        }
        if self.origin != Origin::Seed {
            let expected = 1 + parent_generations.iter().copied().max().unwrap_or(0);
            if self.generation != expected {
                return Err(LineageError::Generation {
                    expected,
                    actual: self.generation,
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_requires_twelve_dims() {
        assert!(Descriptor::normalized(vec![1.0; 11]).is_err());
        let d = Descriptor::normalized(vec![2.0; 12]).unwrap();
        assert!((d.norm() - 1.0).abs() < 1e-9);
        assert!(d.normalized);
    }

    #[test]
    fn id_derivation_is_content_addressed() {
        let a = ScaffoldId::derive("x", "{}", "0000");
        let b = ScaffoldId::derive("x", "{}", "0000");
        let c = ScaffoldId::derive("y", "{}", "0000");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.suffix(), "0000");
    }

    #[test]
    fn measurement_validity() {
        let m = Measurement {
            median: 0.5,
            ci_low: 0.4,
            ci_high: 0.6,
            n_samples: 10,
            metric: Metric::Accuracy,
        };
        assert!(m.is_valid());
        let bad = Measurement { ci_low: 0.7, ..m };
        assert!(!bad.is_valid());
    }
}
