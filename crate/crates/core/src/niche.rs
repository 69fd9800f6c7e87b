//! Descriptor generation and dynamic agglomerative clustering.
//!
//! The population is re-clustered from scratch every generation: bottom-up
//! agglomerative merging with average linkage over cosine distance, stopping
//! once the closest pair of clusters is farther apart than the threshold.
//! Average linkage is recomputed from the original pairwise matrix in a fixed
//! member order, so a reference implementation that does the same arrives at
//! bit-identical linkage values.

use crate::par;
use crate::providers::{EmbedModel, ProviderError};
use crate::types::{Descriptor, Scaffold, ScaffoldId, DESCRIPTOR_DIMENSIONS};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    /// Scaffold id to cluster index; indices are 0..k-1 with no gaps.
    pub assignments: BTreeMap<ScaffoldId, usize>,
    pub k: usize,
    pub threshold_used: f64,
}

impl ClusterPartition {
    /// Members of each cluster, index-aligned with cluster labels.
    pub fn clusters(&self) -> Vec<Vec<&ScaffoldId>> {
        let mut out: Vec<Vec<&ScaffoldId>> = vec![Vec::new(); self.k];
        for (id, &label) in &self.assignments {
            out[label].push(id);
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum NicheError {
    #[error("cannot cluster an empty population")]
    EmptyInput,
    #[error("descriptor for {0} is not unit-normalized")]
    NotNormalized(ScaffoldId),
    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),
}

/// Embeds a scaffold's name and canonical program into its niching
/// descriptor.
pub fn describe(scaffold: &Scaffold, embedder: &dyn EmbedModel) -> Result<Descriptor, NicheError> {
    let text = format!("{}\n{}", scaffold.name, scaffold.canonical_program());
    Ok(embedder.embed(&text, DESCRIPTOR_DIMENSIONS)?)
}

/// Pairwise cosine distance matrix (row-major `n * n`).
pub fn distance_matrix(descriptors: &[Descriptor]) -> Vec<f64> {
    let n = descriptors.len();
    let rows = par::map_indexed(descriptors, |i, a| {
        let mut row = vec![0.0; n];
        for (j, b) in descriptors.iter().enumerate() {
            if i != j {
                row[j] = a.cosine_distance(b);
            }
        }
        row
    });
    rows.into_iter().flatten().collect()
}

/// Average linkage between two clusters, recomputed from the original
/// pairwise matrix. Members must be in ascending index order; summation
/// order is part of the definition.
fn average_linkage(matrix: &[f64], n: usize, a: &[usize], b: &[usize]) -> f64 {
    let mut sum = 0.0;
    for &i in a {
        for &j in b {
            sum += matrix[i * n + j];
        }
    }
    sum / (a.len() as f64 * b.len() as f64)
}

/// Clusters points by label: bottom-up merging while the minimum average
/// linkage is at most `threshold`. Ties break toward the lowest cluster-index
/// pair. Returns per-point labels (0..k-1, ordered by smallest member index)
/// and k.
pub fn cluster_labels(
    descriptors: &[Descriptor],
    threshold: f64,
) -> Result<(Vec<usize>, usize), NicheError> {
    let n = descriptors.len();
    if n == 0 {
        return Err(NicheError::EmptyInput);
    }
    let matrix = distance_matrix(descriptors);
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let d = average_linkage(&matrix, n, &clusters[i], &clusters[j]);
                let better = match best {
                    None => true,
                    Some((bd, _, _)) => d < bd,
                };
                if better {
                    best = Some((d, i, j));
                }
            }
        }
        let (d, i, j) = best.expect("at least one pair");
        if d > threshold {
            break;
        }
        let absorbed = clusters.remove(j);
        let target = &mut clusters[i];
        target.extend(absorbed);
        target.sort_unstable();
    }

    clusters.sort_by_key(|members| members[0]);
    let mut labels = vec![0usize; n];
    for (label, members) in clusters.iter().enumerate() {
        for &member in members {
            labels[member] = label;
        }
    }
    Ok((labels, clusters.len()))
}

/// Clusters the population and returns the id-keyed partition.
pub fn cluster(
    points: &[(ScaffoldId, Descriptor)],
    threshold: f64,
) -> Result<ClusterPartition, NicheError> {
    for (id, descriptor) in points {
        if !descriptor.normalized || (descriptor.norm() - 1.0).abs() > 1e-6 {
            return Err(NicheError::NotNormalized(id.clone()));
        }
    }
    let descriptors: Vec<Descriptor> = points.iter().map(|(_, d)| d.clone()).collect();
    let (labels, k) = cluster_labels(&descriptors, threshold)?;
    let assignments = points
        .iter()
        .zip(&labels)
        .map(|((id, _), &label)| (id.clone(), label))
        .collect();
    Ok(ClusterPartition {
        assignments,
        k,
        threshold_used: threshold,
    })
}
