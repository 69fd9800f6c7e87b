//! Multi-objective machinery: dominance, per-cluster Pareto fronts,
//! mode-dependent elite extraction, parent sampling, and the hypervolume
//! indicator.

use crate::niche::ClusterPartition;
use crate::types::{Mode, ScaffoldId, ScoreCard};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Objective values in maximization space: mode transformations (Red's
/// safety inversion) are already applied. Length 1 in Capable mode, 2
/// otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector(pub Vec<f64>);

impl ObjectiveVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum MoeaError {
    #[error("objective vectors have mismatched lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("scorecard is missing the {0} measurement")]
    MissingMeasurement(&'static str),
    #[error("cluster member {0} has no score")]
    UnscoredMember(ScaffoldId),
    #[error("hypervolume requires 2-dimensional vectors, got {0}")]
    HypervolumeDimensions(usize),
    #[error("point {point:?} does not weakly dominate the reference {reference:?}")]
    PointBelowReference { point: Vec<f64>, reference: Vec<f64> },
}

/// Builds the mode-transformed objective vector from a score card.
///
/// Blue: (f_C, f_S). Red: (f_C, 1 - f_S). Capable: (f_C,).
pub fn objective_vector(card: &ScoreCard, mode: Mode) -> Result<ObjectiveVector, MoeaError> {
    let capability = card.capability.median;
    Ok(match mode {
        Mode::Capable => ObjectiveVector(vec![capability]),
        Mode::Blue => ObjectiveVector(vec![capability, card.safety.median]),
        Mode::Red => ObjectiveVector(vec![capability, 1.0 - card.safety.median]),
    })
}

/// True iff `a` is at least as good as `b` on every objective and strictly
/// better on at least one.
pub fn dominates(a: &ObjectiveVector, b: &ObjectiveVector) -> Result<bool, MoeaError> {
    if a.len() != b.len() {
        return Err(MoeaError::LengthMismatch(a.len(), b.len()));
    }
    let mut strict = false;
    for (x, y) in a.0.iter().zip(&b.0) {
        if x < y {
            return Ok(false);
        }
        if x > y {
            strict = true;
        }
    }
    Ok(strict)
}

/// Non-dominated subset of `points`, in input order, ties all retained.
///
/// Uses a sort-and-sweep for 2-D and a max-scan for 1-D rather than pairwise
/// comparison; the exhaustive O(n^2) check is the test-side oracle.
pub fn pareto_front<I: Clone>(points: &[(I, ObjectiveVector)]) -> Result<Vec<I>, MoeaError> {
    if points.is_empty() {
        return Err(MoeaError::EmptyInput);
    }
    let dims = points[0].1.len();
    for (_, v) in points {
        if v.len() != dims {
            return Err(MoeaError::LengthMismatch(dims, v.len()));
        }
    }
    match dims {
        1 => {
            let best = points
                .iter()
                .map(|(_, v)| v.0[0])
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(points
                .iter()
                .filter(|(_, v)| v.0[0] == best)
                .map(|(id, _)| id.clone())
                .collect())
        }
        2 => {
            // Order indices by first objective descending. A point survives
            // iff no strictly-better first objective reaches its second
            // objective, and nothing in its own group exceeds it.
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| {
                points[b].1 .0[0]
                    .partial_cmp(&points[a].1 .0[0])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut survivors = vec![false; points.len()];
            let mut best_earlier = f64::NEG_INFINITY;
            let mut cursor = 0;
            while cursor < order.len() {
                let group_value = points[order[cursor]].1 .0[0];
                let mut group_end = cursor;
                while group_end < order.len() && points[order[group_end]].1 .0[0] == group_value {
                    group_end += 1;
                }
                let group = &order[cursor..group_end];
                let group_max = group
                    .iter()
                    .map(|&i| points[i].1 .0[1])
                    .fold(f64::NEG_INFINITY, f64::max);
                for &i in group {
                    let y = points[i].1 .0[1];
                    if y == group_max && y > best_earlier {
                        survivors[i] = true;
                    }
                }
                best_earlier = best_earlier.max(group_max);
                cursor = group_end;
            }
            Ok(points
                .iter()
                .enumerate()
                .filter(|(i, _)| survivors[*i])
                .map(|(_, (id, _))| id.clone())
                .collect())
        }
        d => {
            // General fallback, not used by any mode but kept total.
            let mut out = Vec::new();
            for (i, (id, v)) in points.iter().enumerate() {
                let dominated = points.iter().enumerate().any(|(j, (_, other))| {
                    j != i && dominates(other, v).unwrap_or(false)
                });
                if !dominated {
                    out.push(id.clone());
                }
            }
            debug_assert!(d > 2);
            Ok(out)
        }
    }
}

/// Per-cluster Pareto fronts and their union, the elite cohort E_g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteSet {
    /// One front per cluster, index-aligned with cluster labels.
    pub fronts: Vec<Vec<ScaffoldId>>,
    /// Flattened union.
    pub union: Vec<ScaffoldId>,
}

impl EliteSet {
    pub fn len(&self) -> usize {
        self.union.len()
    }

    pub fn is_empty(&self) -> bool {
        self.union.is_empty()
    }
}

/// Extracts elites: the Pareto front of every cluster. In Capable mode the
/// vectors are 1-D, so each front reduces to the per-cluster capability
/// argmax (all ties kept).
pub fn elites(
    scores: &BTreeMap<ScaffoldId, ObjectiveVector>,
    partition: &ClusterPartition,
) -> Result<EliteSet, MoeaError> {
    let mut fronts = Vec::with_capacity(partition.k);
    let mut union = Vec::new();
    for members in partition.clusters() {
        let mut points = Vec::with_capacity(members.len());
        for id in members {
            let vector = scores
                .get(id)
                .ok_or_else(|| MoeaError::UnscoredMember(id.clone()))?;
            points.push((id.clone(), vector.clone()));
        }
        if points.is_empty() {
            fronts.push(Vec::new());
            continue;
        }
        let front = pareto_front(&points)?;
        union.extend(front.iter().cloned());
        fronts.push(front);
    }
    Ok(EliteSet { fronts, union })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Mutation,
    Crossover,
}

/// Samples the evolution operator and its parents from the elite cohort.
///
/// Mutation is weighted twice as highly as crossover (P = 2/3 vs 1/3);
/// mutation draws one elite uniformly, crossover two distinct elites without
/// replacement. A singleton elite set forces mutation.
pub fn sample_parents<R: Rng>(
    elites: &EliteSet,
    rng: &mut R,
) -> Result<(OperatorKind, Vec<ScaffoldId>), MoeaError> {
    if elites.is_empty() {
        return Err(MoeaError::EmptyInput);
    }
    let pool = &elites.union;
    let mutation = pool.len() == 1 || rng.random_range(0..3u32) < 2;
    if mutation {
        let pick = rng.random_range(0..pool.len());
        Ok((OperatorKind::Mutation, vec![pool[pick].clone()]))
    } else {
        let first = rng.random_range(0..pool.len());
        let mut second = rng.random_range(0..pool.len() - 1);
        if second >= first {
            second += 1;
        }
        Ok((
            OperatorKind::Crossover,
            vec![pool[first].clone(), pool[second].clone()],
        ))
    }
}

/// Exact 2-D hypervolume of the region weakly dominated by `points` relative
/// to `reference`, by descending-x sweep. Every point must weakly dominate
/// the reference.
pub fn hypervolume(
    points: &[ObjectiveVector],
    reference: &ObjectiveVector,
) -> Result<f64, MoeaError> {
    if reference.len() != 2 {
        return Err(MoeaError::HypervolumeDimensions(reference.len()));
    }
    for point in points {
        if point.len() != 2 {
            return Err(MoeaError::HypervolumeDimensions(point.len()));
        }
        if point.0[0] < reference.0[0] || point.0[1] < reference.0[1] {
            return Err(MoeaError::PointBelowReference {
                point: point.0.clone(),
                reference: reference.0.clone(),
            });
        }
    }
    let mut sorted: Vec<(f64, f64)> = points.iter().map(|p| (p.0[0], p.0[1])).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut area = 0.0;
    let mut covered_y = reference.0[1];
    for (x, y) in sorted {
        if y > covered_y {
            area += (x - reference.0[0]) * (y - covered_y);
            covered_y = y;
        }
    }
    Ok(area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngutil::substream;

    fn ov(values: &[f64]) -> ObjectiveVector {
        ObjectiveVector(values.to_vec())
    }

    fn card(capability: f64, safety: f64) -> ScoreCard {
        let m = |median: f64| crate::types::Measurement {
            median,
            ci_low: median,
            ci_high: median,
            n_samples: 10,
            metric: crate::types::Metric::Accuracy,
        };
        ScoreCard {
            capability: m(capability),
            safety: m(safety),
            helpfulness: None,
        }
    }

    /// Exhaustive O(n^2) dominance oracle.
    fn oracle_front(points: &[(usize, ObjectiveVector)]) -> Vec<usize> {
        points
            .iter()
            .filter(|(_, v)| {
                !points
                    .iter()
                    .any(|(_, other)| dominates(other, v).unwrap())
            })
            .map(|(id, _)| *id)
            .collect()
    }

    #[test]
    fn objective_vectors_by_mode() {
        let c = card(0.8, 0.3);
        assert_eq!(objective_vector(&c, Mode::Blue).unwrap(), ov(&[0.8, 0.3]));
        assert_eq!(objective_vector(&c, Mode::Red).unwrap(), ov(&[0.8, 0.7]));
        assert_eq!(objective_vector(&c, Mode::Capable).unwrap(), ov(&[0.8]));
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&ov(&[0.5, 0.5]), &ov(&[0.4, 0.4])).unwrap());
        assert!(!dominates(&ov(&[0.5, 0.5]), &ov(&[0.5, 0.5])).unwrap());
        assert!(!dominates(&ov(&[0.6, 0.3]), &ov(&[0.3, 0.6])).unwrap());
        assert!(dominates(&ov(&[0.5]), &ov(&[0.4, 0.4])).is_err());
    }

    #[test]
    fn front_keeps_mutually_nondominated_points() {
        // None of these three dominates another, so all stay.
        let points = vec![
            ("a", ov(&[1.0, 0.0])),
            ("b", ov(&[0.0, 1.0])),
            ("c", ov(&[0.4, 0.4])),
        ];
        let front = pareto_front(&points).unwrap();
        assert_eq!(front, vec!["a", "b", "c"]);
    }

    #[test]
    fn front_single_point_and_dominated_pair() {
        let single = vec![("only", ov(&[0.3, 0.3]))];
        assert_eq!(pareto_front(&single).unwrap(), vec!["only"]);

        let pair = vec![("a", ov(&[0.5, 0.5])), ("b", ov(&[0.6, 0.6]))];
        assert_eq!(pareto_front(&pair).unwrap(), vec!["b"]);
    }

    #[test]
    fn front_retains_duplicate_ties() {
        let points = vec![
            (1usize, ov(&[0.5, 0.5])),
            (2, ov(&[0.5, 0.5])),
            (3, ov(&[0.2, 0.2])),
        ];
        let front = pareto_front(&points).unwrap();
        assert_eq!(front, vec![1, 2]);
    }

    #[test]
    fn front_matches_oracle_on_random_instances() {
        for seed in 0..50u64 {
            let mut rng = substream(seed, "front-oracle", 0);
            let n = rng.random_range(1..20);
            let points: Vec<(usize, ObjectiveVector)> = (0..n)
                .map(|i| {
                    (
                        i,
                        ov(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]),
                    )
                })
                .collect();
            let mut fast = pareto_front(&points).unwrap();
            let mut slow = oracle_front(&points);
            fast.sort_unstable();
            slow.sort_unstable();
            assert_eq!(fast, slow, "seed {seed}");
        }
    }

    #[test]
    fn front_is_idempotent() {
        let mut rng = substream(7, "idempotent", 0);
        let points: Vec<(usize, ObjectiveVector)> = (0..32)
            .map(|i| {
                (
                    i,
                    ov(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]),
                )
            })
            .collect();
        let once = pareto_front(&points).unwrap();
        let again_points: Vec<(usize, ObjectiveVector)> = points
            .into_iter()
            .filter(|(i, _)| once.contains(i))
            .collect();
        let twice = pareto_front(&again_points).unwrap();
        assert_eq!(once, twice);
    }

    fn partition_of(ids: &[(&str, usize)], k: usize) -> ClusterPartition {
        ClusterPartition {
            assignments: ids
                .iter()
                .map(|(id, label)| (ScaffoldId(id.to_string()), *label))
                .collect(),
            k,
            threshold_used: 0.7,
        }
    }

    #[test]
    fn elites_per_cluster() {
        let mut scores = BTreeMap::new();
        scores.insert(ScaffoldId("a".into()), ov(&[1.0, 0.0]));
        scores.insert(ScaffoldId("b".into()), ov(&[0.0, 1.0]));
        scores.insert(ScaffoldId("c".into()), ov(&[0.4, 0.4]));
        let single = partition_of(&[("a", 0), ("b", 0), ("c", 0)], 1);
        let elite = elites(&scores, &single).unwrap();
        assert_eq!(elite.union.len(), 3);

        let split = partition_of(&[("a", 0), ("b", 1), ("c", 0)], 2);
        let elite = elites(&scores, &split).unwrap();
        assert!(elite.fronts[1].contains(&ScaffoldId("b".into())));

        let two_singletons = partition_of(&[("a", 0), ("b", 1)], 2);
        let mut pair_scores = scores.clone();
        pair_scores.remove(&ScaffoldId("c".into()));
        let elite = elites(&pair_scores, &two_singletons).unwrap();
        assert_eq!(elite.union.len(), 2);
    }

    #[test]
    fn capable_elites_are_argmax_with_ties() {
        let mut scores = BTreeMap::new();
        scores.insert(ScaffoldId("low".into()), ov(&[0.6]));
        scores.insert(ScaffoldId("hi1".into()), ov(&[0.8]));
        scores.insert(ScaffoldId("hi2".into()), ov(&[0.8]));
        let partition = partition_of(&[("low", 0), ("hi1", 0), ("hi2", 0)], 1);
        let elite = elites(&scores, &partition).unwrap();
        let mut union = elite.union.clone();
        union.sort();
        assert_eq!(
            union,
            vec![ScaffoldId("hi1".into()), ScaffoldId("hi2".into())]
        );
    }

    #[test]
    fn unscored_member_errors() {
        let scores = BTreeMap::new();
        let partition = partition_of(&[("a", 0)], 1);
        assert!(matches!(
            elites(&scores, &partition),
            Err(MoeaError::UnscoredMember(_))
        ));
    }

    #[test]
    fn singleton_elite_set_forces_mutation() {
        let elite = EliteSet {
            fronts: vec![vec![ScaffoldId("only".into())]],
            union: vec![ScaffoldId("only".into())],
        };
        let mut rng = substream(1, "forced", 0);
        for _ in 0..100 {
            let (kind, parents) = sample_parents(&elite, &mut rng).unwrap();
            assert_eq!(kind, OperatorKind::Mutation);
            assert_eq!(parents, vec![ScaffoldId("only".into())]);
        }
    }

    #[test]
    fn crossover_parents_are_distinct() {
        let union: Vec<ScaffoldId> = (0..5).map(|i| ScaffoldId(format!("e{i}"))).collect();
        let elite = EliteSet {
            fronts: vec![union.clone()],
            union,
        };
        let mut rng = substream(2, "distinct", 0);
        for _ in 0..5000 {
            let (kind, parents) = sample_parents(&elite, &mut rng).unwrap();
            if kind == OperatorKind::Crossover {
                assert_ne!(parents[0], parents[1]);
            }
        }
    }

    #[test]
    fn hypervolume_examples() {
        let reference = ov(&[0.0, 0.0]);
        assert_eq!(hypervolume(&[ov(&[1.0, 1.0])], &reference).unwrap(), 1.0);

        // Inclusion-exclusion: 0.5 + 0.5 - 0.25.
        let hv = hypervolume(&[ov(&[0.5, 1.0]), ov(&[1.0, 0.5])], &reference).unwrap();
        assert!((hv - 0.75).abs() < 1e-12);

        let hv = hypervolume(&[ov(&[0.5, 0.5]), ov(&[0.4, 0.4])], &reference).unwrap();
        assert!((hv - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hypervolume_rejects_bad_inputs() {
        let reference = ov(&[0.0, 0.0]);
        assert!(hypervolume(&[ov(&[0.5])], &reference).is_err());
        assert!(matches!(
            hypervolume(&[ov(&[-0.1, 0.5])], &reference),
            Err(MoeaError::PointBelowReference { .. })
        ));
    }

    #[test]
    fn hypervolume_monotone_under_added_points() {
        let reference = ov(&[0.0, 0.0]);
        let mut rng = substream(3, "hv-mono", 0);
        for _ in 0..50 {
            let base: Vec<ObjectiveVector> = (0..6)
                .map(|_| ov(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]))
                .collect();
            let extra = ov(&[rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
            let before = hypervolume(&base, &reference).unwrap();
            let mut extended = base.clone();
            extended.push(extra.clone());
            let after = hypervolume(&extended, &reference).unwrap();
            assert!(after + 1e-12 >= before);
            let dominated = base.iter().any(|p| dominates(p, &extra).unwrap() || p == &extra);
            if !dominated {
                assert!(after > before);
            }
        }
    }
}
