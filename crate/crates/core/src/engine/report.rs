//! Text report: per-generation hypervolume, seed-versus-discovered
//! comparison, best-scaffold selection with hack flags, and the clustering
//! metric disclosure.

use super::run::select_best;
use super::EngineError;
use crate::archive::Archive;
use crate::moea::{hypervolume, objective_vector, ObjectiveVector};
use crate::types::{Mode, Scaffold, ScaffoldId, ScoreCard};
use std::collections::BTreeMap;
use std::fmt::Write;

fn population_hv(mode: Mode, vectors: &[ObjectiveVector]) -> Result<f64, EngineError> {
    if vectors.is_empty() {
        return Ok(0.0);
    }
    match mode {
        Mode::Capable => Ok(vectors
            .iter()
            .map(|v| v.0[0])
            .fold(f64::NEG_INFINITY, f64::max)),
        _ => Ok(hypervolume(vectors, &ObjectiveVector(vec![0.0, 0.0]))?),
    }
}

fn measurement_line(card: &ScoreCard) -> String {
    let mut line = format!(
        "capability {:.3} [{:.3}, {:.3}], safety {:.3} [{:.3}, {:.3}]",
        card.capability.median,
        card.capability.ci_low,
        card.capability.ci_high,
        card.safety.median,
        card.safety.ci_low,
        card.safety.ci_high,
    );
    if let Some(h) = card.helpfulness.as_ref() {
        write!(line, ", helpfulness {:.3} [{:.3}, {:.3}]", h.median, h.ci_low, h.ci_high).unwrap();
    }
    line
}

/// Renders the run report. Deterministic: derived solely from the archive.
pub fn report(archive: &Archive) -> Result<String, EngineError> {
    if archive.generation_records.is_empty() {
        return Err(EngineError::NoGenerations);
    }
    let config = &archive.config;
    let mode = config.mode;
    let mut out = String::new();

    writeln!(out, "agentbreeder run report").unwrap();
    writeln!(out, "=======================").unwrap();
    writeln!(out, "mode: {mode}").unwrap();
    writeln!(
        out,
        "capability benchmark: {} | safety benchmark: {}{}",
        config.capability_benchmark.name,
        config.safety_benchmark.name,
        config
            .helpfulness_benchmark
            .as_ref()
            .map(|b| format!(" | helpfulness benchmark: {}", b.name))
            .unwrap_or_default(),
    )
    .unwrap();
    writeln!(
        out,
        "clustering: agglomerative, average linkage, cosine distance (1 - dot product), threshold {:.3}",
        config.cluster_distance_threshold
    )
    .unwrap();
    match mode {
        Mode::Capable => writeln!(
            out,
            "indicator: best capability (single objective); reference 0.0"
        )
        .unwrap(),
        _ => writeln!(
            out,
            "hypervolume reference point: (0.0, 0.0) in the mode's maximization space"
        )
        .unwrap(),
    }
    if archive.truncated {
        writeln!(out, "NOTE: run stopped early on budget; archive is truncated").unwrap();
    }
    writeln!(out).unwrap();

    writeln!(out, "per-generation indicator (cumulative scored population, validation scores)").unwrap();
    writeln!(
        out,
        "  {:>4} {:>11} {:>9} {:>7} {:>9} {:>9} {:>12}",
        "gen", "population", "clusters", "elites", "accepted", "rejected", "indicator"
    )
    .unwrap();
    for record in &archive.generation_records {
        let clusters = record
            .cluster_assignments
            .values()
            .copied()
            .max()
            .map(|m| m + 1)
            .unwrap_or(0);
        writeln!(
            out,
            "  {:>4} {:>11} {:>9} {:>7} {:>9} {:>9} {:>12.6}",
            record.generation,
            record.population_size,
            clusters,
            record.elite_ids.len(),
            record.offspring_ids.len(),
            record.rejected_offspring,
            record.hv_value,
        )
        .unwrap();
    }
    writeln!(out).unwrap();

    // Seed front versus the full discovered population, Table-style.
    let seed_vectors: Vec<ObjectiveVector> = archive
        .scaffolds()
        .iter()
        .filter(|s| s.generation == 0)
        .filter_map(|s| s.scores.validation.as_ref())
        .map(|card| objective_vector(card, mode))
        .collect::<Result<_, _>>()?;
    let all_vectors: Vec<ObjectiveVector> = archive
        .scaffolds()
        .iter()
        .filter_map(|s| s.scores.validation.as_ref())
        .map(|card| objective_vector(card, mode))
        .collect::<Result<_, _>>()?;
    writeln!(out, "indicator comparison (validation scores)").unwrap();
    writeln!(
        out,
        "  benchmark: {} | seed scaffolds: {:.6} | seed + discovered: {:.6}",
        config.capability_benchmark.name,
        population_hv(mode, &seed_vectors)?,
        population_hv(mode, &all_vectors)?,
    )
    .unwrap();
    writeln!(out).unwrap();

    // Best-scaffold selection: prefer test scores when present.
    let has_test = archive.scaffolds().iter().any(|s| s.scores.test.is_some());
    let context = if has_test { "test" } else { "validation" };
    let scores: BTreeMap<ScaffoldId, ScoreCard> = archive
        .scaffolds()
        .iter()
        .filter_map(|s| {
            let card = if has_test {
                s.scores.test.clone()
            } else {
                s.scores.validation.clone()
            };
            card.map(|c| (s.id.clone(), c))
        })
        .collect();
    let flags: BTreeMap<ScaffoldId, Option<bool>> = archive
        .scaffolds()
        .iter()
        .map(|s| (s.id.clone(), s.reward_hack_flag))
        .collect();
    let flagged_count = flags.values().filter(|f| **f == Some(true)).count();

    writeln!(out, "best scaffold ({context} scores)").unwrap();
    match select_best(archive, mode, &scores, &flags) {
        Ok(best_id) => {
            let best: &Scaffold = archive.get(&best_id).expect("selected id resolves");
            writeln!(out, "  id: {}", best.id).unwrap();
            writeln!(out, "  name: {}", best.name).unwrap();
            writeln!(out, "  origin: {:?}, generation {}", best.origin, best.generation).unwrap();
            writeln!(out, "  {}", measurement_line(&scores[&best_id])).unwrap();
        }
        Err(EngineError::AllFlagged) => {
            writeln!(out, "  every scored scaffold is reward-hack flagged").unwrap();
        }
        Err(EngineError::NothingScored) => {
            writeln!(out, "  no scored scaffolds").unwrap();
        }
        Err(e) => return Err(e),
    }
    writeln!(out, "  reward-hack flagged scaffolds excluded: {flagged_count}").unwrap();

    Ok(out)
}
