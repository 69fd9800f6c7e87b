//! CSV export of the objective-space front at a given generation, sufficient
//! to redraw capability/safety front plots with external tooling.

use super::EngineError;
use crate::archive::Archive;
use crate::moea::{objective_vector, pareto_front};
use crate::types::{Mode, ScaffoldId};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

fn csv_field(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Writes one row per member of the cumulative population at `generation`:
/// `(scaffold_id, name, generation, cluster, objective_1, objective_2,
/// on_global_front, on_cluster_front)`. Returns the row count.
///
/// Generation 0 is the seed population with no clustering; offspring born in
/// the requested generation carry a blank cluster (the population is
/// re-clustered at the start of the *next* generation).
pub fn export_front(
    archive: &Archive,
    generation: u32,
    mode: Mode,
    path: &Path,
) -> Result<usize, EngineError> {
    if generation > archive.config.generations {
        return Err(EngineError::NoGenerations);
    }

    // Population at `generation`: seeds plus offspring from records <= g.
    let mut population: BTreeSet<ScaffoldId> = archive
        .scaffolds()
        .iter()
        .filter(|s| s.generation == 0 && s.parent_ids.is_empty())
        .map(|s| s.id.clone())
        .collect();
    for record in &archive.generation_records {
        if record.generation <= generation {
            population.extend(record.offspring_ids.iter().cloned());
        }
    }

    let record = archive
        .generation_records
        .iter()
        .find(|r| r.generation == generation);
    let assignments: BTreeMap<&ScaffoldId, usize> = record
        .map(|r| r.cluster_assignments.iter().map(|(id, &c)| (id, c)).collect())
        .unwrap_or_default();
    let elite_ids: BTreeSet<&ScaffoldId> = record
        .map(|r| r.elite_ids.iter().collect())
        .unwrap_or_default();

    // Rows in archive (append) order, scored members only.
    let mut rows = Vec::new();
    for scaffold in archive.scaffolds() {
        if !population.contains(&scaffold.id) {
            continue;
        }
        let Some(card) = scaffold.scores.validation.as_ref() else {
            continue;
        };
        let vector = objective_vector(card, mode)?;
        rows.push((scaffold, vector));
    }
    if rows.is_empty() {
        return Err(EngineError::NothingScored);
    }

    let points: Vec<(ScaffoldId, crate::moea::ObjectiveVector)> = rows
        .iter()
        .map(|(s, v)| (s.id.clone(), v.clone()))
        .collect();
    let global_front: BTreeSet<ScaffoldId> = pareto_front(&points)?.into_iter().collect();

    let mut out = String::from(
        "scaffold_id,name,generation,cluster,objective_1,objective_2,on_global_front,on_cluster_front\n",
    );
    for (scaffold, vector) in &rows {
        let cluster = assignments
            .get(&scaffold.id)
            .map(|c| c.to_string())
            .unwrap_or_default();
        let objective_2 = if vector.len() > 1 {
            format!("{:.6}", vector.0[1])
        } else {
            String::new()
        };
        let on_cluster_front = if generation == 0 {
            // Seed population: one implicit cluster, so the cluster front is
            // the global front.
            global_front.contains(&scaffold.id)
        } else {
            elite_ids.contains(&scaffold.id)
        };
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{},{}\n",
            csv_field(scaffold.id.as_str()),
            csv_field(&scaffold.name),
            scaffold.generation,
            cluster,
            vector.0[0],
            objective_2,
            u8::from(global_front.contains(&scaffold.id)),
            u8::from(on_cluster_front),
        ));
    }

    std::fs::write(path, &out).map_err(|source| EngineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(rows.len())
}
