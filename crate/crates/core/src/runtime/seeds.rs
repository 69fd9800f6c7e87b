//! The seven hand-designed seed scaffolds, shipped as fixture files.

use super::program::ScaffoldFile;
use crate::types::{Origin, Scaffold, ScaffoldId, ScoresByContext};

const SEED_FILES: [&str; 7] = [
    include_str!("../../assets/seeds/chain_of_thought.json"),
    include_str!("../../assets/seeds/self_consistency_cot.json"),
    include_str!("../../assets/seeds/self_refinement.json"),
    include_str!("../../assets/seeds/debate.json"),
    include_str!("../../assets/seeds/step_back_abstraction.json"),
    include_str!("../../assets/seeds/quality_diversity.json"),
    include_str!("../../assets/seeds/role_assignment.json"),
];

/// Test asset: a discovered-scaffold translation, not part of the seed
/// population.
pub const EXPERT_PANEL_FIXTURE: &str =
    include_str!("../../assets/fixtures/optimized_hierarchical_expert_panel.json");

/// Seed ids carry a fixed suffix so they are stable across runs.
const SEED_SUFFIX: &str = "0000";

fn scaffold_from_file(file: ScaffoldFile) -> Scaffold {
    let program = file.program();
    let id = ScaffoldId::derive(&file.name, &program.canonical_json(), SEED_SUFFIX);
    Scaffold {
        id,
        name: file.name,
        thought: file.thought,
        program,
        generation: 0,
        parent_ids: Vec::new(),
        origin: Origin::Seed,
        descriptor: None,
        scores: ScoresByContext::default(),
        reward_hack_flag: None,
    }
}

/// Returns the 7 seed scaffolds, all distinct, all passing validation.
pub fn seed_scaffolds() -> Vec<Scaffold> {
    SEED_FILES
        .iter()
        .map(|text| scaffold_from_file(ScaffoldFile::parse(text).expect("seed fixture parses")))
        .collect()
}

/// Loads the expert-panel fixture as a scaffold (test asset).
pub fn expert_panel_scaffold() -> Scaffold {
    scaffold_from_file(ScaffoldFile::parse(EXPERT_PANEL_FIXTURE).expect("fixture parses"))
}
