//! Bootstrap confidence intervals over per-item outcome vectors.

use crate::types::{Measurement, Metric};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEntry {
    pub item_id: String,
    pub score: f64,
    /// Set when the item errored at runtime; flagged items score exactly 0.
    #[serde(default)]
    pub error_flag: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutcomeVector {
    pub entries: Vec<OutcomeEntry>,
}

impl OutcomeVector {
    pub fn push(&mut self, item_id: String, score: f64, error_flag: bool) {
        let score = if error_flag { 0.0 } else { score };
        self.entries.push(OutcomeEntry {
            item_id,
            score,
            error_flag,
        });
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Linear-interpolation empirical quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let position = q * (n - 1) as f64;
    let lower = position.floor() as usize;
    let upper = position.ceil() as usize;
    if lower == upper {
        sorted[lower]
    } else {
        let weight = position - lower as f64;
        sorted[lower] * (1.0 - weight) + sorted[upper] * weight
    }
}

/// Bootstrap over the outcome vector: `resamples` resamples with replacement,
/// statistic = mean score per resample. The measurement's median is the
/// median of the resample statistics; the interval is the symmetric pair of
/// empirical quantiles at the requested level.
pub fn bootstrap_ci<R: Rng>(
    outcomes: &OutcomeVector,
    resamples: u32,
    level: f64,
    metric: Metric,
    rng: &mut R,
) -> Measurement {
    assert!(!outcomes.is_empty(), "bootstrap needs at least one outcome");
    assert!((0.0..1.0).contains(&level) && level > 0.0, "level in (0, 1)");
    let scores = outcomes.scores();
    let n = scores.len();
    let mut stats = Vec::with_capacity(resamples as usize);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += scores[rng.random_range(0..n)];
        }
        stats.push(sum / n as f64);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Measurement {
        median: quantile_sorted(&stats, 0.5),
        ci_low: quantile_sorted(&stats, alpha),
        ci_high: quantile_sorted(&stats, 1.0 - alpha),
        n_samples: n as u32,
        metric,
    }
}
