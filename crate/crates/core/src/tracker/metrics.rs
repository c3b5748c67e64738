use serde::{Deserialize, Serialize};

use super::SlotRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Fraction of slots whose chosen beam is the true best beam.
    pub accuracy: f64,
    /// Mean `|B_t| / |Γ|`.
    pub overhead: f64,
    /// Mean true-RSRP gap between the best and the chosen beam, dB.
    pub rsrp_error_db: f64,
    pub per_slot: Vec<SlotRecord>,
}

/// Aggregates the records from index `warmup` on.
pub fn compute_metrics(
    records: &[SlotRecord],
    num_beams: usize,
    warmup: usize,
) -> Result<EpisodeMetrics> {
    if records.len() <= warmup {
        return Err(Error::InvalidParameter(format!(
            "{} records leave nothing after a warmup of {warmup}",
            records.len()
        )));
    }
    if num_beams == 0 {
        return Err(Error::InvalidParameter("grid has no beams".into()));
    }
    let kept = &records[warmup..];
    let n = kept.len() as f64;
    let hits = kept.iter().filter(|r| r.chosen == r.true_best).count();
    let overhead = kept
        .iter()
        .map(|r| r.proposed.len() as f64 / num_beams as f64)
        .sum::<f64>()
        / n;
    let rsrp_error_db = kept
        .iter()
        .map(|r| r.best_rsrp_db - r.chosen_rsrp_db)
        .sum::<f64>()
        / n;
    Ok(EpisodeMetrics {
        accuracy: hits as f64 / n,
        overhead,
        rsrp_error_db,
        per_slot: kept.to_vec(),
    })
}
