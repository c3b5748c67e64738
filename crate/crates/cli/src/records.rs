//! Per-slot episode CSVs and the aggregate results table. Both `run` and
//! `verify` compute the table from [`EpisodeRow`]s, and every float survives
//! the CSV round trip exactly, so recomputation is byte-identical.

use std::io::Write;
use std::path::Path;

use beamtrack_core::{SlotRecord, SpeedClass};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Columns of a per-slot episode CSV, in order.
pub const EPISODE_COLUMNS: [&str; 13] = [
    "slot",
    "beamset_size",
    "chosen",
    "true_best",
    "chosen_rsrp_db",
    "best_rsrp_db",
    "interp_best",
    "theta1",
    "theta2",
    "ell_h",
    "ell_v",
    "sigma",
    "beamset",
];

/// Columns of the aggregate results CSV, in order.
pub const RESULTS_COLUMNS: [&str; 12] = [
    "policy",
    "variant",
    "speed",
    "speed_kmh",
    "seeds",
    "failed",
    "accuracy_mean",
    "accuracy_std",
    "overhead_mean",
    "overhead_std",
    "rsrp_error_db_mean",
    "rsrp_error_db_std",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub slot: u64,
    pub beamset_size: usize,
    pub chosen: usize,
    pub true_best: usize,
    pub chosen_rsrp_db: f64,
    pub best_rsrp_db: f64,
    pub interp_best: Option<usize>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub ell_h: Option<f64>,
    pub ell_v: Option<f64>,
    pub sigma: Option<f64>,
    /// Requested beams, `;`-separated, in proposal order.
    pub beamset: String,
}

impl From<&SlotRecord> for EpisodeRow {
    fn from(r: &SlotRecord) -> Self {
        let h = r.hyper.as_ref();
        Self {
            slot: r.slot,
            beamset_size: r.proposed.len(),
            chosen: r.chosen,
            true_best: r.true_best,
            chosen_rsrp_db: r.chosen_rsrp_db,
            best_rsrp_db: r.best_rsrp_db,
            interp_best: r.interp_best,
            theta1: h.map(|h| h.time.theta1),
            theta2: h.map(|h| h.time.theta2),
            ell_h: h.map(|h| h.beam.metric.ell_h),
            ell_v: h.map(|h| h.beam.metric.ell_v),
            sigma: h.map(|h| h.noise_std),
            beamset: r
                .proposed
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        }
    }
}

pub fn write_episode_csv(path: &Path, rows: &[EpisodeRow]) -> Result<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_episode_csv(path: &Path) -> Result<Vec<EpisodeRow>> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = r.headers().map_err(csv_err)?.clone();
    let missing: Vec<&str> = EPISODE_COLUMNS
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Artifact(format!(
            "{}: missing column(s) {}",
            path.display(),
            missing.join(", ")
        )));
    }
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

/// Episode-level metrics over the rows from index `warmup` on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMetrics {
    pub accuracy: f64,
    pub overhead: f64,
    pub rsrp_error_db: f64,
}

pub fn metrics_from_rows(
    rows: &[EpisodeRow],
    num_beams: usize,
    warmup: usize,
) -> Result<RowMetrics> {
    if rows.len() <= warmup {
        return Err(CliError::Artifact(format!(
            "{} slots leave nothing after a warmup of {warmup}",
            rows.len()
        )));
    }
    let kept = &rows[warmup..];
    let n = kept.len() as f64;
    let hits = kept.iter().filter(|r| r.chosen == r.true_best).count();
    Ok(RowMetrics {
        accuracy: hits as f64 / n,
        overhead: kept
            .iter()
            .map(|r| r.beamset_size as f64 / num_beams as f64)
            .sum::<f64>()
            / n,
        rsrp_error_db: kept
            .iter()
            .map(|r| r.best_rsrp_db - r.chosen_rsrp_db)
            .sum::<f64>()
            / n,
    })
}

/// Mean and sample standard deviation (`None` below two values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub policy: String,
    pub variant: String,
    pub speed: SpeedClass,
    /// Episodes that completed.
    pub seeds: usize,
    pub failed: usize,
    pub accuracy: Option<Stat>,
    pub overhead: Option<Stat>,
    pub rsrp_error_db: Option<Stat>,
}

impl ResultRow {
    /// Aggregates the completed episodes of one (variant, speed) cell.
    pub fn new(
        policy: &str,
        variant: &str,
        speed: SpeedClass,
        episodes: &[RowMetrics],
        failed: usize,
    ) -> Self {
        let col = |f: fn(&RowMetrics) -> f64| Stat::of(&episodes.iter().map(f).collect::<Vec<_>>());
        Self {
            policy: policy.to_string(),
            variant: variant.to_string(),
            speed,
            seeds: episodes.len(),
            failed,
            accuracy: col(|m| m.accuracy),
            overhead: col(|m| m.overhead),
            rsrp_error_db: col(|m| m.rsrp_error_db),
        }
    }
}

pub fn speed_name(speed: SpeedClass) -> &'static str {
    match speed {
        SpeedClass::Slow => "slow",
        SpeedClass::Medium => "medium",
        SpeedClass::Fast => "fast",
    }
}

/// The results table as CSV bytes: six decimals, empty cells where a
/// statistic is undefined.
pub fn format_results(rows: &[ResultRow]) -> Vec<u8> {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = Vec::new();
    writeln!(out, "{}", RESULTS_COLUMNS.join(",")).unwrap();
    for r in rows {
        let mut cells = vec![
            r.policy.clone(),
            r.variant.clone(),
            speed_name(r.speed).to_string(),
            format!("{}", r.speed.km_per_hour()),
            r.seeds.to_string(),
            r.failed.to_string(),
        ];
        for s in [r.accuracy, r.overhead, r.rsrp_error_db] {
            cells.push(fmt(s.map(|s| s.mean)));
            cells.push(fmt(s.and_then(|s| s.std)));
        }
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    out
}
