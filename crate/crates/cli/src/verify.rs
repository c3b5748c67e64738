//! Recomputes a run's aggregate table from its per-slot CSVs.

use std::path::Path;

use crate::error::{CliError, Result};
use crate::records::{
    format_results, metrics_from_rows, read_episode_csv, ResultRow, EPISODE_COLUMNS,
    RESULTS_COLUMNS,
};
use crate::run::{sha256_hex, EpisodeStatus, Manifest, CONFIG_FILE, RESULTS_FILE};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub episodes_checked: usize,
    pub rows: usize,
}

/// Checks that `results.csv` is byte-identical to the table rebuilt from the
/// episode CSVs listed in the manifest, and that the stored config matches
/// its recorded hash.
pub fn verify_run(run_dir: &Path) -> Result<VerifyReport> {
    let manifest = Manifest::load(run_dir)?;
    if manifest.episode_columns != EPISODE_COLUMNS || manifest.results_columns != RESULTS_COLUMNS {
        return Err(CliError::Verify(
            "manifest column sets differ from this version's".into(),
        ));
    }
    let config_path = run_dir.join(CONFIG_FILE);
    let config = std::fs::read(&config_path).map_err(|e| CliError::io(&config_path, e))?;
    if sha256_hex(&config) != manifest.config_sha256 {
        return Err(CliError::Verify(format!(
            "{} does not match the recorded hash",
            config_path.display()
        )));
    }

    let mut table = Vec::new();
    let mut checked = 0;
    for variant in &manifest.variants {
        for &speed in &manifest.speeds {
            let mut done = Vec::new();
            let mut failed = 0;
            for e in manifest
                .episodes
                .iter()
                .filter(|e| e.variant == variant.name && e.speed == speed)
            {
                match (&e.status, &e.file) {
                    (EpisodeStatus::Ok, Some(file)) => {
                        let rows = read_episode_csv(&run_dir.join(file))?;
                        if rows.len() as u64 != manifest.horizon {
                            return Err(CliError::Verify(format!(
                                "{file}: {} slots, expected {}",
                                rows.len(),
                                manifest.horizon
                            )));
                        }
                        done.push(metrics_from_rows(
                            &rows,
                            manifest.num_beams,
                            manifest.warmup,
                        )?);
                        checked += 1;
                    }
                    (EpisodeStatus::Ok, None) => {
                        return Err(CliError::Verify(format!(
                            "completed episode {}/seed {} has no file",
                            e.variant, e.seed
                        )))
                    }
                    (EpisodeStatus::Failed, _) => failed += 1,
                }
            }
            if done.len() + failed != manifest.seeds.len() {
                return Err(CliError::Verify(format!(
                    "variant {} has {} episodes for a speed class, expected {}",
                    variant.name,
                    done.len() + failed,
                    manifest.seeds.len()
                )));
            }
            table.push(ResultRow::new(
                &variant.kind,
                &variant.name,
                speed,
                &done,
                failed,
            ));
        }
    }

    let expected = format_results(&table);
    let results_path = run_dir.join(RESULTS_FILE);
    let actual = std::fs::read(&results_path).map_err(|e| CliError::io(&results_path, e))?;
    if actual != expected {
        let first_diff = String::from_utf8_lossy(&expected)
            .lines()
            .zip(String::from_utf8_lossy(&actual).lines())
            .position(|(a, b)| a != b)
            .map(|i| format!("first differing line {}", i + 1))
            .unwrap_or_else(|| "line counts differ".into());
        return Err(CliError::Verify(format!(
            "{} differs from recomputation ({first_diff})",
            results_path.display()
        )));
    }
    Ok(VerifyReport {
        episodes_checked: checked,
        rows: table.len(),
    })
}
