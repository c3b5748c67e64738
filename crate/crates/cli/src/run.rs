//! Batch execution: every (speed, seed) episode runs all configured
//! variants on one shared scenario, across a bounded worker pool. Files are
//! laid out as
//!
//! ```text
//! <out>/config.toml       verbatim copy of the config
//! <out>/manifest.json     hashes, versions, seeds, columns, episode status
//! <out>/results.csv       aggregate table
//! <out>/episodes/<variant>__<speed>__seed<seed>.csv
//! <out>/snapshots/<variant>__<speed>__seed<seed>.json
//! ```

use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};

use beamtrack_core::channel::random_scenario;
use beamtrack_core::rng::{stream, Purpose};
use beamtrack_core::tracker::Snapshot;
use beamtrack_core::{run_episode, SpeedClass, TrackerPolicy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, PolicyPlan};
use crate::error::{CliError, Result};
use crate::records::{
    format_results, metrics_from_rows, speed_name, write_episode_csv, EpisodeRow, ResultRow,
    RowMetrics, EPISODE_COLUMNS, RESULTS_COLUMNS,
};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's `out_dir`.
    pub out_dir: Option<PathBuf>,
    /// Added to every configured seed.
    pub seed_offset: u64,
    /// Overrides the config's `parallelism`.
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub variant: String,
    pub speed: SpeedClass,
    pub seed: u64,
    pub status: EpisodeStatus,
    /// Per-slot CSV relative to the run directory (completed episodes only).
    pub file: Option<String>,
    pub snapshots: Option<String>,
    /// The policy as run, with any matched sampling fraction resolved.
    pub policy: Option<TrackerPolicy>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantEntry {
    pub name: String,
    pub kind: String,
    pub match_overhead_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub cli_version: String,
    pub core_version: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub seed_offset: u64,
    pub horizon: u64,
    pub warmup: usize,
    pub rolling_window: usize,
    pub num_beams: usize,
    pub n_azimuth: usize,
    pub n_elevation: usize,
    pub speeds: Vec<SpeedClass>,
    pub variants: Vec<VariantEntry>,
    pub episode_columns: Vec<String>,
    pub results_columns: Vec<String>,
    pub episodes: Vec<EpisodeEntry>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.clone(),
            source,
        })?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(CliError::Artifact(format!(
                "{}: schema version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
                path.display(),
                m.schema_version
            )));
        }
        Ok(m)
    }
}

/// One completed episode, kept in memory for callers that analyse runs.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub variant: usize,
    pub speed: SpeedClass,
    pub seed: u64,
    pub outcome: std::result::Result<EpisodeData, String>,
}

#[derive(Debug, Clone)]
pub struct EpisodeData {
    pub policy: TrackerPolicy,
    pub rows: Vec<EpisodeRow>,
    pub metrics: RowMetrics,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub table: Vec<ResultRow>,
    pub episodes: Vec<EpisodeResult>,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.episodes.iter().filter(|e| e.outcome.is_err()).count()
    }
}

pub fn episode_stem(variant: &str, speed: SpeedClass, seed: u64) -> String {
    format!("{variant}__{}__seed{seed}", speed_name(speed))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Runs every configured episode and writes all artifacts. Episode failures
/// are recorded in the manifest and counted in the report, not returned as
/// errors.
pub fn run_experiments(
    cfg: &ExperimentConfig,
    config_text: &str,
    opts: &RunOptions,
) -> Result<RunReport> {
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let parallelism = opts.parallelism.unwrap_or(cfg.parallelism);
    if parallelism == 0 {
        return Err(CliError::Config {
            path: PathBuf::from("--parallelism"),
            line: None,
            message: "parallelism must be positive".into(),
        });
    }
    let grid = cfg.grid.build()?;
    let seeds: Vec<u64> = cfg
        .seeds
        .iter()
        .map(|s| s.wrapping_add(opts.seed_offset))
        .collect();

    let tasks: Vec<(SpeedClass, u64)> = cfg
        .speeds
        .iter()
        .flat_map(|&speed| seeds.iter().map(move |&seed| (speed, seed)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| CliError::Artifact(format!("cannot start worker pool: {e}")))?;
    let per_task: Vec<Vec<EpisodeResult>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(speed, seed)| run_task(cfg, &grid, speed, seed))
            .collect()
    });
    write_run(cfg, config_text, opts, &grid, &out_dir, seeds, per_task)
}

/// Single-writer reduction: episode files, the table and the manifest, all
/// in config order regardless of completion order.
fn write_run(
    cfg: &ExperimentConfig,
    config_text: &str,
    opts: &RunOptions,
    grid: &beamtrack_core::BeamGrid,
    out_dir: &Path,
    seeds: Vec<u64>,
    per_task: Vec<Vec<EpisodeResult>>,
) -> Result<RunReport> {
    for sub in ["episodes", "snapshots"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }

    let mut episodes = Vec::new();
    let mut entries = Vec::new();
    for results in per_task {
        for r in results {
            let name = &cfg.variants[r.variant].name;
            let stem = episode_stem(name, r.speed, r.seed);
            let entry = match &r.outcome {
                Ok(data) => {
                    let file = format!("episodes/{stem}.csv");
                    write_episode_csv(&out_dir.join(&file), &data.rows)?;
                    let snapshots = if data.snapshots.is_empty() {
                        None
                    } else {
                        let file = format!("snapshots/{stem}.json");
                        let path = out_dir.join(&file);
                        let json = serde_json::to_vec(&data.snapshots).map_err(|source| {
                            CliError::Json {
                                path: path.clone(),
                                source,
                            }
                        })?;
                        std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
                        Some(file)
                    };
                    EpisodeEntry {
                        variant: name.clone(),
                        speed: r.speed,
                        seed: r.seed,
                        status: EpisodeStatus::Ok,
                        file: Some(file),
                        snapshots,
                        policy: Some(data.policy.clone()),
                        error: None,
                    }
                }
                Err(msg) => EpisodeEntry {
                    variant: name.clone(),
                    speed: r.speed,
                    seed: r.seed,
                    status: EpisodeStatus::Failed,
                    file: None,
                    snapshots: None,
                    policy: None,
                    error: Some(msg.clone()),
                },
            };
            entries.push(entry);
            episodes.push(r);
        }
    }
    entries.sort_by(|a, b| {
        let va = cfg.variants.iter().position(|v| v.name == a.variant);
        let vb = cfg.variants.iter().position(|v| v.name == b.variant);
        let sa = cfg.speeds.iter().position(|s| *s == a.speed);
        let sb = cfg.speeds.iter().position(|s| *s == b.speed);
        (va, sa, a.seed).cmp(&(vb, sb, b.seed))
    });

    let mut table = Vec::new();
    for (vi, variant) in cfg.variants.iter().enumerate() {
        for &speed in &cfg.speeds {
            let cell: Vec<&EpisodeResult> = episodes
                .iter()
                .filter(|e| e.variant == vi && e.speed == speed)
                .collect();
            let done: Vec<RowMetrics> = cell
                .iter()
                .filter_map(|e| e.outcome.as_ref().ok().map(|d| d.metrics))
                .collect();
            let failed = cell.len() - done.len();
            table.push(ResultRow::new(
                variant.kind.as_str(),
                &variant.name,
                speed,
                &done,
                failed,
            ));
        }
    }

    let results_path = out_dir.join(RESULTS_FILE);
    std::fs::write(&results_path, format_results(&table))
        .map_err(|e| CliError::io(&results_path, e))?;
    let config_path = out_dir.join(CONFIG_FILE);
    std::fs::write(&config_path, config_text).map_err(|e| CliError::io(&config_path, e))?;

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        cli_version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: beamtrack_core::VERSION.to_string(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        seeds,
        seed_offset: opts.seed_offset,
        horizon: cfg.horizon,
        warmup: cfg.warmup,
        rolling_window: cfg.rolling_window,
        num_beams: grid.len(),
        n_azimuth: grid.shape().n_azimuth,
        n_elevation: grid.shape().n_elevation,
        speeds: cfg.speeds.clone(),
        variants: cfg
            .variants
            .iter()
            .map(|v| VariantEntry {
                name: v.name.clone(),
                kind: v.kind.as_str().to_string(),
                match_overhead_of: match v.plan {
                    PolicyPlan::MatchedRandom { reference } => {
                        Some(cfg.variants[reference].name.clone())
                    }
                    PolicyPlan::Fixed(_) => None,
                },
            })
            .collect(),
        episode_columns: EPISODE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        results_columns: RESULTS_COLUMNS.iter().map(|s| s.to_string()).collect(),
        episodes: entries,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|source| CliError::Json {
        path: manifest_path.clone(),
        source,
    })?;
    json.push(b'\n');
    std::fs::write(&manifest_path, json).map_err(|e| CliError::io(&manifest_path, e))?;

    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        table,
        episodes,
        manifest,
    })
}

/// All variants on one (speed, seed) scenario. Overhead-matched variants run
/// after their reference and take its realized mean overhead (all slots) as
/// their sampling fraction.
fn run_task(
    cfg: &ExperimentConfig,
    grid: &beamtrack_core::BeamGrid,
    speed: SpeedClass,
    seed: u64,
) -> Vec<EpisodeResult> {
    let dist = cfg.scenario.distribution(speed);
    let scenario = random_scenario(&dist, grid, seed, &mut stream(seed, Purpose::Scenario, 0));
    // Overhead-matched variants run after every variant they could reference.
    let mut order: Vec<usize> = (0..cfg.variants.len()).collect();
    order.sort_by_key(|&i| matches!(cfg.variants[i].plan, PolicyPlan::MatchedRandom { .. }));
    let mut slots: Vec<Option<std::result::Result<EpisodeData, String>>> =
        vec![None; cfg.variants.len()];
    for i in order {
        let policy = match &cfg.variants[i].plan {
            PolicyPlan::Fixed(p) => Ok(p.clone()),
            PolicyPlan::MatchedRandom { reference } => {
                match slots[*reference].as_ref().expect("references run first") {
                    Ok(reference) => {
                        let all = metrics_from_rows(&reference.rows, grid.len(), 0)
                            .expect("horizon is at least 1");
                        Ok(TrackerPolicy::RandomSubset { phi: all.overhead })
                    }
                    Err(_) => Err(format!(
                        "reference variant `{}` failed",
                        cfg.variants[*reference].name
                    )),
                }
            }
        };
        let outcome = policy.and_then(|policy| {
            let scenario = scenario.as_ref().map_err(|e| format!("scenario: {e}"))?;
            let run = std::panic::catch_unwind(AssertUnwindSafe(|| {
                run_episode(&policy, scenario, grid, cfg.horizon, seed)
            }));
            let episode = match run {
                Ok(result) => result.map_err(|e| e.to_string())?,
                Err(panic) => return Err(format!("panicked: {}", panic_message(panic.as_ref()))),
            };
            let rows: Vec<EpisodeRow> = episode
                .metrics
                .per_slot
                .iter()
                .map(EpisodeRow::from)
                .collect();
            let metrics =
                metrics_from_rows(&rows, grid.len(), cfg.warmup).map_err(|e| e.to_string())?;
            Ok(EpisodeData {
                policy,
                rows,
                metrics,
                snapshots: episode.snapshots,
            })
        });
        slots[i] = Some(outcome);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(variant, outcome)| EpisodeResult {
            variant,
            speed,
            seed,
            outcome: outcome.expect("every variant ran"),
        })
        .collect()
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}
