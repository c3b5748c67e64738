//! Experiment configuration: a single TOML file. Every field except
//! `horizon`, `seeds` and `policies` has a default; see
//! `configs/example.toml` for the documented defaults.

use std::collections::HashSet;
use std::ops::Range;
use std::path::{Path, PathBuf};

use beamtrack_core::{
    AngleConvention, AngleGrid, ArrayGeometry, BayesOptConfig, BeamGrid, ScenarioDistribution,
    SpeedClass, TrackerPolicy,
};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    BayesOpt,
    Spline,
    SpatialGpr,
    RandomSubset,
    OracleFullSweep,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::BayesOpt => "bayes_opt",
            PolicyKind::Spline => "spline",
            PolicyKind::SpatialGpr => "spatial_gpr",
            PolicyKind::RandomSubset => "random_subset",
            PolicyKind::OracleFullSweep => "oracle_full_sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub m_h: usize,
    pub m_v: usize,
    pub d_h_over_lambda: f64,
    pub d_v_over_lambda: f64,
    pub azimuth_start_deg: f64,
    pub azimuth_step_deg: f64,
    pub n_azimuth: usize,
    pub elevations_deg: Vec<f64>,
    pub convention: AngleConvention,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            m_h: 8,
            m_v: 8,
            d_h_over_lambda: 0.5,
            d_v_over_lambda: 0.5,
            azimuth_start_deg: -56.25,
            azimuth_step_deg: 7.5,
            n_azimuth: 16,
            elevations_deg: vec![0.0, 7.5, 15.0, 22.5],
            convention: AngleConvention::Broadside,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> beamtrack_core::Result<BeamGrid> {
        let geometry = ArrayGeometry::new(
            self.m_h,
            self.m_v,
            self.d_h_over_lambda,
            self.d_v_over_lambda,
        )?;
        let angles = AngleGrid::from_degrees(
            self.azimuth_start_deg,
            self.azimuth_step_deg,
            self.n_azimuth,
            &self.elevations_deg,
            self.convention,
        )?;
        BeamGrid::build(geometry, angles)
    }
}

/// Dominant-path azimuth drift bound per speed class, degrees per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateBounds {
    pub slow: f64,
    pub medium: f64,
    pub fast: f64,
}

impl Default for RateBounds {
    fn default() -> Self {
        Self {
            slow: SpeedClass::Slow.azimuth_rate_bound_deg(),
            medium: SpeedClass::Medium.azimuth_rate_bound_deg(),
            fast: SpeedClass::Fast.azimuth_rate_bound_deg(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub num_paths: usize,
    pub gain_decay: f64,
    pub elevation_rate_ratio: f64,
    pub phase_rate_bound: f64,
    pub noise_std_db: f64,
    pub tx_power: f64,
    pub rate_bound_deg: RateBounds,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        let d = ScenarioDistribution::default();
        Self {
            num_paths: d.num_paths,
            gain_decay: d.gain_decay,
            elevation_rate_ratio: d.elevation_rate_ratio,
            phase_rate_bound: d.phase_rate_bound,
            noise_std_db: d.noise_std_db,
            tx_power: d.tx_power,
            rate_bound_deg: RateBounds::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn distribution(&self, speed: SpeedClass) -> ScenarioDistribution {
        let bound = match speed {
            SpeedClass::Slow => self.rate_bound_deg.slow,
            SpeedClass::Medium => self.rate_bound_deg.medium,
            SpeedClass::Fast => self.rate_bound_deg.fast,
        };
        ScenarioDistribution {
            num_paths: self.num_paths,
            gain_decay: self.gain_decay,
            azimuth_rate_bound_deg: bound,
            elevation_rate_ratio: self.elevation_rate_ratio,
            phase_rate_bound: self.phase_rate_bound,
            noise_std_db: self.noise_std_db,
            tx_power: self.tx_power,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    name: Spanned<String>,
    kind: Spanned<PolicyKind>,
    phi: Option<Spanned<f64>>,
    match_overhead_of: Option<Spanned<String>>,
    bayes_opt: Option<Spanned<BayesOptConfig>>,
}

fn default_parallelism() -> usize {
    4
}

fn default_rolling_window() -> usize {
    20
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

fn default_speeds() -> Spanned<Vec<SpeedClass>> {
    Spanned::new(
        0..0,
        vec![SpeedClass::Slow, SpeedClass::Medium, SpeedClass::Fast],
    )
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    horizon: Spanned<u64>,
    seeds: Spanned<SeedSpec>,
    warmup: Option<Spanned<usize>>,
    #[serde(default = "default_out_dir")]
    out_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    #[serde(default = "default_rolling_window")]
    rolling_window: usize,
    #[serde(default = "default_speeds")]
    speeds: Spanned<Vec<SpeedClass>>,
    grid: Option<Spanned<GridSpec>>,
    scenario: Option<Spanned<ScenarioSpec>>,
    policies: Spanned<Vec<RawPolicy>>,
}

/// How a policy's per-episode parameters are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyPlan {
    Fixed(TrackerPolicy),
    /// Random subset whose `φ` equals the realized mean overhead of the
    /// referenced variant on the same (speed, seed) episode.
    MatchedRandom {
        reference: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSpec {
    pub name: String,
    pub kind: PolicyKind,
    pub plan: PolicyPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub warmup: usize,
    pub out_dir: PathBuf,
    pub parallelism: usize,
    pub rolling_window: usize,
    pub speeds: Vec<SpeedClass>,
    pub grid: GridSpec,
    pub scenario: ScenarioSpec,
    pub variants: Vec<VariantSpec>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses and validates; `path` only labels diagnostics.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let fail = |span: Option<Range<usize>>, message: String| CliError::Config {
            path: path.to_path_buf(),
            line: span.map(|s| line_of(text, s.start)),
            message,
        };
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| fail(e.span(), e.message().trim().to_string()))?;

        if *raw.horizon.get_ref() == 0 {
            return Err(fail(
                Some(raw.horizon.span()),
                "horizon must be at least 1".into(),
            ));
        }
        let seeds = match raw.seeds.get_ref() {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, count } => (0..*count).map(|i| start + i).collect(),
        };
        if seeds.is_empty() {
            return Err(fail(
                Some(raw.seeds.span()),
                "at least one seed is required".into(),
            ));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(fail(
                Some(raw.seeds.span()),
                format!("seed {dup} is listed twice"),
            ));
        }
        let warmup = raw.warmup.as_ref().map_or(0, |w| *w.get_ref());
        if warmup as u64 >= *raw.horizon.get_ref() {
            return Err(fail(
                raw.warmup.map(|w| w.span()),
                "warmup must be smaller than the horizon".into(),
            ));
        }
        if raw.parallelism == 0 || raw.rolling_window == 0 {
            return Err(fail(
                None,
                "parallelism and rolling_window must be positive".into(),
            ));
        }
        let speeds = raw.speeds.get_ref().clone();
        let speed_span = Some(raw.speeds.span()).filter(|s| !s.is_empty());
        if speeds.is_empty() {
            return Err(fail(
                speed_span,
                "at least one speed class is required".into(),
            ));
        }
        if speeds
            .iter()
            .enumerate()
            .any(|(i, s)| speeds[..i].contains(s))
        {
            return Err(fail(speed_span, "speed classes must be distinct".into()));
        }
        let grid_span = raw.grid.as_ref().map(|g| g.span());
        let grid = raw.grid.map(Spanned::into_inner).unwrap_or_default();
        grid.build()
            .map_err(|e| fail(grid_span, format!("grid: {e}")))?;
        let scenario_span = raw.scenario.as_ref().map(|s| s.span());
        let scenario = raw.scenario.map(Spanned::into_inner).unwrap_or_default();
        for &speed in &speeds {
            scenario
                .distribution(speed)
                .validate()
                .map_err(|e| fail(scenario_span.clone(), format!("scenario: {e}")))?;
        }

        let raw_policies = raw.policies.into_inner();
        if raw_policies.is_empty() {
            return Err(fail(None, "at least one policy is required".into()));
        }
        let names: Vec<&str> = raw_policies
            .iter()
            .map(|p| p.name.get_ref().as_str())
            .collect();
        let mut variants = Vec::with_capacity(raw_policies.len());
        for (i, p) in raw_policies.iter().enumerate() {
            let name = p.name.get_ref().clone();
            let at_name = Some(p.name.span());
            if name.is_empty()
                || !name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
            {
                return Err(fail(
                    at_name,
                    format!("policy name `{name}` must be non-empty and use only [A-Za-z0-9_.-]"),
                ));
            }
            if names[..i].contains(&name.as_str()) {
                return Err(fail(at_name, format!("policy name `{name}` is used twice")));
            }
            let kind = *p.kind.get_ref();
            if let Some(b) = &p.bayes_opt {
                if kind != PolicyKind::BayesOpt {
                    return Err(fail(
                        Some(b.span()),
                        format!("policy `{name}`: [bayes_opt] settings need kind = \"bayes_opt\""),
                    ));
                }
            }
            if let Some(m) = &p.match_overhead_of {
                if kind != PolicyKind::RandomSubset {
                    return Err(fail(
                        Some(m.span()),
                        format!(
                            "policy `{name}`: match_overhead_of needs kind = \"random_subset\""
                        ),
                    ));
                }
                if p.phi.is_some() {
                    return Err(fail(
                        Some(m.span()),
                        format!("policy `{name}`: give either phi or match_overhead_of"),
                    ));
                }
                let target = m.get_ref();
                let Some(reference) = names.iter().position(|n| n == target) else {
                    return Err(fail(
                        Some(m.span()),
                        format!("policy `{name}`: no policy named `{target}`"),
                    ));
                };
                if raw_policies[reference].match_overhead_of.is_some() || reference == i {
                    return Err(fail(
                        Some(m.span()),
                        format!("policy `{name}`: `{target}` cannot itself be overhead-matched"),
                    ));
                }
                variants.push(VariantSpec {
                    name,
                    kind,
                    plan: PolicyPlan::MatchedRandom { reference },
                });
                continue;
            }
            let phi = |what: &str| -> Result<f64> {
                match &p.phi {
                    Some(v) => Ok(*v.get_ref()),
                    None => Err(fail(
                        at_name.clone(),
                        format!("policy `{name}`: {what} needs phi"),
                    )),
                }
            };
            let policy = match kind {
                PolicyKind::BayesOpt => TrackerPolicy::BayesOpt(
                    p.bayes_opt
                        .as_ref()
                        .map(|b| b.get_ref().clone())
                        .unwrap_or_default(),
                ),
                PolicyKind::Spline => TrackerPolicy::Spline {
                    phi: phi("spline")?,
                },
                PolicyKind::SpatialGpr => TrackerPolicy::SpatialGpr {
                    phi: phi("spatial_gpr")?,
                },
                PolicyKind::RandomSubset => TrackerPolicy::RandomSubset {
                    phi: phi("random_subset")?,
                },
                PolicyKind::OracleFullSweep => TrackerPolicy::OracleFullSweep,
            };
            if p.phi.is_some() && matches!(kind, PolicyKind::BayesOpt | PolicyKind::OracleFullSweep)
            {
                return Err(fail(
                    p.phi.as_ref().map(|v| v.span()),
                    format!("policy `{name}`: phi does not apply to {}", kind.as_str()),
                ));
            }
            if let Err(e) = policy.validate() {
                let span = p
                    .phi
                    .as_ref()
                    .map(|v| v.span())
                    .or(p.bayes_opt.as_ref().map(|b| b.span()))
                    .or(at_name);
                return Err(fail(span, format!("policy `{name}`: {e}")));
            }
            variants.push(VariantSpec {
                name,
                kind,
                plan: PolicyPlan::Fixed(policy),
            });
        }

        Ok(Self {
            horizon: raw.horizon.into_inner(),
            seeds,
            warmup,
            out_dir: raw.out_dir,
            parallelism: raw.parallelism,
            rolling_window: raw.rolling_window,
            speeds,
            grid,
            scenario,
            variants,
        })
    }
}

/// 1-based line of byte offset `offset`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}
