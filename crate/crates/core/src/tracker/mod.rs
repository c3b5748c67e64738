//! The per-slot tracking loop and the policies it compares.
//!
//! Every slot a policy proposes a beamset, the simulator reports noisy RSRP
//! for it, and the beam with the highest reported value (ties to the lowest
//! index) is served. Accuracy and RSRP error are scored on the noiseless
//! channel.

mod interp;
mod metrics;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use interp::{bivariate_spline, spatial_gpr_mean, Interpolant1d};
pub use metrics::{compute_metrics, EpisodeMetrics};

use crate::acquisition::{AcquisitionContext, OverheadPenalty, DEFAULT_MC_SAMPLES};
use crate::beam_grid::BeamGrid;
use crate::channel::{argmax, channel_at, measure, true_rsrp_all_db, ChannelScenario, Observation};
use crate::error::{Error, Result};
use crate::gp::{FitConfig, GpModel, Hyperparameters, PriorMean};
use crate::rng::{stream, Purpose};

/// Noise level assumed by the spatial-only GP baseline, dB.
pub const SPATIAL_GPR_NOISE_STD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackerPolicy {
    BayesOpt(BayesOptConfig),
    /// Regular sub-grid, bivariate spline reconstruction.
    Spline {
        phi: f64,
    },
    /// Regular sub-grid, beam-only GP reconstruction.
    SpatialGpr {
        phi: f64,
    },
    /// `φ·|Γ|` beams uniformly at random, stochastically rounded.
    RandomSubset {
        phi: f64,
    },
    OracleFullSweep,
}

impl TrackerPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            TrackerPolicy::BayesOpt(cfg) => cfg.validate(),
            TrackerPolicy::Spline { phi }
            | TrackerPolicy::SpatialGpr { phi }
            | TrackerPolicy::RandomSubset { phi } => {
                if *phi > 0.0 && *phi <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "sampling fraction {phi} outside (0, 1]"
                    )))
                }
            }
            TrackerPolicy::OracleFullSweep => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrackerPolicy::BayesOpt(_) => "bayes_opt",
            TrackerPolicy::Spline { .. } => "spline",
            TrackerPolicy::SpatialGpr { .. } => "spatial_gpr",
            TrackerPolicy::RandomSubset { .. } => "random_subset",
            TrackerPolicy::OracleFullSweep => "oracle_full_sweep",
        }
    }
}

/// When to refit the GP hyperparameters: after every slot while the buffer
/// holds fewer than `dense_until` points, then every `every` slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefitCadence {
    pub dense_until: usize,
    pub every: u64,
}

impl Default for RefitCadence {
    fn default() -> Self {
        Self {
            dense_until: 64,
            every: 5,
        }
    }
}

impl RefitCadence {
    fn due(&self, buffered: usize, slots_since_fit: u64) -> bool {
        buffered < self.dense_until || slots_since_fit >= self.every
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesOptConfig {
    pub penalty: OverheadPenalty,
    pub mc_samples: usize,
    /// Observation window of the GP.
    pub window: usize,
    /// Starting hyperparameters; `None` uses the cold-start values with the
    /// grid's default index metric.
    pub initial: Option<Hyperparameters>,
    pub fit: FitConfig,
    pub refit: RefitCadence,
    pub prior_mean: PriorMean,
    /// Slots at which acquisition and posterior landscapes are captured.
    pub snapshot_slots: Vec<u64>,
}

impl Default for BayesOptConfig {
    fn default() -> Self {
        Self {
            penalty: OverheadPenalty::low_overhead(),
            mc_samples: DEFAULT_MC_SAMPLES,
            window: 256,
            initial: None,
            fit: FitConfig::default(),
            refit: RefitCadence::default(),
            prior_mean: PriorMean::default(),
            snapshot_slots: Vec::new(),
        }
    }
}

impl BayesOptConfig {
    pub fn high_accuracy() -> Self {
        Self {
            penalty: OverheadPenalty::high_accuracy(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        if self.mc_samples == 0 || self.window == 0 {
            return Err(Error::InvalidParameter(
                "mc_samples and window must be positive".into(),
            ));
        }
        if self.refit.every == 0 {
            return Err(Error::InvalidParameter(
                "refit.every must be positive".into(),
            ));
        }
        if let Some(h) = &self.initial {
            h.validate()?;
        }
        self.fit.validate().map_err(Error::InvalidParameter)
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    /// The requested beamset, in the order the policy produced it.
    pub proposed: Vec<usize>,
    pub measured: Vec<Observation>,
    pub chosen: usize,
    pub true_best: usize,
    /// Noiseless RSRP of the chosen beam.
    pub chosen_rsrp_db: f64,
    /// Noiseless RSRP of the true best beam.
    pub best_rsrp_db: f64,
    /// Best beam of the policy's reconstructed surface, when it builds one.
    pub interp_best: Option<usize>,
    /// GP hyperparameters after this slot's update (Bayesian optimization only).
    pub hyper: Option<Hyperparameters>,
}

/// Landscapes over the whole grid at one slot, before measuring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub slot: u64,
    pub expected_improvement: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    pub true_rsrp_db: Vec<f64>,
    pub sampled: Vec<usize>,
    pub predicted_best: usize,
    pub true_best: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub metrics: EpisodeMetrics,
    pub snapshots: Vec<Snapshot>,
}

/// Runs `horizon` slots. All randomness comes from per-slot streams of
/// `seed`, so the measurement noise on a beam is the same for every policy
/// run with the same seed.
pub fn run_episode(
    policy: &TrackerPolicy,
    scenario: &ChannelScenario,
    grid: &BeamGrid,
    horizon: u64,
    seed: u64,
) -> Result<Episode> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    policy.validate()?;
    scenario.validate()?;
    if scenario.geometry != *grid.geometry() {
        return Err(Error::InvalidParameter(
            "scenario and grid use different arrays".into(),
        ));
    }

    let mut state = PolicyState::new(policy, grid)?;
    let mut records = Vec::with_capacity(horizon as usize);
    let mut snapshots = Vec::new();
    for t in 0..horizon {
        let channel = channel_at(scenario, t);
        let truth = true_rsrp_all_db(&channel, grid)?;
        let true_best = argmax(&truth);

        let proposal = state.propose(t, seed, &truth, true_best)?;
        if let Some(s) = proposal.snapshot {
            snapshots.push(s);
        }
        let measured = measure(
            scenario,
            &channel,
            grid,
            &proposal.beams,
            &mut stream(seed, Purpose::MeasurementNoise, t),
        )?;
        let chosen = best_measured(&measured);
        let (interp_best, hyper) = state.update(t, seed, &measured, proposal.interp_best)?;

        records.push(SlotRecord {
            slot: t,
            proposed: proposal.beams,
            measured,
            chosen,
            true_best,
            chosen_rsrp_db: truth[chosen],
            best_rsrp_db: truth[true_best],
            interp_best,
            hyper,
        });
    }
    Ok(Episode {
        metrics: compute_metrics(&records, grid.len(), 0)?,
        snapshots,
    })
}

/// Highest reported value; ties go to the lowest beam index.
fn best_measured(measured: &[Observation]) -> usize {
    let mut best = &measured[0];
    for o in &measured[1..] {
        if o.rsrp_db > best.rsrp_db || (o.rsrp_db == best.rsrp_db && o.beam < best.beam) {
            best = o;
        }
    }
    best.beam
}

/// The fixed regular sub-grid used by the interpolation baselines: every
/// elevation row, `⌈φH⌉` evenly decimated azimuth columns (at least two when
/// the grid has two). Returns `(columns, beams)`.
pub fn regular_subgrid(grid: &BeamGrid, phi: f64) -> (Vec<usize>, Vec<usize>) {
    let shape = grid.shape();
    let h = shape.n_azimuth;
    let wanted = (phi * h as f64 - 1e-9).ceil().max(1.0) as usize;
    let ncols = wanted.clamp(h.min(2), h);
    let cols: Vec<usize> = (0..ncols).map(|i| i * h / ncols).collect();
    let beams = (0..shape.n_elevation)
        .flat_map(|v| cols.iter().map(move |&c| v * h + c))
        .collect();
    (cols, beams)
}

/// `φN` rounded stochastically so that the expected beamset size is exactly
/// `φN`; never below one beam.
pub fn random_subset<R: Rng + ?Sized>(num_beams: usize, phi: f64, rng: &mut R) -> Vec<usize> {
    let target = phi * num_beams as f64;
    let base = target.floor();
    let extra = usize::from(rng.random::<f64>() < target - base);
    let k = (base as usize + extra).clamp(1, num_beams);
    let mut beams = sample(rng, num_beams, k).into_vec();
    beams.sort_unstable();
    beams
}

struct Proposal {
    beams: Vec<usize>,
    interp_best: Option<usize>,
    snapshot: Option<Snapshot>,
}

enum PolicyState {
    BayesOpt {
        cfg: BayesOptConfig,
        model: GpModel,
        slots_since_fit: u64,
    },
    Spline {
        cols: Vec<usize>,
        beams: Vec<usize>,
        grid: BeamGrid,
    },
    SpatialGpr {
        beams: Vec<usize>,
        grid: BeamGrid,
    },
    RandomSubset {
        phi: f64,
        num_beams: usize,
    },
    Oracle {
        num_beams: usize,
    },
}

impl PolicyState {
    fn new(policy: &TrackerPolicy, grid: &BeamGrid) -> Result<Self> {
        Ok(match policy {
            TrackerPolicy::BayesOpt(cfg) => {
                let hyper = cfg
                    .initial
                    .unwrap_or_else(|| Hyperparameters::initial(grid.default_metric()));
                let model = GpModel::new(hyper, cfg.prior_mean.clone(), grid.shape(), cfg.window)?;
                PolicyState::BayesOpt {
                    cfg: cfg.clone(),
                    model,
                    slots_since_fit: 0,
                }
            }
            TrackerPolicy::Spline { phi } => {
                let (cols, beams) = regular_subgrid(grid, *phi);
                PolicyState::Spline {
                    cols,
                    beams,
                    grid: grid.clone(),
                }
            }
            TrackerPolicy::SpatialGpr { phi } => PolicyState::SpatialGpr {
                beams: regular_subgrid(grid, *phi).1,
                grid: grid.clone(),
            },
            TrackerPolicy::RandomSubset { phi } => PolicyState::RandomSubset {
                phi: *phi,
                num_beams: grid.len(),
            },
            TrackerPolicy::OracleFullSweep => PolicyState::Oracle {
                num_beams: grid.len(),
            },
        })
    }

    fn propose(&self, t: u64, seed: u64, truth: &[f64], true_best: usize) -> Result<Proposal> {
        match self {
            PolicyState::BayesOpt { cfg, model, .. } => {
                let posterior = model.posterior_at_slot(t)?;
                let predicted_best = posterior.mean.argmax().0;
                let ctx = AcquisitionContext::new(posterior, cfg.mc_samples, seed)?;
                let beams = ctx.choose_beamset(&cfg.penalty).beams;
                let snapshot = cfg.snapshot_slots.contains(&t).then(|| Snapshot {
                    slot: t,
                    expected_improvement: (0..ctx.num_beams()).map(|b| ctx.ei_single(b)).collect(),
                    posterior_mean: ctx.posterior().mean.iter().copied().collect(),
                    true_rsrp_db: truth.to_vec(),
                    sampled: beams.clone(),
                    predicted_best,
                    true_best,
                });
                Ok(Proposal {
                    beams,
                    interp_best: Some(predicted_best),
                    snapshot,
                })
            }
            PolicyState::Spline { beams, .. } | PolicyState::SpatialGpr { beams, .. } => {
                Ok(Proposal {
                    beams: beams.clone(),
                    interp_best: None,
                    snapshot: None,
                })
            }
            PolicyState::RandomSubset { phi, num_beams } => Ok(Proposal {
                beams: random_subset(*num_beams, *phi, &mut stream(seed, Purpose::Policy, t)),
                interp_best: None,
                snapshot: None,
            }),
            PolicyState::Oracle { num_beams } => Ok(Proposal {
                beams: (0..*num_beams).collect(),
                interp_best: None,
                snapshot: None,
            }),
        }
    }

    /// Consumes the slot's reports. Returns the reconstructed best beam and,
    /// for Bayesian optimization, the hyperparameters now in force.
    fn update(
        &mut self,
        t: u64,
        seed: u64,
        measured: &[Observation],
        interp_best: Option<usize>,
    ) -> Result<(Option<usize>, Option<Hyperparameters>)> {
        match self {
            PolicyState::BayesOpt {
                cfg,
                model,
                slots_since_fit,
            } => {
                model.extend(measured.iter().copied())?;
                *slots_since_fit += 1;
                if cfg.refit.due(model.buffer().len(), *slots_since_fit) {
                    *model = model.fit_hyperparameters(
                        &cfg.fit,
                        &mut stream(seed, Purpose::HyperparameterFit, t),
                    );
                    *slots_since_fit = 0;
                }
                Ok((interp_best, Some(model.hyper)))
            }
            PolicyState::Spline { cols, grid, .. } => {
                let shape = grid.shape();
                let rows: Vec<usize> = (0..shape.n_elevation).collect();
                let mut values = vec![vec![0.0; cols.len()]; rows.len()];
                for o in measured {
                    let c = grid.coord_of(o.beam);
                    let j = cols
                        .iter()
                        .position(|&x| x == c.h)
                        .expect("measured beam lies on the sub-grid");
                    values[c.v][j] = o.rsrp_db;
                }
                let surface = bivariate_spline(shape, cols, &rows, &values)?;
                Ok((Some(argmax(&surface)), None))
            }
            PolicyState::SpatialGpr { grid, .. } => {
                let mean = spatial_gpr_mean(
                    grid.shape(),
                    grid.default_metric(),
                    SPATIAL_GPR_NOISE_STD,
                    measured,
                )?;
                Ok((Some(argmax(&mean)), None))
            }
            PolicyState::RandomSubset { .. } | PolicyState::Oracle { .. } => {
                Ok((interp_best, None))
            }
        }
    }
}
