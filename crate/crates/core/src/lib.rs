//! Beam tracking for a mobile user: a spatio-temporal Gaussian process over
//! (slot, beam) drives a greedy, overhead-penalized parallel expected
//! improvement choice of which DFT beams to measure each slot.

pub mod acquisition;
pub mod beam_grid;
pub mod channel;
pub mod error;
pub mod gp;
pub mod rng;
pub mod tracker;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use acquisition::{AcquisitionContext, BeamsetChoice, OverheadPenalty};
pub use beam_grid::{
    AngleConvention, AngleGrid, ArrayGeometry, BeamCoord, BeamGrid, BeamIndexMetric, GridShape,
};
pub use channel::{
    ChannelScenario, EffectiveChannel, Observation, ScenarioDistribution, SpeedClass,
};
pub use error::{Error, Result};
pub use gp::{FitConfig, GpModel, Hyperparameters, Posterior, PriorMean};
pub use tracker::{
    run_episode, BayesOptConfig, Episode, EpisodeMetrics, SlotRecord, TrackerPolicy,
};
