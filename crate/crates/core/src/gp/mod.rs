//! Spatio-temporal Gaussian-process surrogate of the RSRP landscape (in dB).

pub mod fit;
pub mod kernel;
pub mod model;

pub use fit::{Bounds, FitConfig};
pub use kernel::{beam_kernel, matern, time_kernel, BeamKernelParams, TimeKernelParams};
pub use model::{prior_mean_from_history, GpModel, Hyperparameters, Posterior, PriorMean};
