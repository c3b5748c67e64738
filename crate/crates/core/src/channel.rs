//! Synthetic spatially and temporally consistent channel.
//!
//! The channel is modelled directly as the effective row vector `h̄_t = u* H_t`
//! seen by the base station. It is a sum of plane-wave paths whose departure
//! angles drift linearly in time and whose complex gains rotate at a fixed
//! per-slot rate. Path angles use the same [`AngleConvention`] as the grid, so
//! a single path sitting on a grid direction is maximally received by exactly
//! that beam.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::beam_grid::{make_dft_beam, AngleConvention, ArrayGeometry, BeamGrid};
use crate::error::{Error, Result};

/// Lower clamp of [`true_rsrp_db`]; reached at (numerically) exact nulls.
pub const RSRP_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub gain: Complex64,
    /// Initial departure angles (radians, grid convention).
    pub azimuth_0: f64,
    pub elevation_0: f64,
    /// Angular drift, radians per slot.
    pub azimuth_rate: f64,
    pub elevation_rate: f64,
    /// Phase rotation of the gain, radians per slot.
    pub gain_phase_rate: f64,
}

impl PathComponent {
    pub fn angles_at(&self, slot: u64) -> (f64, f64) {
        let t = slot as f64;
        (
            self.azimuth_0 + self.azimuth_rate * t,
            self.elevation_0 + self.elevation_rate * t,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScenario {
    /// Dominant path first.
    pub paths: Vec<PathComponent>,
    pub geometry: ArrayGeometry,
    pub convention: AngleConvention,
    /// Linear transmit power `ρ`.
    pub tx_power: f64,
    /// Standard deviation of the dB-domain measurement noise.
    pub noise_std_db: f64,
    pub rng_seed: u64,
}

impl ChannelScenario {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let Some(dominant) = self.paths.first() else {
            return Err(Error::InvalidParameter("scenario has no paths".into()));
        };
        if self.paths.iter().any(|p| !(p.gain.norm() > 0.0)) {
            return Err(Error::InvalidParameter(
                "path gains must be non-zero".into(),
            ));
        }
        if self
            .paths
            .iter()
            .any(|p| p.gain.norm() > dominant.gain.norm())
        {
            return Err(Error::InvalidParameter(
                "first path must be the strongest".into(),
            ));
        }
        if !(self.tx_power > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tx power must be positive, got {}",
                self.tx_power
            )));
        }
        if !(self.noise_std_db >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise std must be non-negative, got {}",
                self.noise_std_db
            )));
        }
        Ok(())
    }

    /// Same scenario with every angular rate multiplied by `factor`.
    pub fn with_rates_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.paths {
            p.azimuth_rate *= factor;
            p.elevation_rate *= factor;
        }
        out
    }
}

/// The channel the base station perceives at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub slot: u64,
    pub h_bar: Vec<Complex64>,
    pub tx_power: f64,
}

/// One reported RSRP measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub slot: u64,
    pub beam: usize,
    pub rsrp_db: f64,
}

/// `h̄_t = Σ_ℓ g_ℓ e^{i ω_ℓ t} √M conj(a(θ_ℓ(t), φ_ℓ(t)))ᵀ` where `a` is the
/// unit-norm DFT steering vector.
pub fn channel_at(scenario: &ChannelScenario, slot: u64) -> EffectiveChannel {
    let m = scenario.geometry.num_antennas();
    let scale = (m as f64).sqrt();
    let mut h_bar = vec![Complex64::new(0.0, 0.0); m];
    for path in &scenario.paths {
        let (az, el) = path.angles_at(slot);
        let (theta, phi) = scenario.convention.to_formula(az, el);
        let steer = make_dft_beam(&scenario.geometry, theta, phi);
        let g = path.gain * Complex64::from_polar(scale, path.gain_phase_rate * slot as f64);
        for (h, a) in h_bar.iter_mut().zip(&steer) {
            *h += g * a.conj();
        }
    }
    EffectiveChannel {
        slot,
        h_bar,
        tx_power: scenario.tx_power,
    }
}

/// `10 log10(ρ |h̄ b|²)`, clamped below at [`RSRP_FLOOR_DB`].
pub fn true_rsrp_db(channel: &EffectiveChannel, grid: &BeamGrid, beam: usize) -> Result<f64> {
    if beam >= grid.len() {
        return Err(Error::InvalidParameter(format!(
            "beam index {beam} out of range for {} beams",
            grid.len()
        )));
    }
    let b = grid.beam(beam);
    if channel.h_bar.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: channel.h_bar.len(),
        });
    }
    let gain: Complex64 = channel.h_bar.iter().zip(b).map(|(h, x)| h * x).sum();
    let power = gain.norm_sqr();
    let p = channel.tx_power * power;
    if p == 0.0 {
        return Ok(RSRP_FLOOR_DB);
    }
    Ok((10.0 * p.log10()).max(RSRP_FLOOR_DB))
}

pub fn true_rsrp_all_db(channel: &EffectiveChannel, grid: &BeamGrid) -> Result<Vec<f64>> {
    (0..grid.len())
        .map(|b| true_rsrp_db(channel, grid, b))
        .collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Noisy RSRP reports for `beamset`.
///
/// One standard normal is drawn per grid beam in index order and the entries
/// for `beamset` are used, so the noise on a given beam does not depend on
/// which other beams were requested.
pub fn measure<R: Rng + ?Sized>(
    scenario: &ChannelScenario,
    channel: &EffectiveChannel,
    grid: &BeamGrid,
    beamset: &[usize],
    rng: &mut R,
) -> Result<Vec<Observation>> {
    if beamset.is_empty() {
        return Err(Error::InvalidParameter("beamset is empty".into()));
    }
    let noise: Vec<f64> = (0..grid.len())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    beamset
        .iter()
        .map(|&beam| {
            let truth = true_rsrp_db(channel, grid, beam)?;
            Ok(Observation {
                slot: channel.slot,
                beam,
                rsrp_db: truth + scenario.noise_std_db * noise[beam],
            })
        })
        .collect()
}

/// Parameters of the episode generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioDistribution {
    pub num_paths: usize,
    /// Amplitude ratio between consecutive paths.
    pub gain_decay: f64,
    /// Azimuth rates are uniform in `±azimuth_rate_bound_deg` per slot.
    pub azimuth_rate_bound_deg: f64,
    /// Elevation rate bound as a fraction of the azimuth bound.
    pub elevation_rate_ratio: f64,
    /// Gain phase rates are uniform in `±phase_rate_bound` radians per slot.
    pub phase_rate_bound: f64,
    pub noise_std_db: f64,
    pub tx_power: f64,
}

impl Default for ScenarioDistribution {
    fn default() -> Self {
        Self {
            num_paths: 3,
            gain_decay: 0.3,
            azimuth_rate_bound_deg: SpeedClass::Slow.azimuth_rate_bound_deg(),
            elevation_rate_ratio: 0.25,
            phase_rate_bound: 0.1,
            noise_std_db: 0.5,
            tx_power: 1.0,
        }
    }
}

/// Mobility presets loosely following 30, 60 and 90 km/h.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedClass {
    Slow,
    Medium,
    Fast,
}

impl SpeedClass {
    pub fn azimuth_rate_bound_deg(self) -> f64 {
        match self {
            SpeedClass::Slow => 0.25,
            SpeedClass::Medium => 0.5,
            SpeedClass::Fast => 0.75,
        }
    }

    pub fn km_per_hour(self) -> f64 {
        match self {
            SpeedClass::Slow => 30.0,
            SpeedClass::Medium => 60.0,
            SpeedClass::Fast => 90.0,
        }
    }
}

impl ScenarioDistribution {
    pub fn for_speed(speed: SpeedClass) -> Self {
        Self {
            azimuth_rate_bound_deg: speed.azimuth_rate_bound_deg(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.num_paths == 0 {
            return bad("num_paths must be at least 1");
        }
        if !(self.gain_decay > 0.0 && self.gain_decay <= 1.0) {
            return bad("gain_decay must be in (0, 1]");
        }
        if !(self.azimuth_rate_bound_deg >= 0.0)
            || !(self.elevation_rate_ratio >= 0.0)
            || !(self.phase_rate_bound >= 0.0)
        {
            return bad("rate bounds must be non-negative");
        }
        if !(self.noise_std_db >= 0.0) {
            return bad("noise_std_db must be non-negative");
        }
        if !(self.tx_power > 0.0) {
            return bad("tx_power must be positive");
        }
        Ok(())
    }
}

/// Draws an episode: the dominant path has unit gain, path `ℓ` has amplitude
/// `gain_decay^ℓ` with a uniform random phase, and initial angles are uniform
/// over the grid's angular span.
pub fn random_scenario<R: Rng + ?Sized>(
    params: &ScenarioDistribution,
    grid: &BeamGrid,
    rng_seed: u64,
    rng: &mut R,
) -> Result<ChannelScenario> {
    params.validate()?;
    let az = grid.angles().azimuths();
    let el = grid.angles().elevations();
    let (az_lo, az_hi) = (az[0], az[az.len() - 1]);
    let (el_lo, el_hi) = (el[0], el[el.len() - 1]);
    let az_bound = params.azimuth_rate_bound_deg.to_radians();
    let el_bound = az_bound * params.elevation_rate_ratio;

    let paths = (0..params.num_paths)
        .map(|l| {
            let amplitude = params.gain_decay.powi(l as i32);
            let phase = if l == 0 {
                0.0
            } else {
                rng.random_range(-PI..PI)
            };
            PathComponent {
                gain: Complex64::from_polar(amplitude, phase),
                azimuth_0: uniform(rng, az_lo, az_hi),
                elevation_0: uniform(rng, el_lo, el_hi),
                azimuth_rate: uniform(rng, -az_bound, az_bound),
                elevation_rate: uniform(rng, -el_bound, el_bound),
                gain_phase_rate: uniform(rng, -params.phase_rate_bound, params.phase_rate_bound),
            }
        })
        .collect();
    let scenario = ChannelScenario {
        paths,
        geometry: *grid.geometry(),
        convention: grid.angles().convention(),
        tx_power: params.tx_power,
        noise_std_db: params.noise_std_db,
        rng_seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}
