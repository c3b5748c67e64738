use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::{matern, BeamKernelParams, TimeKernelParams};
use crate::beam_grid::{BeamCoord, BeamIndexMetric, GridShape};
use crate::channel::Observation;
use crate::error::{Error, Result};

/// Relative jitter schedule. The plain matrix is tried first; on failure
/// `c · trace/n` is added to the diagonal, with `c` starting at 1e-10 and
/// growing ×10 per failed factorization up to 1e-4.
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub time: TimeKernelParams,
    pub beam: BeamKernelParams,
    /// Observation noise standard deviation `σ`, dB.
    pub noise_std: f64,
}

impl Hyperparameters {
    /// Cold-start values: 10 dB output scale, a long memory, `ν = 3/2`.
    pub fn initial(metric: BeamIndexMetric) -> Self {
        Self {
            time: TimeKernelParams {
                theta1: 100.0,
                theta2: 50.0,
            },
            beam: BeamKernelParams { nu: 1.5, metric },
            noise_std: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.time.theta1 > 0.0
            && self.time.theta2 > 0.0
            && self.beam.nu > 0.0
            && self.beam.metric.ell_h > 0.0
            && self.beam.metric.ell_v > 0.0
            && self.noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid hyperparameters {self:?}"
            )))
        }
    }

    /// `k((t, a), (t', b)) = k_time(t, t') · k_beam(a, b)`, without the noise term.
    pub fn kernel(&self, t: u64, a: BeamCoord, t_prime: u64, b: BeamCoord) -> f64 {
        self.time.eval_lag(t as f64 - t_prime as f64)
            * matern(self.beam.nu, self.beam.metric.distance(a, b))
    }
}

/// Prior mean over beams; constant in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMean {
    Constant(f64),
    PerBeam(Vec<f64>),
}

impl Default for PriorMean {
    fn default() -> Self {
        PriorMean::Constant(0.0)
    }
}

impl PriorMean {
    pub fn at(&self, beam: usize) -> f64 {
        match self {
            PriorMean::Constant(c) => *c,
            PriorMean::PerBeam(v) => v[beam],
        }
    }
}

/// Per-beam average of historical reports. Beams never reported get the
/// global average; no history at all gives the zero prior.
pub fn prior_mean_from_history(history: &[Observation], num_beams: usize) -> PriorMean {
    if history.is_empty() {
        return PriorMean::Constant(0.0);
    }
    let mut sums = vec![0.0; num_beams];
    let mut counts = vec![0usize; num_beams];
    for o in history {
        sums[o.beam] += o.rsrp_db;
        counts[o.beam] += 1;
    }
    let global = history.iter().map(|o| o.rsrp_db).sum::<f64>() / history.len() as f64;
    PriorMean::PerBeam(
        sums.iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { global } else { s / c as f64 })
            .collect(),
    )
}

/// Gaussian posterior over every beam at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub slot: u64,
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Jitter that was added to the training covariance (0 for the prior).
    pub jitter: f64,
}

impl Posterior {
    /// Wraps an explicit mean and covariance; negative variances are clipped to zero.
    pub fn from_mean_cov(slot: u64, mean: DVector<f64>, mut cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cov.nrows(),
            });
        }
        cov = (&cov + cov.transpose()) * 0.5;
        for i in 0..n {
            if cov[(i, i)] < 0.0 {
                cov[(i, i)] = 0.0;
            }
        }
        let std = cov.diagonal().map(f64::sqrt);
        Ok(Self {
            slot,
            mean,
            std,
            cov,
            jitter: 0.0,
        })
    }

    pub fn num_beams(&self) -> usize {
        self.mean.len()
    }
}

/// The spatio-temporal surrogate: hyperparameters, prior mean and a sliding
/// window of chronologically ordered observations.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    pub hyper: Hyperparameters,
    pub prior_mean: PriorMean,
    shape: GridShape,
    window: usize,
    buffer: VecDeque<Observation>,
}

impl GpModel {
    pub fn new(
        hyper: Hyperparameters,
        prior_mean: PriorMean,
        shape: GridShape,
        window: usize,
    ) -> Result<Self> {
        hyper.validate()?;
        if window == 0 {
            return Err(Error::InvalidParameter(
                "observation window must be positive".into(),
            ));
        }
        if let PriorMean::PerBeam(v) = &prior_mean {
            if v.len() != shape.len() {
                return Err(Error::DimensionMismatch {
                    expected: shape.len(),
                    got: v.len(),
                });
            }
        }
        Ok(Self {
            hyper,
            prior_mean,
            shape,
            window,
            buffer: VecDeque::new(),
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn buffer(&self) -> &VecDeque<Observation> {
        &self.buffer
    }

    pub fn latest_slot(&self) -> Option<u64> {
        self.buffer.back().map(|o| o.slot)
    }

    /// Appends one observation, evicting the oldest once the window is full.
    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if obs.beam >= self.shape.len() {
            return Err(Error::InvalidParameter(format!(
                "beam index {} out of range",
                obs.beam
            )));
        }
        if let Some(latest) = self.latest_slot() {
            if obs.slot < latest {
                return Err(Error::SlotInPast {
                    query: obs.slot,
                    latest,
                });
            }
        }
        self.buffer.push_back(obs);
        while self.buffer.len() > self.window {
            self.buffer.pop_front();
        }
        Ok(())
    }

    pub fn extend(&mut self, obs: impl IntoIterator<Item = Observation>) -> Result<()> {
        obs.into_iter().try_for_each(|o| self.push(o))
    }

    /// Copy keeping only the `count` most recent observations.
    pub fn most_recent(&self, count: usize) -> Self {
        let skip = self.buffer.len().saturating_sub(count);
        Self {
            buffer: self.buffer.iter().skip(skip).copied().collect(),
            ..self.clone()
        }
    }

    pub fn with_hyper(&self, hyper: Hyperparameters) -> Self {
        Self {
            hyper,
            ..self.clone()
        }
    }

    /// Kernel between two (slot, beam) points, plus `σ²` when `same_observation`.
    pub fn full_kernel(
        &self,
        x: (u64, usize),
        x_prime: (u64, usize),
        same_observation: bool,
    ) -> f64 {
        let k = self.hyper.kernel(
            x.0,
            self.shape.coord_of(x.1),
            x_prime.0,
            self.shape.coord_of(x_prime.1),
        );
        if same_observation {
            k + self.hyper.noise_std * self.hyper.noise_std
        } else {
            k
        }
    }

    /// Exact posterior over every beam at slot `t`.
    pub fn posterior_at_slot(&self, t: u64) -> Result<Posterior> {
        if let Some(latest) = self.latest_slot() {
            if t < latest {
                return Err(Error::SlotInPast { query: t, latest });
            }
        }
        let tables = KernelTables::new(&self.hyper, self.shape, self.lag_span(t));
        let nb = self.shape.len();
        let kss = DMatrix::from_fn(nb, nb, |i, j| tables.beam(i, j) * tables.time(0));
        let prior = DVector::from_fn(nb, |i, _| self.prior_mean.at(i));
        if self.buffer.is_empty() {
            return Posterior::from_mean_cov(t, prior, kss);
        }

        let (chol, jitter) = self.factorize(&tables)?;
        let l = chol.l();
        let ks = DMatrix::from_fn(self.buffer.len(), nb, |i, b| {
            let o = &self.buffer[i];
            tables.time(t - o.slot) * tables.beam(o.beam, b)
        });
        let v = l
            .solve_lower_triangular(&ks)
            .expect("cholesky factor has a positive diagonal");
        let a = l
            .solve_lower_triangular(&self.residuals())
            .expect("cholesky factor has a positive diagonal");
        let mean = prior + v.tr_mul(&a);
        let cov = kss - v.tr_mul(&v);
        let mut post = Posterior::from_mean_cov(t, mean, cov)?;
        post.jitter = jitter;
        Ok(post)
    }

    /// `log p(f̃ | θ, σ)` of the buffered observations.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        if self.buffer.is_empty() {
            return Err(Error::InvalidParameter(
                "log likelihood of an empty buffer".into(),
            ));
        }
        let latest = self.latest_slot().unwrap_or(0);
        let tables = KernelTables::new(&self.hyper, self.shape, self.lag_span(latest));
        let (chol, _) = self.factorize(&tables)?;
        let l = chol.l_dirty();
        let a = l
            .solve_lower_triangular(&self.residuals())
            .expect("cholesky factor has a positive diagonal");
        let n = self.buffer.len() as f64;
        let log_det_half: f64 = (0..self.buffer.len()).map(|i| l[(i, i)].ln()).sum();
        Ok(-0.5 * a.norm_squared() - log_det_half - 0.5 * n * (2.0 * PI).ln())
    }

    /// Training covariance `K + σ²I` (without jitter).
    pub fn training_covariance(&self) -> DMatrix<f64> {
        let latest = self.latest_slot().unwrap_or(0);
        let tables = KernelTables::new(&self.hyper, self.shape, self.lag_span(latest));
        self.training_matrix(&tables)
    }

    pub fn residuals(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.buffer.len(),
            self.buffer
                .iter()
                .map(|o| o.rsrp_db - self.prior_mean.at(o.beam)),
        )
    }

    fn lag_span(&self, t: u64) -> u64 {
        self.buffer.front().map_or(0, |o| t.saturating_sub(o.slot))
    }

    fn training_matrix(&self, tables: &KernelTables) -> DMatrix<f64> {
        let n = self.buffer.len();
        let noise = self.hyper.noise_std * self.hyper.noise_std;
        let mut k = DMatrix::zeros(n, n);
        for j in 0..n {
            let oj = &self.buffer[j];
            for i in j..n {
                let oi = &self.buffer[i];
                let v = tables.time(oi.slot - oj.slot) * tables.beam(oi.beam, oj.beam);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(j, j)] += noise;
        }
        k
    }

    fn factorize(&self, tables: &KernelTables) -> Result<(Cholesky<f64, Dyn>, f64)> {
        factorize_with_jitter(self.training_matrix(tables))
    }
}

/// Cholesky factorization with the escalating jitter schedule.
/// Returns the factor and the absolute jitter that was added.
pub fn factorize_with_jitter(k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let scale = (k.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    if let Some(chol) = Cholesky::new(k.clone()) {
        return Ok((chol, 0.0));
    }
    let mut c = JITTER_START;
    let mut jitter = c * scale;
    loop {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        c *= 10.0;
        if c > JITTER_MAX * (1.0 + 1e-9) {
            let diag = k.diagonal();
            return Err(Error::NotPositiveDefinite {
                n,
                jitter,
                min_diagonal: diag.min(),
                max_diagonal: diag.max(),
            });
        }
        jitter = c * scale;
    }
}

/// Kernel values indexed by time lag and by beam pair.
struct KernelTables {
    time: Vec<f64>,
    beam: Vec<f64>,
    num_beams: usize,
}

impl KernelTables {
    fn new(hyper: &Hyperparameters, shape: GridShape, max_lag: u64) -> Self {
        let time = (0..=max_lag)
            .map(|lag| hyper.time.eval_lag(lag as f64))
            .collect();
        // correlation depends on |Δh|, |Δv| only
        let by_offset: Vec<f64> = (0..shape.n_elevation)
            .flat_map(|dv| (0..shape.n_azimuth).map(move |dh| (dh, dv)))
            .map(|(dh, dv)| {
                matern(
                    hyper.beam.nu,
                    hyper
                        .beam
                        .metric
                        .distance(BeamCoord::new(0, 0), BeamCoord::new(dh, dv)),
                )
            })
            .collect();
        let nb = shape.len();
        let mut beam = vec![0.0; nb * nb];
        for a in 0..nb {
            let ca = shape.coord_of(a);
            for b in 0..nb {
                let cb = shape.coord_of(b);
                beam[a * nb + b] =
                    by_offset[ca.v.abs_diff(cb.v) * shape.n_azimuth + ca.h.abs_diff(cb.h)];
            }
        }
        Self {
            time,
            beam,
            num_beams: nb,
        }
    }

    #[inline]
    fn time(&self, lag: u64) -> f64 {
        self.time[lag as usize]
    }

    #[inline]
    fn beam(&self, a: usize, b: usize) -> f64 {
        self.beam[a * self.num_beams + b]
    }
}
