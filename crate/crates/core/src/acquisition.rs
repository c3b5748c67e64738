//! Overhead-penalized parallel expected improvement and its greedy maximization.
//!
//! For a beamset `B` the acquisition is `J(B) = E[max_{b∈B} f(b) - f*]⁺`, with
//! `f*` the largest posterior mean. `J` is estimated by Monte Carlo over one
//! matrix of joint posterior draws per slot that every evaluation shares.
//! On a shared matrix the estimate is itself monotone and submodular in `B`,
//! sample by sample, which is what the greedy guarantees rest on.

use libm::erfc;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Posterior;
use crate::rng::{stream, Purpose};

/// Default number of joint posterior draws per slot.
pub const DEFAULT_MC_SAMPLES: usize = 2048;

/// Reporting cost `h(n) = c1 n + c2 n²` for `n <= n_max`, infinite above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverheadPenalty {
    pub c1: f64,
    pub c2: f64,
    pub n_max: usize,
}

impl OverheadPenalty {
    pub fn new(c1: f64, c2: f64, n_max: usize) -> Result<Self> {
        let p = Self { c1, c2, n_max };
        p.validate()?;
        Ok(p)
    }

    /// At most 16 beams, 0.2 dB per beam.
    pub fn low_overhead() -> Self {
        Self {
            c1: 0.2,
            c2: 0.0,
            n_max: 16,
        }
    }

    /// Cheaper beams and no cap below the full 64-beam dictionary.
    pub fn high_accuracy() -> Self {
        Self {
            c1: 0.05,
            c2: 0.0,
            n_max: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 >= 0.0 && self.c2 >= 0.0 && self.c1.is_finite() && self.c2.is_finite()) {
            return Err(Error::InvalidParameter(
                "penalty coefficients must be finite and non-negative".into(),
            ));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be positive".into()));
        }
        Ok(())
    }

    pub fn cost(&self, n: usize) -> f64 {
        if n > self.n_max {
            return f64::INFINITY;
        }
        let n = n as f64;
        self.c1 * n + self.c2 * n * n
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Closed-form `E[f - f*]⁺` for `f ~ N(mean, std²)`.
pub fn expected_improvement(mean: f64, std: f64, f_star: f64) -> f64 {
    let gap = mean - f_star;
    if std <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / std;
    (gap * normal_cdf(z) + std * normal_pdf(z)).max(0.0)
}

/// `f* = max_b E[f(b)]`.
pub fn believed_best(posterior: &Posterior) -> f64 {
    posterior.mean.max()
}

/// Posterior plus the shared Monte-Carlo draws for one slot.
#[derive(Debug, Clone)]
pub struct AcquisitionContext {
    posterior: Posterior,
    f_star: f64,
    rng_seed: u64,
    /// `samples × beams`, column-major, so each beam's draws are contiguous.
    samples: DMatrix<f64>,
}

/// Result of a greedy run: beams in insertion order and `J` of every prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamsetChoice {
    pub beams: Vec<usize>,
    pub j_values: Vec<f64>,
    /// `J(B) - h(|B|)` for penalized runs, `J(B)` for fixed-size runs.
    pub objective: f64,
}

impl AcquisitionContext {
    /// Draws `mc_samples` joint samples from `posterior` using the stream
    /// `(rng_seed, slot)`.
    pub fn new(posterior: Posterior, mc_samples: usize, rng_seed: u64) -> Result<Self> {
        if mc_samples == 0 {
            return Err(Error::InvalidParameter(
                "mc_samples must be positive".into(),
            ));
        }
        let nb = posterior.num_beams();
        if nb == 0 {
            return Err(Error::InvalidParameter("posterior has no beams".into()));
        }
        let factor = sampling_factor(&posterior.cov);
        let mut rng = stream(rng_seed, Purpose::MonteCarlo, posterior.slot);
        let z = DMatrix::<f64>::from_fn(mc_samples, nb, |_, _| StandardNormal.sample(&mut rng));
        let mut samples = z * factor.transpose();
        for (b, mut col) in samples.column_iter_mut().enumerate() {
            col.add_scalar_mut(posterior.mean[b]);
        }
        Ok(Self {
            f_star: believed_best(&posterior),
            posterior,
            rng_seed,
            samples,
        })
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn num_beams(&self) -> usize {
        self.samples.ncols()
    }

    pub fn mc_samples(&self) -> usize {
        self.samples.nrows()
    }

    /// Draws of beam `b`, one per sample.
    pub fn beam_samples(&self, b: usize) -> &[f64] {
        let s = self.samples.nrows();
        &self.samples.as_slice()[b * s..(b + 1) * s]
    }

    /// Closed-form single-beam expected improvement.
    pub fn ei_single(&self, beam: usize) -> f64 {
        expected_improvement(
            self.posterior.mean[beam],
            self.posterior.std[beam],
            self.f_star,
        )
    }

    /// Per-sample improvement `[max_{b∈B} f_s(b) - f*]⁺`.
    pub fn pathwise_improvement(&self, beams: &[usize]) -> Vec<f64> {
        let mut best = vec![f64::NEG_INFINITY; self.mc_samples()];
        for &b in beams {
            for (m, &x) in best.iter_mut().zip(self.beam_samples(b)) {
                *m = m.max(x);
            }
        }
        best.into_iter()
            .map(|m| (m - self.f_star).max(0.0))
            .collect()
    }

    /// Monte-Carlo estimate of `J(B)`. Always uses the shared draws, even for
    /// singletons, so estimates of nested sets are ordered exactly.
    pub fn j_estimate(&self, beams: &[usize]) -> f64 {
        if beams.is_empty() {
            return 0.0;
        }
        mean(&self.pathwise_improvement(beams))
    }

    /// Standard error of [`Self::j_estimate`].
    pub fn j_standard_error(&self, beams: &[usize]) -> f64 {
        let v = self.pathwise_improvement(beams);
        let m = mean(&v);
        let s = v.len() as f64;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (s - 1.0).max(1.0);
        (var / s).sqrt()
    }

    /// Greedy fixed-size choice: `n` times, add the beam with the largest
    /// `J(B ∪ b)`, ties to the lowest index.
    pub fn greedy_fixed_size(&self, n: usize) -> Result<BeamsetChoice> {
        if n == 0 || n > self.num_beams() {
            return Err(Error::InvalidParameter(format!(
                "beamset size {n} outside 1..={}",
                self.num_beams()
            )));
        }
        let mut greedy = Greedy::new(self);
        while greedy.beams.len() < n {
            greedy.step();
        }
        let objective = greedy.last_j();
        Ok(greedy.finish(objective))
    }

    /// Greedy growth with the stopping rule: stop at the first `n` where
    /// `J(B(n)) - h(n) <= J(B(n-1)) - h(n-1)` and return `B(n-1)`.
    pub fn choose_beamset(&self, penalty: &OverheadPenalty) -> BeamsetChoice {
        let mut greedy = Greedy::new(self);
        greedy.step();
        let total = self.num_beams();
        loop {
            let n = greedy.beams.len();
            let current = greedy.last_j() - penalty.cost(n);
            if n == total || penalty.cost(n + 1).is_infinite() {
                return greedy.finish(current);
            }
            greedy.step();
            if greedy.last_j() - penalty.cost(n + 1) <= current {
                greedy.pop();
                return greedy.finish(current);
            }
        }
    }
}

struct Greedy<'a> {
    ctx: &'a AcquisitionContext,
    running_max: Vec<f64>,
    previous_max: Vec<f64>,
    used: Vec<bool>,
    beams: Vec<usize>,
    j_values: Vec<f64>,
}

impl<'a> Greedy<'a> {
    fn new(ctx: &'a AcquisitionContext) -> Self {
        Self {
            ctx,
            running_max: vec![f64::NEG_INFINITY; ctx.mc_samples()],
            previous_max: Vec::new(),
            used: vec![false; ctx.num_beams()],
            beams: Vec::new(),
            j_values: Vec::new(),
        }
    }

    fn last_j(&self) -> f64 {
        self.j_values.last().copied().unwrap_or(0.0)
    }

    /// `J(B ∪ b)` with the same arithmetic as [`AcquisitionContext::j_estimate`].
    fn value_with(&self, b: usize) -> f64 {
        let f_star = self.ctx.f_star;
        let sum: f64 = self
            .running_max
            .iter()
            .zip(self.ctx.beam_samples(b))
            .map(|(&m, &x)| (m.max(x) - f_star).max(0.0))
            .sum();
        sum / self.running_max.len() as f64
    }

    fn step(&mut self) {
        let mut best: Option<(usize, f64)> = None;
        for b in (0..self.ctx.num_beams()).filter(|&b| !self.used[b]) {
            let v = self.value_with(b);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((b, v));
            }
        }
        let (b, v) = best.expect("step called with beams remaining");
        self.previous_max.clone_from(&self.running_max);
        for (m, &x) in self.running_max.iter_mut().zip(self.ctx.beam_samples(b)) {
            *m = m.max(x);
        }
        self.used[b] = true;
        self.beams.push(b);
        self.j_values.push(v);
    }

    fn pop(&mut self) {
        if let Some(b) = self.beams.pop() {
            self.used[b] = false;
            self.j_values.pop();
            std::mem::swap(&mut self.running_max, &mut self.previous_max);
        }
    }

    fn finish(self, objective: f64) -> BeamsetChoice {
        BeamsetChoice {
            beams: self.beams,
            j_values: self.j_values,
            objective,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `A` with `A Aᵀ = cov`, from the eigendecomposition with negative
/// eigenvalues clipped to zero.
pub fn sampling_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    let mut factor = eig.eigenvectors;
    for (j, mut col) in factor.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    factor
}
