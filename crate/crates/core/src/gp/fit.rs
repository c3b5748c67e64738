//! Maximum-likelihood refit of `(θ₁, θ₂, ℓ_H, ℓ_V, σ)`.
//!
//! Nelder–Mead in log-parameter space from several starts: the incumbent plus
//! uniformly random points inside the bounds. Points outside the box are
//! evaluated at their projection plus a quadratic penalty. `ν` stays fixed.

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{GpModel, Hyperparameters};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub theta1: Bounds,
    pub theta2: Bounds,
    pub ell_h: Bounds,
    pub ell_v: Bounds,
    pub noise_std: Bounds,
    /// Total number of Nelder–Mead starts, the incumbent included.
    pub restarts: usize,
    /// Iteration cap per start.
    pub max_iters: u64,
    /// Below this many buffered points the incumbent is returned unchanged.
    pub min_points: usize,
    /// The search maximizes the likelihood of at most this many of the most
    /// recent points; acceptance against the incumbent uses the whole buffer.
    pub fit_window: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            theta1: Bounds::new(1e-2, 1e4),
            theta2: Bounds::new(0.5, 200.0),
            ell_h: Bounds::new(0.1, 100.0),
            ell_v: Bounds::new(0.1, 100.0),
            noise_std: Bounds::new(1e-3, 10.0),
            restarts: 4,
            max_iters: 20,
            min_points: 8,
            fit_window: 128,
        }
    }
}

impl FitConfig {
    fn log_bounds(&self) -> [Bounds; 5] {
        [
            self.theta1,
            self.theta2,
            self.ell_h,
            self.ell_v,
            self.noise_std,
        ]
        .map(|b| Bounds::new(b.lo.ln(), b.hi.ln()))
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, b) in [
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("ell_h", self.ell_h),
            ("ell_v", self.ell_v),
            ("noise_std", self.noise_std),
        ] {
            if !(b.lo > 0.0 && b.hi >= b.lo && b.hi.is_finite()) {
                return Err(format!("bounds for {name} must satisfy 0 < lo <= hi"));
            }
        }
        if self.restarts == 0 {
            return Err("restarts must be at least 1".into());
        }
        if self.fit_window == 0 {
            return Err("fit_window must be positive".into());
        }
        Ok(())
    }
}

fn to_log(h: &Hyperparameters) -> Vec<f64> {
    vec![
        h.time.theta1.ln(),
        h.time.theta2.ln(),
        h.beam.metric.ell_h.ln(),
        h.beam.metric.ell_v.ln(),
        h.noise_std.ln(),
    ]
}

fn from_log(base: &Hyperparameters, x: &[f64]) -> Hyperparameters {
    let mut h = *base;
    h.time.theta1 = x[0].exp();
    h.time.theta2 = x[1].exp();
    h.beam.metric.ell_h = x[2].exp();
    h.beam.metric.ell_v = x[3].exp();
    h.noise_std = x[4].exp();
    h
}

const FAILED_COST: f64 = 1e300;

#[derive(Clone, Copy)]
struct NegLogLikelihood<'a> {
    model: &'a GpModel,
    bounds: [Bounds; 5],
}

impl NegLogLikelihood<'_> {
    fn project(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut excess = 0.0;
        let p = x
            .iter()
            .zip(&self.bounds)
            .map(|(&v, b)| {
                let c = v.clamp(b.lo, b.hi);
                excess += (v - c) * (v - c);
                c
            })
            .collect();
        (p, excess)
    }

    fn neg_lml(&self, x: &[f64]) -> f64 {
        let h = from_log(&self.model.hyper, x);
        match self.model.with_hyper(h).log_marginal_likelihood() {
            Ok(v) if v.is_finite() => -v,
            _ => FAILED_COST,
        }
    }
}

impl CostFunction for NegLogLikelihood<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> Result<f64, ArgminError> {
        let (p, excess) = self.project(x);
        let c = self.neg_lml(&p);
        Ok(if c >= FAILED_COST {
            c
        } else {
            c + 1e3 * excess
        })
    }
}

impl GpModel {
    /// Returns a copy of the model with refitted hyperparameters. The result
    /// never has a lower log likelihood than the incumbent; on any optimizer
    /// failure the incumbent is kept.
    pub fn fit_hyperparameters<R: Rng + ?Sized>(&self, cfg: &FitConfig, rng: &mut R) -> GpModel {
        if self.buffer().len() < cfg.min_points.max(1) {
            return self.clone();
        }
        let recent = self.most_recent(cfg.fit_window);
        let problem = NegLogLikelihood {
            model: &recent,
            bounds: cfg.log_bounds(),
        };

        let mut starts = vec![problem.project(&to_log(&self.hyper)).0];
        while starts.len() < cfg.restarts {
            starts.push(
                problem
                    .bounds
                    .iter()
                    .map(|b| uniform(rng, b.lo, b.hi))
                    .collect(),
            );
        }

        let mut best: Option<(Vec<f64>, f64)> = None;
        for start in starts {
            let Some((x, c)) = run_nelder_mead(&problem, start, cfg.max_iters) else {
                continue;
            };
            if best.as_ref().is_none_or(|(_, bc)| c < *bc) {
                best = Some((x, c));
            }
        }
        let Some((x, _)) = best else {
            return self.clone();
        };
        let candidate = self.with_hyper(from_log(&self.hyper, &x));
        match (
            candidate.log_marginal_likelihood(),
            self.log_marginal_likelihood(),
        ) {
            (Ok(new), Ok(old)) if new > old => candidate,
            (Ok(new), Err(_)) if new.is_finite() => candidate,
            _ => self.clone(),
        }
    }
}

fn run_nelder_mead(
    problem: &NegLogLikelihood<'_>,
    start: Vec<f64>,
    max_iters: u64,
) -> Option<(Vec<f64>, f64)> {
    let mut simplex = vec![start.clone()];
    for (i, b) in problem.bounds.iter().enumerate() {
        let mut v = start.clone();
        let step = 0.1 * (b.hi - b.lo).max(1e-6);
        v[i] = if v[i] + step <= b.hi {
            v[i] + step
        } else {
            v[i] - step
        };
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-4).ok()?;
    let res = Executor::new(*problem, solver)
        .configure(|state| state.max_iters(max_iters))
        .run()
        .ok()?;
    let x = res.state.best_param?;
    let (p, _) = problem.project(&x);
    let c = problem.neg_lml(&p);
    (c < FAILED_COST).then_some((p, c))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beam_grid::{BeamIndexMetric, GridShape};
    use crate::channel::Observation;
    use crate::gp::PriorMean;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model_with(n: usize) -> GpModel {
        let shape = GridShape {
            n_azimuth: 4,
            n_elevation: 2,
        };
        let mut m = GpModel::new(
            Hyperparameters::initial(BeamIndexMetric::default()),
            PriorMean::default(),
            shape,
            256,
        )
        .unwrap();
        for i in 0..n {
            let beam = (i * 3) % 8;
            let y = -10.0 + 4.0 * ((i as f64) * 0.3).sin() + beam as f64;
            m.push(Observation {
                slot: i as u64 / 2,
                beam,
                rsrp_db: y,
            })
            .unwrap();
        }
        m
    }

    #[test]
    fn small_buffer_keeps_incumbent() {
        let m = model_with(7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(m.fit_hyperparameters(&FitConfig::default(), &mut rng), m);
    }

    #[test]
    fn fit_improves_and_is_monotone() {
        let m = model_with(40);
        let cfg = FitConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let once = m.fit_hyperparameters(&cfg, &mut rng);
        let l0 = m.log_marginal_likelihood().unwrap();
        let l1 = once.log_marginal_likelihood().unwrap();
        assert!(l1 > l0, "{l1} <= {l0}");
        let twice = once.fit_hyperparameters(&cfg, &mut rng);
        assert!(twice.log_marginal_likelihood().unwrap() >= l1);
        assert_eq!(twice.hyper.beam.nu, 1.5);
        assert_eq!(twice.buffer(), m.buffer());
    }

    #[test]
    fn fitted_values_respect_bounds() {
        let m = model_with(30);
        let cfg = FitConfig {
            theta2: Bounds::new(2.0, 3.0),
            ..FitConfig::default()
        };
        let fitted = m.with_hyper(Hyperparameters {
            time: crate::gp::TimeKernelParams {
                theta1: 10.0,
                theta2: 2.5,
            },
            ..m.hyper
        });
        let out = fitted.fit_hyperparameters(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        assert!((2.0..=3.0).contains(&out.hyper.time.theta2));
        assert!((1e-3..=10.0).contains(&out.hyper.noise_std));
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            restarts: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            ell_h: Bounds::new(2.0, 1.0),
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
