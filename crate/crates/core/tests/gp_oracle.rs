//! Posterior and likelihood against a brute-force dense implementation.

use beamtrack_core::beam_grid::{BeamIndexMetric, GridShape};
use beamtrack_core::gp::{FitConfig, GpModel, Hyperparameters, PriorMean};
use beamtrack_core::Observation;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SHAPE: GridShape = GridShape {
    n_azimuth: 16,
    n_elevation: 4,
};

fn matern32(d: f64) -> f64 {
    let x = 3f64.sqrt() * d;
    (1.0 + x) * (-x).exp()
}

/// Kernel written out from scratch; indices are (h, v) with flat index v·16 + h.
fn kernel(h: &Hyperparameters, t: u64, a: usize, t2: u64, b: usize) -> f64 {
    let (ha, va) = ((a % 16) as f64, (a / 16) as f64);
    let (hb, vb) = ((b % 16) as f64, (b / 16) as f64);
    let m = h.beam.metric;
    let d = ((ha - hb).powi(2) / m.ell_h + (va - vb).powi(2) / m.ell_v).sqrt();
    let lag = (t as f64 - t2 as f64) / h.time.theta2;
    h.time.theta1 * (-lag * lag).exp() * matern32(d)
}

fn random_model(rng: &mut ChaCha8Rng) -> GpModel {
    let hyper = Hyperparameters {
        time: beamtrack_core::gp::TimeKernelParams {
            theta1: rng.random_range(1.0..200.0),
            theta2: rng.random_range(1.0..60.0),
        },
        beam: beamtrack_core::gp::BeamKernelParams {
            nu: 1.5,
            metric: BeamIndexMetric {
                ell_h: rng.random_range(0.3..5.0),
                ell_v: rng.random_range(0.3..5.0),
            },
        },
        noise_std: rng.random_range(0.05..2.0),
    };
    let prior = if rng.random_bool(0.5) {
        PriorMean::Constant(rng.random_range(-50.0..0.0))
    } else {
        PriorMean::PerBeam((0..64).map(|_| rng.random_range(-50.0..0.0)).collect())
    };
    let mut m = GpModel::new(hyper, prior, SHAPE, 256).unwrap();
    let n = rng.random_range(1..=50);
    let mut t = 0;
    for _ in 0..n {
        t += rng.random_range(0..3);
        m.push(Observation {
            slot: t,
            beam: rng.random_range(0..64),
            rsrp_db: rng.random_range(-60.0..10.0),
        })
        .unwrap();
    }
    m
}

struct Dense {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn dense_posterior(m: &GpModel, t: u64, jitter: f64) -> Dense {
    let h = &m.hyper;
    let buf: Vec<Observation> = m.buffer().iter().copied().collect();
    let n = buf.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        let v = kernel(h, buf[i].slot, buf[i].beam, buf[j].slot, buf[j].beam);
        if i == j {
            v + h.noise_std * h.noise_std + jitter
        } else {
            v
        }
    });
    let k_inv = k.try_inverse().expect("invertible");
    let ks = DMatrix::from_fn(n, 64, |i, b| kernel(h, buf[i].slot, buf[i].beam, t, b));
    let kss = DMatrix::from_fn(64, 64, |a, b| kernel(h, t, a, t, b));
    let r = DVector::from_fn(n, |i, _| buf[i].rsrp_db - m.prior_mean.at(buf[i].beam));
    let prior = DVector::from_fn(64, |b, _| m.prior_mean.at(b));
    Dense {
        mean: prior + ks.transpose() * &k_inv * r,
        cov: kss - ks.transpose() * &k_inv * ks,
    }
}

#[test]
fn posterior_matches_dense_conditioning() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = random_model(&mut rng);
        let t = m.latest_slot().unwrap() + rng.random_range(0..4);
        let p = m.posterior_at_slot(t).unwrap();
        let d = dense_posterior(&m, t, p.jitter);
        worst = worst.max((&p.mean - &d.mean).amax());
        let mut dc = d.cov.clone();
        for i in 0..64 {
            dc[(i, i)] = dc[(i, i)].max(0.0);
        }
        worst = worst.max((&p.cov - &dc).amax());
    }
    assert!(worst <= 1e-8, "max abs deviation {worst:e}");
}

#[test]
fn likelihood_matches_dense_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let m = random_model(&mut rng);
        let h = &m.hyper;
        let buf: Vec<Observation> = m.buffer().iter().copied().collect();
        let n = buf.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            kernel(h, buf[i].slot, buf[i].beam, buf[j].slot, buf[j].beam)
                + if i == j {
                    h.noise_std * h.noise_std
                } else {
                    0.0
                }
        });
        let r = DVector::from_fn(n, |i, _| buf[i].rsrp_db - m.prior_mean.at(buf[i].beam));
        let det = k.clone().determinant();
        let quad = (r.transpose() * k.try_inverse().unwrap() * &r)[(0, 0)];
        let expected =
            -0.5 * quad - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let got = m.log_marginal_likelihood().unwrap();
        assert!(
            (got - expected).abs() <= 1e-7 * expected.abs().max(1.0),
            "{got} vs {expected}"
        );
    }
}

/// Draws a sample path of the GP prior at the given inputs.
fn sample_prior(h: &Hyperparameters, inputs: &[(u64, usize)], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = inputs.len();
    let k = DMatrix::from_fn(n, n, |i, j| {
        kernel(h, inputs[i].0, inputs[i].1, inputs[j].0, inputs[j].1)
            + if i == j {
                h.noise_std * h.noise_std + 1e-9
            } else {
                0.0
            }
    });
    let l = k.cholesky().unwrap().unpack();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (l * z).iter().copied().collect()
}

#[test]
fn fit_recovers_time_scale() {
    let truth = Hyperparameters {
        time: beamtrack_core::gp::TimeKernelParams {
            theta1: 25.0,
            theta2: 5.0,
        },
        beam: beamtrack_core::gp::BeamKernelParams {
            nu: 1.5,
            metric: BeamIndexMetric {
                ell_h: 2.0,
                ell_v: 1.0,
            },
        },
        noise_std: 0.5,
    };
    let mut fitted = Vec::new();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        // two random beams per slot over 60 slots
        let inputs: Vec<(u64, usize)> = (0..120u64)
            .map(|i| (i / 2, rng.random_range(0..64)))
            .collect();
        let y = sample_prior(&truth, &inputs, &mut rng);
        let mut m = GpModel::new(
            Hyperparameters::initial(BeamIndexMetric::default()),
            PriorMean::default(),
            SHAPE,
            256,
        )
        .unwrap();
        for (&(slot, beam), &rsrp_db) in inputs.iter().zip(&y) {
            m.push(Observation {
                slot,
                beam,
                rsrp_db,
            })
            .unwrap();
        }
        let out = m.fit_hyperparameters(&FitConfig::default(), &mut rng);
        fitted.push(out.hyper.time.theta2);
    }
    fitted.sort_by(f64::total_cmp);
    let median = 0.5 * (fitted[9] + fitted[10]);
    assert!(
        (2.5..=10.0).contains(&median),
        "median θ₂ {median}, all {fitted:?}"
    );
}
