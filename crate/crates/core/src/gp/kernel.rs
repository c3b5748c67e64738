//! Product kernel over (slot, beam) inputs.

use libm::tgamma as gamma;
use serde::{Deserialize, Serialize};

use crate::beam_grid::{BeamCoord, BeamIndexMetric};

/// Squared-exponential kernel in time, `θ₁ exp(-((t - t') / θ₂)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeKernelParams {
    /// Output scale.
    pub theta1: f64,
    /// Length scale in slots; `1/θ₂` is the forgetting rate.
    pub theta2: f64,
}

impl TimeKernelParams {
    pub fn eval_lag(&self, lag: f64) -> f64 {
        let r = lag / self.theta2;
        self.theta1 * (-r * r).exp()
    }
}

pub fn time_kernel(params: &TimeKernelParams, t: u64, t_prime: u64) -> f64 {
    params.eval_lag(t as f64 - t_prime as f64)
}

/// Matérn kernel over beam-index distance. Unit variance; the output scale
/// lives in the time kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamKernelParams {
    pub nu: f64,
    pub metric: BeamIndexMetric,
}

pub fn beam_kernel(params: &BeamKernelParams, a: BeamCoord, b: BeamCoord) -> f64 {
    matern(params.nu, params.metric.distance(a, b))
}

/// Matérn correlation at distance `d` with smoothness `nu`.
///
/// Half-integer orders 1/2, 3/2 and 5/2 use their closed forms; every other
/// order goes through [`matern_bessel`].
pub fn matern(nu: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    if nu == 0.5 {
        (-d).exp()
    } else if nu == 1.5 {
        let x = 3f64.sqrt() * d;
        (1.0 + x) * (-x).exp()
    } else if nu == 2.5 {
        let x = 5f64.sqrt() * d;
        (1.0 + x + x * x / 3.0) * (-x).exp()
    } else {
        matern_bessel(nu, d)
    }
}

/// `(2^{1-ν} / Γ(ν)) x^ν K_ν(x)` with `x = sqrt(2ν) d`.
pub fn matern_bessel(nu: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    let x = (2.0 * nu).sqrt() * d;
    let value = 2f64.powf(1.0 - nu) / gamma(nu) * x.powf(nu) * bessel_k(nu, x);
    value.clamp(0.0, 1.0)
}

/// Modified Bessel function of the second kind, `K_ν(x)` for `x > 0`.
///
/// Trapezoid rule on `∫₀^∞ exp(-x cosh u) cosh(ν u) du`; the integrand is
/// analytic in a strip of half-width π/2, so the error with step 1/8 is far
/// below double precision.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    const STEP: f64 = 0.125;
    let integrand =
        |u: f64| (-x * u.cosh() + nu.abs() * u).exp() * 0.5 * (1.0 + (-2.0 * nu.abs() * u).exp());
    let mut sum = 0.5 * integrand(0.0);
    let mut k = 1;
    loop {
        let u = k as f64 * STEP;
        let term = integrand(u);
        sum += term;
        // the exponent is decreasing once x sinh u > ν
        if term <= sum * 1e-18 && x * u.sinh() > nu.abs() {
            break;
        }
        k += 1;
        if k > 100_000 {
            break;
        }
    }
    sum * STEP
}
