//! Surface reconstruction for the sub-sampling baselines. Only diagnostic:
//! the baselines select among measured beams, not from the surface.

use crate::beam_grid::{BeamIndexMetric, GridShape};
use crate::channel::Observation;
use crate::error::{Error, Result};
use crate::gp::{BeamKernelParams, GpModel, Hyperparameters, PriorMean, TimeKernelParams};

/// One-dimensional interpolant through `(xs[i], ys[i])`, `xs` strictly increasing.
/// Natural cubic spline with four or more knots, piecewise linear with two or
/// three, constant with one.
#[derive(Debug, Clone)]
pub struct Interpolant1d {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots; empty for the linear/constant cases.
    m: Vec<f64>,
}

impl Interpolant1d {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "knots must be strictly increasing".into(),
            ));
        }
        let m = if xs.len() >= 4 {
            natural_second_derivatives(&xs, &ys)
        } else {
            Vec::new()
        };
        Ok(Self { xs, ys, m })
    }

    pub fn is_cubic(&self) -> bool {
        !self.m.is_empty()
    }

    /// Evaluates the interpolant; outside the knot range the end segment is extended.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 {
            return self.ys[0];
        }
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        if self.m.is_empty() {
            return a * y0 + b * y1;
        }
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }
}

/// Tridiagonal solve for the natural spline (zero curvature at both ends).
fn natural_second_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let c = h1 / 6.0;
        let d = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
        let denom = b - a * c_prime[i - 1];
        c_prime[i] = c / denom;
        d_prime[i] = (d - a * d_prime[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - c_prime[i] * m[i + 1];
    }
    m
}

/// Tensor-product interpolation of values measured on the full rows `rows`
/// × columns `cols`; `values[r][c]` belongs to `(cols[c], rows[r])`.
/// Interpolates along azimuth within each row, then along elevation.
/// Returns the surface over the full grid in flat-index order.
pub fn bivariate_spline(
    shape: GridShape,
    cols: &[usize],
    rows: &[usize],
    values: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if values.len() != rows.len() || values.iter().any(|r| r.len() != cols.len()) {
        return Err(Error::DimensionMismatch {
            expected: rows.len() * cols.len(),
            got: values.iter().map(Vec::len).sum(),
        });
    }
    let xs: Vec<f64> = cols.iter().map(|&c| c as f64).collect();
    let along_h: Vec<Vec<f64>> = values
        .iter()
        .map(|row| {
            let f = Interpolant1d::new(xs.clone(), row.clone())?;
            Ok((0..shape.n_azimuth).map(|h| f.eval(h as f64)).collect())
        })
        .collect::<Result<_>>()?;
    let vs: Vec<f64> = rows.iter().map(|&r| r as f64).collect();
    let mut surface = vec![0.0; shape.len()];
    for h in 0..shape.n_azimuth {
        let f = Interpolant1d::new(vs.clone(), along_h.iter().map(|row| row[h]).collect())?;
        for v in 0..shape.n_elevation {
            surface[v * shape.n_azimuth + h] = f.eval(v as f64);
        }
    }
    Ok(surface)
}

/// Posterior mean of a beam-only Matérn-3/2 GP conditioned on one slot's
/// reports. The prior mean is the sample mean, the output scale the sample
/// variance (at least 1 dB²).
pub fn spatial_gpr_mean(
    shape: GridShape,
    metric: BeamIndexMetric,
    noise_std: f64,
    observations: &[Observation],
) -> Result<Vec<f64>> {
    if observations.is_empty() {
        return Err(Error::InvalidParameter(
            "no observations to regress on".into(),
        ));
    }
    let n = observations.len() as f64;
    let mean = observations.iter().map(|o| o.rsrp_db).sum::<f64>() / n;
    let var = observations
        .iter()
        .map(|o| (o.rsrp_db - mean).powi(2))
        .sum::<f64>()
        / n;
    let hyper = Hyperparameters {
        time: TimeKernelParams {
            theta1: var.max(1.0),
            theta2: 1.0,
        },
        beam: BeamKernelParams { nu: 1.5, metric },
        noise_std,
    };
    let mut gp = GpModel::new(hyper, PriorMean::Constant(mean), shape, observations.len())?;
    gp.extend(observations.iter().map(|o| Observation { slot: 0, ..*o }))?;
    Ok(gp.posterior_at_slot(0)?.mean.iter().copied().collect())
}
