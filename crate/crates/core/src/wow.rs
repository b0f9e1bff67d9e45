//! The walk-over-weighing model: an Ornstein–Uhlenbeck weight process
//! discretized exactly on irregular timestamps, a trapezoidal outlier
//! density that encodes the scale's tendency to overestimate, and the
//! builder producing per-step models from observation times.
//!
//! Units are days (time) and kg (weight).

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianBelief, OutlierDensity, StepModel};

/// Model parameters. The defaults of the field crew: `reversion_rate` and
/// `diffusion_var` are per day, variances in kg².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WowParams {
    /// Mean-reversion rate of the weight process (1/day).
    pub reversion_rate: f64,
    /// Long-term mean weight the process reverts to (kg).
    pub long_term_mean: f64,
    /// Diffusion variance of the weight process (kg²/day).
    pub diffusion_var: f64,
    /// Measurement noise variance of a good weighing (kg²).
    pub obs_noise_var: f64,
    /// Probability that a weighing is a genuine measurement.
    pub p_inlier: f64,
    /// Initial weight mean (kg).
    pub init_mean: f64,
    /// Initial weight variance (kg²).
    pub init_var: f64,
    /// Lower edge of the outlier support (kg).
    pub outlier_min: f64,
    /// Upper edge of the outlier support (kg).
    pub outlier_max: f64,
}

impl WowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reversion_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reversion rate must be positive, got {}",
                self.reversion_rate
            )));
        }
        if !(self.diffusion_var > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diffusion variance must be positive, got {}",
                self.diffusion_var
            )));
        }
        if !(self.obs_noise_var >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "observation noise variance must be nonnegative, got {}",
                self.obs_noise_var
            )));
        }
        if !(0.0..=1.0).contains(&self.p_inlier) {
            return Err(Error::InvalidParameter(format!(
                "inlier probability must lie in [0, 1], got {}",
                self.p_inlier
            )));
        }
        if !(self.init_var > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "initial variance must be positive, got {}",
                self.init_var
            )));
        }
        if !(self.outlier_min < self.outlier_max) {
            return Err(Error::InvalidParameter(format!(
                "outlier support must satisfy min < max, got [{}, {}]",
                self.outlier_min, self.outlier_max
            )));
        }
        Ok(())
    }

    /// The initial state law N(init_mean, init_var).
    pub fn init_belief(&self) -> GaussianBelief<1> {
        GaussianBelief {
            mean: SVector::<f64, 1>::new(self.init_mean),
            cov: SMatrix::<f64, 1, 1>::new(self.init_var),
        }
    }

    /// Replaces the three individually calibrated parameters.
    pub fn with_theta(&self, theta: &crate::em::EmTheta) -> WowParams {
        WowParams {
            init_mean: theta.init_mean,
            p_inlier: theta.p_inlier,
            long_term_mean: theta.long_term_mean,
            ..*self
        }
    }

    pub fn trapezoid(&self) -> Result<Trapezoid> {
        Trapezoid::new(self.outlier_min, self.outlier_max)
    }
}

/// Exact discretization of the OU transition over an elapsed time `dt`:
/// X' | X ~ N(A·X + b, Q) with A = e^{−a·dt}, b = m(1 − A),
/// Q = σ²/(2a)·(1 − e^{−2a·dt}).
pub fn ou_transition(params: &WowParams, dt: f64) -> Result<(f64, f64, f64)> {
    if dt < 0.0 {
        return Err(Error::NegativeTimeStep);
    }
    let a = params.reversion_rate;
    let decay = (-a * dt).exp();
    let b = params.long_term_mean * (1.0 - decay);
    let q = params.diffusion_var / (2.0 * a) * (1.0 - (-2.0 * a * dt).exp());
    Ok((decay, b, q))
}

/// Trapezoidal outlier density on [min, max] with φ(max) = 5·φ(min): bad
/// weighings overestimate, so mass increases linearly towards the top of
/// the range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trapezoid {
    pub min: f64,
    pub max: f64,
}

impl Trapezoid {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min < max) {
            return Err(Error::InvalidParameter(format!(
                "trapezoid requires min < max, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max })
    }

    /// φ(y) = 2/(6L) + 8(y − min)/(6L²) on [min, max], with L = max − min.
    pub fn pdf(&self, y: f64) -> f64 {
        if y < self.min || y > self.max {
            return 0.0;
        }
        let len = self.max - self.min;
        2.0 / (6.0 * len) + 8.0 * (y - self.min) / (6.0 * len * len)
    }

    pub fn logpdf(&self, y: f64) -> f64 {
        let p = self.pdf(y);
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Inverse-CDF transform of u ∈ [0, 1): the CDF in the rescaled
    /// coordinate s = (y − min)/L is s(1 + 2s)/3, inverted by the positive
    /// root s = (−1 + √(1 + 24u))/4.
    pub fn sample(&self, u: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&u));
        let s = (-1.0 + (1.0 + 24.0 * u).sqrt()) / 4.0;
        self.min + (self.max - self.min) * s
    }
}

impl OutlierDensity<1> for Trapezoid {
    fn logpdf(&self, y: &SVector<f64, 1>) -> f64 {
        Trapezoid::logpdf(self, y[0])
    }
    fn support(&self) -> Option<(f64, f64)> {
        Some((self.min, self.max))
    }
}

/// Builds the per-step models for a sequence of strictly increasing
/// observation times. The first step carries only the observation block
/// (the initial belief replaces its transition); subsequent steps use the
/// exact OU discretization over each time gap.
pub fn build_steps(params: &WowParams, times: &[f64]) -> Result<Vec<StepModel<1, 1, Trapezoid>>> {
    params.validate()?;
    if times.is_empty() {
        return Err(Error::EmptySeries);
    }
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::TimeOrder { index: i + 1 });
        }
    }

    // One validated prototype; later steps only swap the transition block.
    let first = StepModel::new(
        SMatrix::<f64, 1, 1>::new(1.0),
        SVector::<f64, 1>::zeros(),
        SMatrix::<f64, 1, 1>::zeros(),
        SMatrix::<f64, 1, 1>::new(1.0),
        SVector::<f64, 1>::zeros(),
        SMatrix::<f64, 1, 1>::new(params.obs_noise_var),
        params.p_inlier,
        params.trapezoid()?,
    )?;

    let mut steps = Vec::with_capacity(times.len());
    steps.push(first);
    for k in 1..times.len() {
        let (a, b, q) = ou_transition(params, times[k] - times[k - 1])?;
        let step = steps[0].with_transition(
            SMatrix::<f64, 1, 1>::new(a),
            SVector::<f64, 1>::new(b),
            SMatrix::<f64, 1, 1>::new(q),
        )?;
        steps.push(step);
    }
    Ok(steps)
}

/// The fixed expert constants plus the synthetic-test individual values:
/// a = 0.001/day, σ²_m = 0.05 kg²/day, σ²_p = 5 kg², Σ₁ = 1 kg²,
/// μ₁ = 40 kg, m = 60 kg, support [10, 100] kg, p = 0.5.
impl Default for WowParams {
    fn default() -> Self {
        WowParams {
            reversion_rate: 0.001,
            long_term_mean: 60.0,
            diffusion_var: 0.05,
            obs_noise_var: 5.0,
            p_inlier: 0.5,
            init_mean: 40.0,
            init_var: 1.0,
            outlier_min: 10.0,
            outlier_max: 100.0,
        }
    }
}
