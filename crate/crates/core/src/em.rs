//! Closed-form EM calibration of the three individual parameters
//! θ = (initial mean, inlier probability, long-term mean).
//!
//! Conditional on an indicator path, every filtered mean is an affine
//! function of (μ₁, m) whose coefficients evolve by simple recursions along
//! the filter — see [`LinearCoeffs`]. The E-step therefore reduces to five
//! weighted sums over (path, step) pairs, and the M-step solves a 2×2
//! normal equation plus a posterior count for p. No numerical optimizer is
//! involved anywhere.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::filter::{kfino_filter, Tracking};
use crate::wow::{build_steps, WowParams};

/// Coefficients expressing a path-conditional filtered (or predicted) mean
/// as an affine function of the calibrated means: mean = a·μ₁ + b·m + c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl LinearCoeffs {
    /// The triple of the initial mean itself: (1, 0, 0).
    pub fn initial() -> Self {
        LinearCoeffs {
            a: 1.0,
            b: 0.0,
            c: 0.0,
        }
    }

    /// Evaluates the affine form.
    pub fn reconstruct(&self, mu1: f64, m: f64) -> f64 {
        self.a * mu1 + self.b * m + self.c
    }

    /// Propagation through one OU transition with decay α = e^{−a·dt}:
    /// mean' = α·mean + (1−α)·m.
    pub(crate) fn decayed(self, alpha: f64) -> Self {
        LinearCoeffs {
            a: alpha * self.a,
            b: alpha * self.b + (1.0 - alpha),
            c: alpha * self.c,
        }
    }

    /// Update against an observation: the posterior mean shrinks towards
    /// the observation with gain Σ_pred/(Σ_pred + σ²_p).
    pub(crate) fn updated(self, sigma_pred: f64, sigma_p2: f64, y: f64) -> Self {
        let shrink = sigma_p2 / (sigma_pred + sigma_p2);
        LinearCoeffs {
            a: shrink * self.a,
            b: shrink * self.b,
            c: shrink * self.c + (1.0 - shrink) * y,
        }
    }
}

/// Coefficient triples after the first observation: the outlier branch
/// keeps the initial mean (1, 0, 0); the inlier branch shrinks it towards
/// y₁ with gain Σ₁/(Σ₁ + σ²_p).
pub fn coeffs_init(y1: f64, sigma1: f64, sigma_p2: f64) -> (LinearCoeffs, LinearCoeffs) {
    let outlier = LinearCoeffs::initial();
    let inlier = outlier.updated(sigma1, sigma_p2, y1);
    (outlier, inlier)
}

/// Propagates a triple over an elapsed time `dt` under reversion rate
/// `rate`.
pub fn coeffs_propagate(lc: LinearCoeffs, rate: f64, dt: f64) -> LinearCoeffs {
    lc.decayed((-rate * dt).exp())
}

/// Updates a triple against observation `y` given the predicted variance.
pub fn coeffs_update(lc: LinearCoeffs, sigma_pred: f64, sigma_p2: f64, y: f64) -> LinearCoeffs {
    lc.updated(sigma_pred, sigma_p2, y)
}

/// The three calibrated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmTheta {
    pub init_mean: f64,
    pub p_inlier: f64,
    pub long_term_mean: f64,
}

impl EmTheta {
    fn max_delta(&self, other: &EmTheta) -> f64 {
        (self.init_mean - other.init_mean)
            .abs()
            .max((self.long_term_mean - other.long_term_mean).abs())
            .max((self.p_inlier - other.p_inlier).abs())
    }
}

/// EM driver configuration.
#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Joint stopping tolerance on (μ₁, m) in kg and on p absolutely.
    pub param_tol: f64,
    /// p is clamped to [ε, 1−ε] so no branch ever gets exactly zero prior.
    pub p_clamp: f64,
    pub beam: usize,
    pub exact_prefix: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 100,
            param_tol: 1e-4,
            p_clamp: 1e-6,
            beam: 1024,
            exact_prefix: 0,
        }
    }
}

/// The five weighted sums of the M-step quadratic plus the posterior
/// expected inlier count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EmSuffStats {
    pub y_a: f64,
    pub a: f64,
    pub c: f64,
    pub y_b: f64,
    pub b: f64,
    pub z_mass: f64,
}

/// Fit trace: the θ trajectory (θ₀ first), the data log-likelihood at each
/// recorded θ, the convergence flag, and the iterations where the M-step
/// fell back to the previous means.
#[derive(Debug, Clone)]
pub struct EmResult {
    pub thetas: Vec<EmTheta>,
    pub logliks: Vec<f64>,
    pub converged: bool,
    pub fallback_iters: Vec<usize>,
}

impl EmResult {
    pub fn final_theta(&self) -> &EmTheta {
        self.thetas.last().expect("trajectory is never empty")
    }
}

/// E-step: filters with history and coefficient tracking at θ, then
/// accumulates the sufficient statistics over surviving paths. The marginal
/// posterior of "step k+1 is an inlier given the prefix" is approximated by
/// the summed final-beam weights of hypotheses extending that prefix with an
/// inlier — exact under full enumeration.
///
/// Returns the statistics together with the data log-likelihood at θ.
pub fn em_e_step(
    ys: &[f64],
    times: &[f64],
    params: &WowParams,
    theta: &EmTheta,
    beam: usize,
    exact_prefix: usize,
) -> Result<(EmSuffStats, f64)> {
    if ys.len() != times.len() {
        return Err(Error::Dimension {
            what: "observations vs times",
            expected: times.len(),
            got: ys.len(),
        });
    }
    let params = params.with_theta(theta);
    let steps = build_steps(&params, times)?;
    let init = params.init_belief();
    let run = kfino_filter(
        &crate::scalar_obs(ys),
        &steps,
        &init,
        beam,
        exact_prefix,
        Tracking::FULL,
    )?;

    let sigma_p2 = params.obs_noise_var;
    let mut stats = EmSuffStats::default();
    for h in &run.final_set.hypotheses {
        let w = h.log_weight.exp();
        let records = h.history().ok_or(Error::HistoryRequired)?;
        for (k, rec) in records.iter().enumerate() {
            if !rec.inlier {
                continue;
            }
            let lc = rec.pred_coeffs.ok_or(Error::HistoryRequired)?;
            let denom = rec.predicted.cov[(0, 0)] + sigma_p2;
            let resid = ys[k] - lc.c;
            stats.y_a += w * lc.a * resid / denom;
            stats.a += w * lc.a * lc.a / denom;
            stats.c += w * lc.a * lc.b / denom;
            stats.y_b += w * lc.b * resid / denom;
            stats.b += w * lc.b * lc.b / denom;
            stats.z_mass += w;
        }
    }
    Ok((stats, run.loglik))
}

/// M-step: p ← clamped posterior inlier fraction, (μ₁, m) ← the closed-form
/// solution of the 2×2 normal equations.
///
/// Fails with `SingularMStep` when the normal equations are numerically
/// singular (for example when no path puts mass on the long-term mean, so
/// B = C = 0); the caller is expected to keep the previous means.
pub fn em_m_step(stats: &EmSuffStats, n: usize, p_clamp: f64) -> Result<EmTheta> {
    if n == 0 {
        return Err(Error::EmptySeries);
    }
    let p = (stats.z_mass / n as f64).clamp(p_clamp, 1.0 - p_clamp);
    let det = stats.c * stats.c - stats.a * stats.b;
    if det.abs() <= 1e-12 * (stats.a * stats.b) {
        return Err(Error::SingularMStep);
    }
    Ok(EmTheta {
        init_mean: (stats.c * stats.y_b - stats.b * stats.y_a) / det,
        p_inlier: p,
        long_term_mean: (stats.y_a * stats.c - stats.a * stats.y_b) / det,
    })
}

/// Applies the documented fallback after a singular M-step: p still updates
/// from the posterior count; μ₁ updates alone when it remains identified
/// (B = C = 0 with A > 0); m keeps its previous value.
fn m_step_fallback(stats: &EmSuffStats, n: usize, p_clamp: f64, prev: &EmTheta) -> EmTheta {
    let p = (stats.z_mass / n as f64).clamp(p_clamp, 1.0 - p_clamp);
    let init_mean = if stats.b == 0.0 && stats.c == 0.0 && stats.a > 0.0 {
        stats.y_a / stats.a
    } else {
        prev.init_mean
    };
    EmTheta {
        init_mean,
        p_inlier: p,
        long_term_mean: prev.long_term_mean,
    }
}

/// Alternates E and M steps from θ₀ until the largest parameter change
/// drops below `param_tol` or the iteration budget runs out. The trajectory
/// records every visited θ with its log-likelihood (so `max_iters = 0`
/// yields the single entry (θ₀, L(θ₀))).
pub fn em_fit(
    ys: &[f64],
    times: &[f64],
    params: &WowParams,
    theta0: &EmTheta,
    config: &EmConfig,
) -> Result<EmResult> {
    let in_support = |v: f64| v > params.outlier_min && v < params.outlier_max;
    if !in_support(theta0.init_mean) || !in_support(theta0.long_term_mean) {
        return Err(Error::InvalidParameter(String::from(
            "initial means must lie inside the outlier support interval",
        )));
    }
    if !(0.0..=1.0).contains(&theta0.p_inlier) {
        return Err(Error::InvalidParameter(String::from(
            "initial inlier probability must lie in [0, 1]",
        )));
    }

    let n = ys.len();
    let mut thetas = Vec::with_capacity(config.max_iters + 1);
    let mut logliks = Vec::with_capacity(config.max_iters + 1);
    let mut fallback_iters = Vec::new();
    let mut theta = *theta0;
    let mut converged = false;

    for iter in 0..=config.max_iters {
        let (stats, loglik) =
            em_e_step(ys, times, params, &theta, config.beam, config.exact_prefix)?;
        thetas.push(theta);
        logliks.push(loglik);
        if converged || iter == config.max_iters {
            break;
        }
        let next = match em_m_step(&stats, n, config.p_clamp) {
            Ok(t) => t,
            Err(Error::SingularMStep) => {
                fallback_iters.push(iter);
                m_step_fallback(&stats, n, config.p_clamp, &theta)
            }
            Err(e) => return Err(e),
        };
        if theta.max_delta(&next) < config.param_tol {
            converged = true;
        }
        theta = next;
    }

    Ok(EmResult {
        thetas,
        logliks,
        converged,
        fallback_iters,
    })
}
