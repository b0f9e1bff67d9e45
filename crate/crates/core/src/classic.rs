//! Plain forward Kalman filter, Rauch–Tung–Striebel smoother, marginal
//! log-likelihood, and the confidence-interval outlier flagging used as the
//! comparison baseline in the benchmark sweeps.

use alloc::vec::Vec;

use nalgebra::SVector;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::gaussian::{
    kalman_propagate, predictive_obs_params, symmetrize, update_with_loglik, GaussianBelief,
    StepModel,
};

/// Output of a forward pass: per-step filtered and one-step-ahead predicted
/// beliefs plus the accumulated marginal log-likelihood.
#[derive(Debug, Clone)]
pub struct KalmanRun<const N: usize> {
    pub filtered: Vec<GaussianBelief<N>>,
    pub predicted: Vec<GaussianBelief<N>>,
    pub loglik: f64,
}

/// Output of the backward pass.
#[derive(Debug, Clone)]
pub struct SmoothedRun<const N: usize> {
    pub smoothed: Vec<GaussianBelief<N>>,
}

fn check_lengths(ys: usize, steps: usize) -> Result<()> {
    if ys == 0 {
        return Err(Error::EmptySeries);
    }
    if ys != steps {
        return Err(Error::Dimension {
            what: "observations vs steps",
            expected: steps,
            got: ys,
        });
    }
    Ok(())
}

/// Forward Kalman filter over the whole series.
///
/// The first step's transition block is ignored: the supplied initial belief
/// is used directly as the first predicted law, and only the observation
/// block of `steps[0]` enters the first update.
pub fn kf_forward<const N: usize, const M: usize, D>(
    ys: &[SVector<f64, M>],
    steps: &[StepModel<N, M, D>],
    init: &GaussianBelief<N>,
) -> Result<KalmanRun<N>> {
    check_lengths(ys.len(), steps.len())?;
    let n = ys.len();
    let mut filtered = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    let mut loglik = 0.0;

    let mut prior = *init;
    for (k, (y, step)) in ys.iter().zip(steps).enumerate() {
        if k > 0 {
            prior = kalman_propagate(&filtered[k - 1], step);
        }
        let (post, step_loglik) = update_with_loglik(&prior, y, step).map_err(|e| e.at_step(k))?;
        loglik += step_loglik;
        predicted.push(prior);
        filtered.push(post);
    }

    Ok(KalmanRun {
        filtered,
        predicted,
        loglik,
    })
}

/// One backward RTS step: smooths the belief at step k given the smoothed
/// belief at k+1, the predicted belief at k+1, and the k+1 transition.
///
/// Shared by the classic smoother and the per-hypothesis mixture smoother.
pub(crate) fn rts_backward_step<const N: usize, const M: usize, D>(
    filtered: &GaussianBelief<N>,
    predicted_next: &GaussianBelief<N>,
    smoothed_next: &GaussianBelief<N>,
    step_next: &StepModel<N, M, D>,
) -> Result<GaussianBelief<N>> {
    let pred_chol = nalgebra::Cholesky::new(predicted_next.cov)
        .ok_or(Error::SingularCovariance { step: None })?;
    // G = Σ_f Aᵗ (Σ_pred)⁻¹, realized as a symmetric solve.
    let cross = filtered.cov * step_next.transition.transpose(); // N×N
    let gain = pred_chol.solve(&cross.transpose()).transpose();
    let mean = filtered.mean + gain * (smoothed_next.mean - predicted_next.mean);
    let mut cov =
        filtered.cov + gain * (smoothed_next.cov - predicted_next.cov) * gain.transpose();
    symmetrize(&mut cov);
    Ok(GaussianBelief { mean, cov })
}

/// Rauch–Tung–Striebel smoother over a completed forward run.
pub fn rts_smooth<const N: usize, const M: usize, D>(
    run: &KalmanRun<N>,
    steps: &[StepModel<N, M, D>],
) -> Result<SmoothedRun<N>> {
    let n = run.filtered.len();
    check_lengths(n, steps.len())?;
    if run.predicted.len() != n {
        return Err(Error::Dimension {
            what: "predicted vs filtered",
            expected: n,
            got: run.predicted.len(),
        });
    }
    let mut smoothed = run.filtered.clone();
    for k in (0..n.saturating_sub(1)).rev() {
        smoothed[k] = rts_backward_step(
            &run.filtered[k],
            &run.predicted[k + 1],
            &smoothed[k + 1],
            &steps[k + 1],
        )
        .map_err(|e| e.at_step(k + 1))?;
    }
    Ok(SmoothedRun { smoothed })
}

/// Baseline outlier flags for scalar observations: point k is flagged when
/// its innovation exceeds `q` predictive standard deviations. Flags are
/// computed from the one-step-ahead (causal) predictive distribution.
pub fn kf_outlier_flags<const N: usize, D>(
    ys: &[SVector<f64, 1>],
    steps: &[StepModel<N, 1, D>],
    init: &GaussianBelief<N>,
    q: f64,
) -> Result<Vec<bool>> {
    let run = kf_forward(ys, steps, init)?;
    Ok(ys
        .iter()
        .zip(run.predicted.iter().zip(steps))
        .map(|(y, (prior, step))| {
            let (mean, cov) = predictive_obs_params(prior, step);
            (y[0] - mean[0]).abs() > q * cov[(0, 0)].sqrt()
        })
        .collect())
}
