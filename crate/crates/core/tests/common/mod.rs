//! Independent scalar oracles used by the integration suites.
//!
//! Nothing here calls into the filtering implementation: the conditioning
//! oracle works on the dense joint Gaussian of (states, observations), and
//! the enumeration oracle replays each indicator path with its own
//! conjugate-normal algebra. Both are deliberately written in the most
//! direct textbook form available so they stay independent of the library's
//! computational choices (log-space weights, Cholesky solves, step fusion).

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub const LN_TAU: f64 = 1.837877066409345483560659472811235;

/// Scalar per-step parameters in plain form.
#[derive(Debug, Clone, Copy)]
pub struct OracleStep {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub c: f64,
    pub d: f64,
    pub r: f64,
}

/// Marginals of every state after conditioning the dense joint Gaussian of
/// (X_1..X_N, selected Y_k) on the selected observations, plus the log
/// density of those observations. `use_obs[k]` marks Y_k as observed.
pub fn joint_conditioned(
    steps: &[OracleStep],
    mu1: f64,
    sigma1: f64,
    ys: &[f64],
    use_obs: &[bool],
) -> (Vec<(f64, f64)>, f64) {
    let n = steps.len();
    assert_eq!(ys.len(), n);
    assert_eq!(use_obs.len(), n);

    // State means and covariances of the joint prior.
    let mut mean_x = vec![0.0; n];
    let mut var_x = vec![0.0; n];
    mean_x[0] = mu1;
    var_x[0] = sigma1;
    for k in 1..n {
        mean_x[k] = steps[k].a * mean_x[k - 1] + steps[k].b;
        var_x[k] = steps[k].a * steps[k].a * var_x[k - 1] + steps[k].q;
    }
    let mut cov_xx = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut cross = var_x[j];
        cov_xx[(j, j)] = var_x[j];
        for k in (j + 1)..n {
            cross *= steps[k].a;
            cov_xx[(j, k)] = cross;
            cov_xx[(k, j)] = cross;
        }
    }

    let observed: Vec<usize> = (0..n).filter(|&k| use_obs[k]).collect();
    let m = observed.len();
    if m == 0 {
        return (
            (0..n).map(|k| (mean_x[k], var_x[k])).collect(),
            0.0,
        );
    }

    let mut mean_y = DVector::<f64>::zeros(m);
    let mut cov_yy = DMatrix::<f64>::zeros(m, m);
    let mut cov_xy = DMatrix::<f64>::zeros(n, m);
    for (i, &ki) in observed.iter().enumerate() {
        mean_y[i] = steps[ki].c * mean_x[ki] + steps[ki].d;
        for (j, &kj) in observed.iter().enumerate() {
            cov_yy[(i, j)] = steps[ki].c * steps[kj].c * cov_xx[(ki, kj)];
            if i == j {
                cov_yy[(i, j)] += steps[ki].r;
            }
        }
        for x in 0..n {
            cov_xy[(x, i)] = steps[ki].c * cov_xx[(x, ki)];
        }
    }

    let resid = DVector::from_iterator(m, observed.iter().map(|&k| ys[k])) - &mean_y;
    let chol = cov_yy.clone().cholesky().expect("oracle innovation SPD");
    let solved = chol.solve(&resid);
    let logdet: f64 = (0..m).map(|i| 2.0 * chol.l_dirty()[(i, i)].ln()).sum();
    let loglik = -0.5 * (m as f64 * LN_TAU + logdet + resid.dot(&solved));

    let gain = chol.solve(&cov_xy.transpose()).transpose(); // n×m
    let post_mean = DVector::from_row_slice(&mean_x) + &gain * resid;
    let post_cov = cov_xx - gain * cov_xy.transpose();

    (
        (0..n).map(|k| (post_mean[k], post_cov[(k, k)])).collect(),
        loglik,
    )
}

/// Everything the enumeration oracle knows about one indicator path.
#[derive(Debug, Clone)]
pub struct PathEval {
    pub z: Vec<bool>,
    /// log P(Z = z) under the Bernoulli prior.
    pub log_prior: f64,
    /// log p(y | Z = z).
    pub log_cond_lik: f64,
    /// Normalized log posterior weight of the path.
    pub log_weight: f64,
    /// Filtered (mean, var) after each step.
    pub filtered: Vec<(f64, f64)>,
    /// Predicted (mean, var) before each step's update (step 1: the prior).
    pub predicted: Vec<(f64, f64)>,
}

/// Replays one indicator path with standalone scalar conjugate-normal
/// algebra: inlier steps update with the Gaussian predictive likelihood,
/// outlier steps keep the prediction and weigh in the outlier density.
pub fn eval_path(
    steps: &[OracleStep],
    mu1: f64,
    sigma1: f64,
    p: f64,
    outlier_logpdf: &dyn Fn(f64) -> f64,
    ys: &[f64],
    z: &[bool],
) -> PathEval {
    let n = steps.len();
    let mut log_prior = 0.0;
    let mut log_cond_lik = 0.0;
    let mut filtered = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    let (mut mean, mut var) = (mu1, sigma1);
    for k in 0..n {
        if k > 0 {
            mean = steps[k].a * mean + steps[k].b;
            var = steps[k].a * steps[k].a * var + steps[k].q;
        }
        predicted.push((mean, var));
        if z[k] {
            log_prior += p.ln();
            let pred_mean = steps[k].c * mean + steps[k].d;
            let s = steps[k].c * steps[k].c * var + steps[k].r;
            let resid = ys[k] - pred_mean;
            log_cond_lik += -0.5 * (LN_TAU + s.ln() + resid * resid / s);
            let gain = var * steps[k].c / s;
            mean += gain * resid;
            var *= 1.0 - gain * steps[k].c;
        } else {
            log_prior += (1.0 - p).ln();
            log_cond_lik += outlier_logpdf(ys[k]);
        }
        filtered.push((mean, var));
    }
    PathEval {
        z: z.to_vec(),
        log_prior,
        log_cond_lik,
        log_weight: f64::NAN, // filled by enumerate_paths
        filtered,
        predicted,
    }
}

/// Enumerates all 2^N indicator paths and normalizes their posterior
/// weights. Paths with zero prior or zero likelihood keep −∞ weights.
pub fn enumerate_paths(
    steps: &[OracleStep],
    mu1: f64,
    sigma1: f64,
    p: f64,
    outlier_logpdf: &dyn Fn(f64) -> f64,
    ys: &[f64],
) -> Vec<PathEval> {
    let n = steps.len();
    assert!(n <= 20, "enumeration oracle capped at 2^20 paths");
    let mut paths = Vec::with_capacity(1 << n);
    for bits in 0..(1u32 << n) {
        let z: Vec<bool> = (0..n).map(|k| bits >> k & 1 == 1).collect();
        paths.push(eval_path(steps, mu1, sigma1, p, outlier_logpdf, ys, &z));
    }
    let joint: Vec<f64> = paths.iter().map(|p| p.log_prior + p.log_cond_lik).collect();
    let total = log_sum_exp(&joint);
    for (path, lw) in paths.iter_mut().zip(joint) {
        path.log_weight = lw - total;
    }
    paths
}

/// Log of the total likelihood Σ_z P(Z = z) · ℓ_z by direct enumeration.
pub fn enumeration_loglik(
    steps: &[OracleStep],
    mu1: f64,
    sigma1: f64,
    p: f64,
    outlier_logpdf: &dyn Fn(f64) -> f64,
    ys: &[f64],
) -> f64 {
    let joint: Vec<f64> = enumerate_paths(steps, mu1, sigma1, p, outlier_logpdf, ys)
        .iter()
        .map(|p| p.log_prior + p.log_cond_lik)
        .collect();
    log_sum_exp(&joint)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Extracts the scalar plain-form parameters from built step models.
pub fn to_oracle_steps<D>(steps: &[kfino_core::StepModel<1, 1, D>]) -> Vec<OracleStep> {
    steps
        .iter()
        .map(|s| OracleStep {
            a: s.transition[(0, 0)],
            b: s.drift[0],
            q: s.process_noise[(0, 0)],
            c: s.obs_map[(0, 0)],
            d: s.obs_offset[0],
            r: s.obs_noise[(0, 0)],
        })
        .collect()
}
