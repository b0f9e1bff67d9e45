//! Benchmark harness: per-path error and detection metrics, and the
//! parameter sweeps that summarize them as box-plot quantiles per method.
//!
//! Each sweep simulates `replicates` fresh series per grid value, runs the
//! requested methods with the true generating parameters, and reports
//! {min, q25, median, q75, max} of the per-replicate metric. Replicate i
//! reuses the same random stream at every grid value, so grid comparisons
//! are paired. Failed replicates are excluded from the quantiles and
//! surfaced through an excluded-count column instead of poisoning the
//! sweep.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::classic::{kf_forward, kf_outlier_flags};
use crate::error::{Error, Result};
use crate::filter::{kfino_filter, Tracking};
use crate::sim::{derive_seed, simulate_series};
use crate::wow::{build_steps, WowParams};

/// Per-path filtering error, as reported by the original experiments:
/// (1/N)·√(Σ |x − x̂|²). Note the 1/N sits outside the square root.
pub fn mse(hidden: &[f64], estimate: &[f64]) -> Result<f64> {
    if hidden.len() != estimate.len() {
        return Err(Error::Dimension {
            what: "hidden vs estimate",
            expected: hidden.len(),
            got: estimate.len(),
        });
    }
    if hidden.is_empty() {
        return Err(Error::EmptySeries);
    }
    let sumsq: f64 = hidden
        .iter()
        .zip(estimate)
        .map(|(x, xh)| (x - xh) * (x - xh))
        .sum();
    Ok(sumsq.sqrt() / hidden.len() as f64)
}

/// Fraction of points whose inlier/outlier classification matches truth.
pub fn accuracy(truth: &[bool], predicted: &[bool]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension {
            what: "truth vs predicted",
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptySeries);
    }
    let hits = truth
        .iter()
        .zip(predicted)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}

/// The parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    /// Truncation level κ: the filter runs with beam 2^κ and exact prefix κ.
    Kappa,
    /// Observation noise variance σ²_p (applied to generator and filter).
    ObsVar,
    /// Inlier probability p (applied to generator and filter).
    PInlier,
}

impl SweepVar {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVar::Kappa => "kappa",
            SweepVar::ObsVar => "sigma_p2",
            SweepVar::PInlier => "p",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Kfino,
    ClassicKalman,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Kfino => "kfino",
            Method::ClassicKalman => "kalman",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    Accuracy,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Accuracy => "accuracy",
        }
    }
}

/// Fixed experiment setup shared by all grid values.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub params: WowParams,
    /// Poisson observation rate (events per day).
    pub rate: f64,
    /// Simulation horizon (days).
    pub horizon: f64,
    pub replicates: usize,
    /// Beam and exact prefix used when the sweep variable is not κ.
    pub beam: usize,
    pub exact_prefix: usize,
    /// Confidence multiplier of the classic-Kalman outlier flags.
    pub ci_multiplier: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            params: WowParams::default(),
            rate: 1.0,
            horizon: 100.0,
            replicates: 100,
            beam: 1 << 10,
            exact_prefix: 10,
            ci_multiplier: 2.0,
            seed: 0,
        }
    }
}

/// One quantile row of the report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub value: f64,
    pub metric: Metric,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    /// Replicates excluded because the method failed on them.
    pub excluded: usize,
}

/// Box-plot statistics per (method, grid value, metric).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub var: SweepVar,
    pub replicates: usize,
    pub rows: Vec<SweepRow>,
}

/// Metrics of one method on one replicate.
#[derive(Debug, Clone, Copy)]
pub struct ReplicateMetrics {
    pub mse: f64,
    pub accuracy: f64,
}

fn sweep_instance(var: SweepVar, value: f64, cfg: &BenchConfig) -> (WowParams, usize, usize) {
    match var {
        SweepVar::Kappa => {
            let kappa = value as usize;
            (cfg.params, 1usize << kappa, kappa)
        }
        SweepVar::ObsVar => (
            WowParams {
                obs_noise_var: value,
                ..cfg.params
            },
            cfg.beam,
            cfg.exact_prefix,
        ),
        SweepVar::PInlier => (
            WowParams {
                p_inlier: value,
                ..cfg.params
            },
            cfg.beam,
            cfg.exact_prefix,
        ),
    }
}

/// Runs one method on one already-simulated series with known parameters.
pub fn run_method(
    method: Method,
    params: &WowParams,
    times: &[f64],
    hidden: &[f64],
    inlier: &[bool],
    observed: &[f64],
    beam: usize,
    exact_prefix: usize,
    ci_multiplier: f64,
) -> Result<ReplicateMetrics> {
    let steps = build_steps(params, times)?;
    let init = params.init_belief();
    let ys = crate::scalar_obs(observed);
    match method {
        Method::Kfino => {
            let run = kfino_filter(&ys, &steps, &init, beam, exact_prefix, Tracking::NONE)?;
            let xhat: Vec<f64> = run.summaries.iter().map(|s| s.xhat[0]).collect();
            let zmap: Vec<bool> = run.summaries.iter().map(|s| s.inlier_map).collect();
            Ok(ReplicateMetrics {
                mse: mse(hidden, &xhat)?,
                accuracy: accuracy(inlier, &zmap)?,
            })
        }
        Method::ClassicKalman => {
            let run = kf_forward(&ys, &steps, &init)?;
            let xhat: Vec<f64> = run.filtered.iter().map(|b| b.mean[0]).collect();
            let flags = kf_outlier_flags(&ys, &steps, &init, ci_multiplier)?;
            let zmap: Vec<bool> = flags.iter().map(|&f| !f).collect();
            Ok(ReplicateMetrics {
                mse: mse(hidden, &xhat)?,
                accuracy: accuracy(inlier, &zmap)?,
            })
        }
    }
}

fn run_replicate(
    var: SweepVar,
    value: f64,
    cfg: &BenchConfig,
    methods: &[Method],
    replicate: usize,
) -> Vec<Option<ReplicateMetrics>> {
    let (params, beam, exact_prefix) = sweep_instance(var, value, cfg);
    let seed = derive_seed(cfg.seed, replicate as u64);
    let series = match simulate_series(&params, cfg.rate, cfg.horizon, seed) {
        Ok(s) if !s.times.is_empty() => s,
        _ => return methods.iter().map(|_| None).collect(),
    };
    methods
        .iter()
        .map(|&m| {
            run_method(
                m,
                &params,
                &series.times,
                &series.hidden,
                &series.inlier,
                &series.observed,
                beam,
                exact_prefix,
                cfg.ci_multiplier,
            )
            .ok()
        })
        .collect()
}

/// Linear-interpolation quantile of a sorted slice (R type 7, the default
/// of the plotting stack the original box plots came from).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn quantile_row(
    method: Method,
    value: f64,
    metric: Metric,
    samples: &mut Vec<f64>,
    excluded: usize,
) -> SweepRow {
    samples.sort_by(f64::total_cmp);
    SweepRow {
        method,
        value,
        metric,
        min: quantile(samples, 0.0),
        q25: quantile(samples, 0.25),
        median: quantile(samples, 0.5),
        q75: quantile(samples, 0.75),
        max: quantile(samples, 1.0),
        excluded,
    }
}

/// Runs the sweep. Fully deterministic given (grid, config, seed); with the
/// `parallel` feature, replicates run on the rayon pool without changing
/// any result.
pub fn run_sweep(
    var: SweepVar,
    values: &[f64],
    cfg: &BenchConfig,
    methods: &[Method],
) -> Result<SweepReport> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidParameter(alloc::string::String::from(
            "replicates must be at least 1",
        )));
    }
    if values.is_empty() {
        return Err(Error::InvalidParameter(alloc::string::String::from(
            "sweep grid must not be empty",
        )));
    }
    let mut rows = Vec::with_capacity(values.len() * methods.len() * 2);
    for &value in values {
        let outcomes: Vec<Vec<Option<ReplicateMetrics>>> = {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..cfg.replicates)
                    .into_par_iter()
                    .map(|i| run_replicate(var, value, cfg, methods, i))
                    .collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..cfg.replicates)
                    .map(|i| run_replicate(var, value, cfg, methods, i))
                    .collect()
            }
        };
        for (mi, &method) in methods.iter().enumerate() {
            let mut mses = Vec::with_capacity(cfg.replicates);
            let mut accs = Vec::with_capacity(cfg.replicates);
            let mut excluded = 0usize;
            for rep in &outcomes {
                match rep[mi] {
                    Some(m) => {
                        mses.push(m.mse);
                        accs.push(m.accuracy);
                    }
                    None => excluded += 1,
                }
            }
            if mses.is_empty() {
                return Err(Error::DegenerateWeights { step: 0 });
            }
            rows.push(quantile_row(method, value, Metric::Mse, &mut mses, excluded));
            rows.push(quantile_row(
                method,
                value,
                Metric::Accuracy,
                &mut accs,
                excluded,
            ));
        }
    }
    Ok(SweepReport {
        var,
        replicates: cfg.replicates,
        rows,
    })
}
