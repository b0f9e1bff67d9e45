//! Mixture filtering over outlier-indicator paths.
//!
//! Conditioning on the binary indicator path (inlier/outlier per step) makes
//! the model exactly linear-Gaussian, so the filtering posterior is a finite
//! Gaussian mixture with one component per path. Each component is a
//! [`Hypothesis`]; the normalized collection is a [`HypothesisSet`]. One
//! step doubles every hypothesis into an outlier child (propagation only,
//! weighted by the outlier density) and an inlier child (propagation plus
//! Kalman update, weighted by the Gaussian predictive density), then
//! renormalizes. Exact filtering enumerates all `2^N` paths; the truncated
//! filter keeps the highest-weight `beam` hypotheses after each step.
//!
//! All weights and conditional likelihoods live in log space: the raw
//! products underflow after a few dozen steps.

use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::{SMatrix, SVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::classic::rts_backward_step;
use crate::em::LinearCoeffs;
use crate::error::{Error, Result};
use crate::gaussian::{
    kalman_propagate, kalman_update, log_gaussian_pdf, predictive_obs_params, symmetrize,
    update_with_loglik, GaussianBelief, StepModel,
};
use crate::numeric::log_sum_exp_by;

/// Hard cap on the series length accepted by [`kfino_exact`].
pub const EXACT_MAX_STEPS: usize = 25;

/// Log-weight gap below the heaviest survivor at which a truncated
/// hypothesis is numerically indistinguishable from zero: e⁻⁶⁰ ≈ 9e−27, so
/// even 2²⁰ such components together perturb any mixture statistic by less
/// than one double-precision ulp.
const NEGLIGIBLE_LOG_GAP: f64 = 60.0;

/// What each hypothesis records as the filter advances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tracking {
    /// Keep per-step beliefs and indicators (required for smoothing and EM).
    pub history: bool,
    /// Carry the linear coefficients of the filtered mean in (mu1, m)
    /// through the recursion (required for EM; scalar models only).
    pub coeffs: bool,
}

impl Tracking {
    pub const NONE: Tracking = Tracking {
        history: false,
        coeffs: false,
    };
    pub const HISTORY: Tracking = Tracking {
        history: true,
        coeffs: false,
    };
    pub const FULL: Tracking = Tracking {
        history: true,
        coeffs: true,
    };
}

/// Per-step record kept by a hypothesis when history tracking is enabled.
#[derive(Debug, Clone)]
pub struct StepRecord<const N: usize> {
    /// Indicator consumed at this step (true = inlier branch).
    pub inlier: bool,
    /// Belief after propagation, before any update (at the first step: the
    /// initial belief).
    pub predicted: GaussianBelief<N>,
    /// Belief after the step (equals `predicted` on the outlier branch).
    pub filtered: GaussianBelief<N>,
    /// Propagated coefficient triple at this step, when coefficient
    /// tracking is on. Pairs with `predicted.cov` in the EM sums.
    pub pred_coeffs: Option<LinearCoeffs>,
    /// Coefficient triple of the filtered mean after this step.
    pub coeffs: Option<LinearCoeffs>,
}

#[derive(Debug)]
struct HistoryNode<const N: usize> {
    record: StepRecord<N>,
    prev: Option<Arc<HistoryNode<N>>>,
}

/// One indicator-path component of the posterior mixture.
///
/// The struct is kept lean: wide beams stream millions of these per step,
/// so everything optional lives behind the shared history list.
#[derive(Debug, Clone)]
pub struct Hypothesis<const N: usize> {
    /// Filtered belief conditional on the path.
    pub belief: GaussianBelief<N>,
    /// Creation-order id; strictly increasing within a set and the
    /// deterministic truncation tie-breaker.
    pub id: u64,
    /// Normalized log posterior weight of the path.
    pub log_weight: f64,
    /// Log conditional likelihood of the observations given the path.
    pub log_cond_lik: f64,
    history: Option<Arc<HistoryNode<N>>>,
    /// Last indicator on this path (true = inlier).
    pub last_inlier: bool,
}

impl<const N: usize> Hypothesis<N> {
    /// Per-step records in chronological order, when history tracking was
    /// enabled.
    pub fn history(&self) -> Option<Vec<StepRecord<N>>> {
        let mut node = self.history.as_ref()?;
        let mut out = Vec::new();
        loop {
            out.push(node.record.clone());
            match &node.prev {
                Some(prev) => node = prev,
                None => break,
            }
        }
        out.reverse();
        Some(out)
    }

    /// Full indicator path, when history tracking was enabled.
    pub fn indicator_path(&self) -> Option<Vec<bool>> {
        self.history()
            .map(|recs| recs.iter().map(|r| r.inlier).collect())
    }

    /// Current coefficient triple of the filtered mean, when coefficient
    /// tracking was enabled.
    pub fn coeffs(&self) -> Option<LinearCoeffs> {
        self.history.as_ref().and_then(|node| node.record.coeffs)
    }
}

/// The normalized hypothesis mixture after some number of steps.
#[derive(Debug, Clone)]
pub struct HypothesisSet<const N: usize> {
    pub hypotheses: Vec<Hypothesis<N>>,
    /// Running sum of the per-step log normalization masses; after step k
    /// this equals the log marginal likelihood of y_1..y_k (exactly under
    /// full enumeration, as a beam approximation otherwise).
    pub log_norm_accum: f64,
    /// Number of observations consumed.
    pub step_count: usize,
    next_id: u64,
}

impl<const N: usize> HypothesisSet<N> {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }
}

/// Per-step posterior estimators: mixture mean, inlier posterior
/// probability with its 0.5-threshold classification, mixture covariance,
/// and the ±2σ band.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorSummary<const N: usize> {
    pub xhat: SVector<f64, N>,
    pub inlier_prob: f64,
    pub inlier_map: bool,
    pub sigma_hat: SMatrix<f64, N, N>,
    pub band_low: SVector<f64, N>,
    pub band_high: SVector<f64, N>,
}

/// Output of a filtering pass.
#[derive(Debug, Clone)]
pub struct FilterRun<const N: usize> {
    /// One summary per observation, taken after that step's truncation.
    pub summaries: Vec<PosteriorSummary<N>>,
    pub final_set: HypothesisSet<N>,
    /// Accumulated log marginal likelihood (`log_norm_accum` of the final
    /// set).
    pub loglik: f64,
}

fn push_history<const N: usize>(
    prev: &Option<Arc<HistoryNode<N>>>,
    track: bool,
    record: StepRecord<N>,
) -> Option<Arc<HistoryNode<N>>> {
    track.then(|| {
        Arc::new(HistoryNode {
            record,
            prev: prev.clone(),
        })
    })
}

/// Normalizes log-weights in place and returns the log normalization mass.
fn normalize<const N: usize>(hypotheses: &mut [Hypothesis<N>]) -> f64 {
    let log_mass = log_sum_exp_by(hypotheses, |h| h.log_weight);
    for h in hypotheses.iter_mut() {
        h.log_weight -= log_mass;
    }
    log_mass
}

/// Starts a hypothesis set from the first observation: an inlier hypothesis
/// (initial belief updated by y, weighted by p·Gaussian predictive) and an
/// outlier hypothesis (initial belief untouched, weighted by (1−p)·outlier
/// density). Children with zero mass are not materialized.
pub fn kfino_init<const N: usize, const M: usize, D: crate::gaussian::OutlierDensity<M>>(
    y: &SVector<f64, M>,
    step: &StepModel<N, M, D>,
    init: &GaussianBelief<N>,
    tracking: Tracking,
) -> Result<HypothesisSet<N>> {
    if tracking.coeffs && (N != 1 || M != 1) {
        return Err(Error::InvalidParameter(alloc::string::String::from(
            "coefficient tracking requires a scalar model",
        )));
    }
    if tracking.coeffs && !tracking.history {
        return Err(Error::InvalidParameter(alloc::string::String::from(
            "coefficient tracking requires history tracking",
        )));
    }
    let (pred_mean, pred_cov) = predictive_obs_params(init, step);
    let gauss_ll = log_gaussian_pdf(y, &pred_mean, &pred_cov).map_err(|e| e.at_step(0))?;
    let outlier_ll = step.outlier.logpdf(y);

    let init_coeffs = tracking
        .coeffs
        .then(|| crate::em::coeffs_init(y[0], init.cov[(0, 0)], step.obs_noise[(0, 0)]));

    let mut hypotheses = Vec::with_capacity(2);
    let mut next_id = 0u64;
    let lw0 = (1.0 - step.p_inlier).ln() + outlier_ll;
    if lw0.is_finite() {
        hypotheses.push(Hypothesis {
            id: next_id,
            last_inlier: false,
            log_weight: lw0,
            log_cond_lik: outlier_ll,
            belief: *init,
            history: push_history(
                &None,
                tracking.history,
                StepRecord {
                    inlier: false,
                    predicted: *init,
                    filtered: *init,
                    pred_coeffs: tracking.coeffs.then(LinearCoeffs::initial),
                    coeffs: init_coeffs.map(|(outlier, _)| outlier),
                },
            ),
        });
        next_id += 1;
    }
    let lw1 = step.p_inlier.ln() + gauss_ll;
    if lw1.is_finite() {
        let updated = kalman_update(init, y, step).map_err(|e| e.at_step(0))?;
        hypotheses.push(Hypothesis {
            id: next_id,
            last_inlier: true,
            log_weight: lw1,
            log_cond_lik: gauss_ll,
            belief: updated,
            history: push_history(
                &None,
                tracking.history,
                StepRecord {
                    inlier: true,
                    predicted: *init,
                    filtered: updated,
                    pred_coeffs: tracking.coeffs.then(LinearCoeffs::initial),
                    coeffs: init_coeffs.map(|(_, inlier)| inlier),
                },
            ),
        });
        next_id += 1;
    }
    if hypotheses.is_empty() {
        return Err(Error::DegenerateWeights { step: 0 });
    }
    let log_mass = normalize(&mut hypotheses);
    Ok(HypothesisSet {
        hypotheses,
        log_norm_accum: log_mass,
        step_count: 1,
        next_id,
    })
}

/// Doubles the mixture into `scratch` and renormalizes, leaving the new
/// generation in `set`. The caller owns the scratch buffer so repeated
/// stepping can ping-pong two allocations instead of reallocating hundreds
/// of megabytes per step at wide beams.
fn kfino_step_into<const N: usize, const M: usize, D: crate::gaussian::OutlierDensity<M>>(
    set: &mut HypothesisSet<N>,
    y: &SVector<f64, M>,
    step: &StepModel<N, M, D>,
    scratch: &mut Vec<Hypothesis<N>>,
) -> Result<()> {
    let step_idx = set.step_count;
    let outlier_ll = step.outlier.logpdf(y);
    let log_p = step.p_inlier.ln();
    let log_q = (1.0 - step.p_inlier).ln();

    scratch.clear();
    scratch.reserve(2 * set.hypotheses.len());
    let mut next_id = set.next_id;
    for parent in &set.hypotheses {
        let predicted = kalman_propagate(&parent.belief, step);
        let track = parent.history.is_some();
        let pred_coeffs = parent
            .coeffs()
            .map(|c| c.decayed(step.transition[(0, 0)]));

        let lw0 = parent.log_weight + log_q + outlier_ll;
        if lw0.is_finite() {
            scratch.push(Hypothesis {
                id: next_id,
                last_inlier: false,
                log_weight: lw0,
                log_cond_lik: parent.log_cond_lik + outlier_ll,
                belief: predicted,
                history: push_history(
                    &parent.history,
                    track,
                    StepRecord {
                        inlier: false,
                        predicted,
                        filtered: predicted,
                        pred_coeffs,
                        coeffs: pred_coeffs,
                    },
                ),
            });
            next_id += 1;
        }

        let (updated, gauss_ll) =
            update_with_loglik(&predicted, y, step).map_err(|e| e.at_step(step_idx))?;
        let lw1 = parent.log_weight + log_p + gauss_ll;
        if lw1.is_finite() {
            let upd_coeffs = pred_coeffs
                .map(|c| c.updated(predicted.cov[(0, 0)], step.obs_noise[(0, 0)], y[0]));
            scratch.push(Hypothesis {
                id: next_id,
                last_inlier: true,
                log_weight: lw1,
                log_cond_lik: parent.log_cond_lik + gauss_ll,
                belief: updated,
                history: push_history(
                    &parent.history,
                    track,
                    StepRecord {
                        inlier: true,
                        predicted,
                        filtered: updated,
                        pred_coeffs,
                        coeffs: upd_coeffs,
                    },
                ),
            });
            next_id += 1;
        }
    }

    if scratch.is_empty() {
        return Err(Error::DegenerateWeights { step: step_idx });
    }
    let log_mass = normalize(scratch);
    core::mem::swap(&mut set.hypotheses, scratch);
    set.log_norm_accum += log_mass;
    set.step_count += 1;
    set.next_id = next_id;
    Ok(())
}

/// Advances the mixture by one observation, doubling every hypothesis into
/// its outlier and inlier children and renormalizing.
pub fn kfino_step<const N: usize, const M: usize, D: crate::gaussian::OutlierDensity<M>>(
    mut set: HypothesisSet<N>,
    y: &SVector<f64, M>,
    step: &StepModel<N, M, D>,
) -> Result<HypothesisSet<N>> {
    let mut scratch = Vec::new();
    kfino_step_into(&mut set, y, step, &mut scratch)?;
    Ok(set)
}

/// Keeps the `beam` highest-weight hypotheses (ties broken towards smaller
/// id) and renormalizes the survivors. `log_norm_accum` is unchanged: the
/// discarded mass is simply dropped.
///
/// Survivors more than [`NEGLIGIBLE_LOG_GAP`] below the heaviest one are
/// dropped as well: their joint contribution to any downstream statistic is
/// below one ulp, and carrying them would dominate the cost of wide beams.
pub fn truncate<const N: usize>(mut set: HypothesisSet<N>, beam: usize) -> HypothesisSet<N> {
    debug_assert!(beam >= 1);
    if set.hypotheses.len() <= beam {
        return set;
    }
    // Rank (weight desc, id asc) on a lightweight key vector, then drop
    // losers with a stable in-place retain. This avoids shuffling whole
    // hypothesis structs and keeps ids in increasing order for free.
    let rank = |a: &(f64, u64), b: &(f64, u64)| a.0.total_cmp(&b.0).reverse().then(a.1.cmp(&b.1));
    let mut keys: Vec<(f64, u64)> = set
        .hypotheses
        .iter()
        .map(|h| (h.log_weight, h.id))
        .collect();
    let (_, cutoff, _) = keys.select_nth_unstable_by(beam - 1, rank);
    let cutoff = *cutoff;
    let heaviest = keys[..beam]
        .iter()
        .map(|k| k.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = heaviest - NEGLIGIBLE_LOG_GAP;
    set.hypotheses.retain(|h| {
        h.log_weight >= floor
            && rank(&(h.log_weight, h.id), &cutoff) != core::cmp::Ordering::Greater
    });
    normalize(&mut set.hypotheses);
    set
}

fn mixture_summary<const N: usize>(
    count: usize,
    weight: impl Fn(usize) -> f64,
    belief: impl Fn(usize) -> GaussianBelief<N>,
    inlier: impl Fn(usize) -> bool,
) -> PosteriorSummary<N> {
    let mut xhat = SVector::<f64, N>::zeros();
    let mut inlier_prob = 0.0;
    for i in 0..count {
        let w = weight(i);
        xhat += belief(i).mean * w;
        if inlier(i) {
            inlier_prob += w;
        }
    }
    // Centered second pass avoids the catastrophic cancellation of the raw
    // second-moment formula.
    let mut sigma_hat = SMatrix::<f64, N, N>::zeros();
    for i in 0..count {
        let b = belief(i);
        let centered = b.mean - xhat;
        sigma_hat += (b.cov + centered * centered.transpose()) * weight(i);
    }
    symmetrize(&mut sigma_hat);
    let inlier_prob = inlier_prob.clamp(0.0, 1.0);
    let mut band_low = xhat;
    let mut band_high = xhat;
    for i in 0..N {
        let sd = sigma_hat[(i, i)].max(0.0).sqrt();
        band_low[i] -= 2.0 * sd;
        band_high[i] += 2.0 * sd;
    }
    PosteriorSummary {
        xhat,
        inlier_prob,
        inlier_map: inlier_prob > 0.5,
        sigma_hat,
        band_low,
        band_high,
    }
}

/// Posterior estimators of a normalized set: mixture mean, probability that
/// the current observation is an inlier, its MAP classification, and the
/// mixture covariance (law of total variance).
pub fn summarize<const N: usize>(set: &HypothesisSet<N>) -> PosteriorSummary<N> {
    mixture_summary(
        set.hypotheses.len(),
        |i| set.hypotheses[i].log_weight.exp(),
        |i| set.hypotheses[i].belief,
        |i| set.hypotheses[i].last_inlier,
    )
}

/// Runs the truncated filter: init, then one doubling step per observation,
/// truncating to `beam` hypotheses after every step past `exact_prefix`.
///
/// A per-step [`PosteriorSummary`] is emitted after each (possibly
/// truncated) step; the returned log-likelihood is the accumulated log
/// normalization mass.
pub fn kfino_filter<const N: usize, const M: usize, D: crate::gaussian::OutlierDensity<M>>(
    ys: &[SVector<f64, M>],
    steps: &[StepModel<N, M, D>],
    init: &GaussianBelief<N>,
    beam: usize,
    exact_prefix: usize,
    tracking: Tracking,
) -> Result<FilterRun<N>> {
    if beam < 2 {
        return Err(Error::InvalidParameter(alloc::string::String::from(
            "beam must be at least 2",
        )));
    }
    if ys.is_empty() {
        return Err(Error::EmptySeries);
    }
    if ys.len() != steps.len() {
        return Err(Error::Dimension {
            what: "observations vs steps",
            expected: steps.len(),
            got: ys.len(),
        });
    }

    let mut set = kfino_init(&ys[0], &steps[0], init, tracking)?;
    let mut summaries = Vec::with_capacity(ys.len());
    summaries.push(summarize(&set));
    let mut scratch = Vec::new();
    for (k, (y, step)) in ys.iter().zip(steps).enumerate().skip(1) {
        kfino_step_into(&mut set, y, step, &mut scratch)?;
        if k + 1 > exact_prefix {
            set = truncate(set, beam);
        }
        summaries.push(summarize(&set));
    }
    let loglik = set.log_norm_accum;
    Ok(FilterRun {
        summaries,
        final_set: set,
        loglik,
    })
}

/// Full path enumeration without truncation; the reference the truncated
/// filter is tested against. Guarded to short series — the mixture has
/// `2^N` components.
pub fn kfino_exact<const N: usize, const M: usize, D: crate::gaussian::OutlierDensity<M>>(
    ys: &[SVector<f64, M>],
    steps: &[StepModel<N, M, D>],
    init: &GaussianBelief<N>,
    tracking: Tracking,
) -> Result<FilterRun<N>> {
    if ys.len() > EXACT_MAX_STEPS {
        return Err(Error::ExactSizeExceeded {
            len: ys.len(),
            max: EXACT_MAX_STEPS,
        });
    }
    if ys.is_empty() {
        return Err(Error::EmptySeries);
    }
    kfino_filter(ys, steps, init, 1usize << ys.len(), ys.len(), tracking)
}

/// Mixture smoothing: the RTS backward recursion applied independently to
/// each surviving hypothesis's recorded belief sequence, mixed with the
/// final forward weights. Requires history tracking during filtering.
pub fn kfino_smooth<const N: usize, const M: usize, D>(
    set: &HypothesisSet<N>,
    steps: &[StepModel<N, M, D>],
) -> Result<Vec<PosteriorSummary<N>>> {
    let n = set.step_count;
    if steps.len() != n {
        return Err(Error::Dimension {
            what: "steps vs consumed observations",
            expected: n,
            got: steps.len(),
        });
    }

    let mut weights = Vec::with_capacity(set.hypotheses.len());
    let mut indicators: Vec<Vec<bool>> = Vec::with_capacity(set.hypotheses.len());
    let mut smoothed: Vec<Vec<GaussianBelief<N>>> = Vec::with_capacity(set.hypotheses.len());
    for h in &set.hypotheses {
        let records = h.history().ok_or(Error::HistoryRequired)?;
        debug_assert_eq!(records.len(), n);
        let mut beliefs: Vec<GaussianBelief<N>> = records.iter().map(|r| r.filtered).collect();
        for k in (0..n.saturating_sub(1)).rev() {
            beliefs[k] = rts_backward_step(
                &records[k].filtered,
                &records[k + 1].predicted,
                &beliefs[k + 1],
                &steps[k + 1],
            )
            .map_err(|e| e.at_step(k + 1))?;
        }
        weights.push(h.log_weight.exp());
        indicators.push(records.iter().map(|r| r.inlier).collect());
        smoothed.push(beliefs);
    }

    Ok((0..n)
        .map(|k| {
            mixture_summary(
                weights.len(),
                |i| weights[i],
                |i| smoothed[i][k],
                |i| indicators[i][k],
            )
        })
        .collect())
}
