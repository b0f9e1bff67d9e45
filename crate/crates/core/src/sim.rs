//! Synthetic data generation: Poisson observation times, exact OU path
//! simulation, and impulse corruption.
//!
//! Every generator takes an explicit seed and derives its own ChaCha
//! stream, so the three stages are mutually independent yet jointly
//! reproducible from a single seed. Identical seeds give bit-identical
//! output.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::wow::{ou_transition, WowParams};

const TIMES_STREAM: u64 = 1;
const PATH_STREAM: u64 = 2;
const CORRUPT_STREAM: u64 = 3;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stable derivation of per-replicate seeds from a master seed
/// (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// One simulated series: observation times, the hidden weight path, the
/// true inlier indicators, and the observed (possibly corrupted) values.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub times: Vec<f64>,
    pub hidden: Vec<f64>,
    /// true = the observation is a genuine measurement.
    pub inlier: Vec<bool>,
    pub observed: Vec<f64>,
    pub seed: u64,
}

/// Homogeneous Poisson event times on (0, horizon], by cumulative
/// exponential inter-arrivals. A zero-event draw returns an empty vector.
pub fn sample_times(rate: f64, horizon: f64, seed: u64) -> Result<Vec<f64>> {
    if !(rate > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "rate and horizon must be positive, got rate={rate}, horizon={horizon}"
        )));
    }
    let mut rng = stream_rng(seed, TIMES_STREAM);
    let exp = Exp::new(rate).expect("positive rate");
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(&mut rng);
        if t > horizon {
            break;
        }
        times.push(t);
    }
    Ok(times)
}

/// Simulates the hidden OU path at the given times: X₁ ~ N(μ₁, Σ₁), then
/// the exact AR transition of [`ou_transition`] over each gap (no Euler
/// scheme). An empty time grid yields an empty path.
pub fn simulate_ou(params: &WowParams, times: &[f64], seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = stream_rng(seed, PATH_STREAM);
    let mut path = Vec::with_capacity(times.len());
    for (k, _) in times.iter().enumerate() {
        let noise: f64 = StandardNormal.sample(&mut rng);
        let x = if k == 0 {
            params.init_mean + params.init_var.sqrt() * noise
        } else {
            let (a, b, q) = ou_transition(params, times[k] - times[k - 1])?;
            a * path[k - 1] + b + q.sqrt() * noise
        };
        path.push(x);
    }
    Ok(path)
}

/// Applies impulse corruption: each point is a genuine measurement
/// (x + Gaussian noise) with probability p, otherwise an independent draw
/// from the trapezoidal outlier density.
pub fn corrupt(hidden: &[f64], params: &WowParams, seed: u64) -> Result<(Vec<f64>, Vec<bool>)> {
    params.validate()?;
    let trapezoid = params.trapezoid()?;
    let obs_sd = params.obs_noise_var.sqrt();
    let mut rng = stream_rng(seed, CORRUPT_STREAM);
    let mut observed = Vec::with_capacity(hidden.len());
    let mut inlier = Vec::with_capacity(hidden.len());
    for &x in hidden {
        let is_inlier = rng.random::<f64>() < params.p_inlier;
        if is_inlier {
            let noise: f64 = StandardNormal.sample(&mut rng);
            observed.push(x + obs_sd * noise);
        } else {
            observed.push(trapezoid.sample(rng.random::<f64>()));
        }
        inlier.push(is_inlier);
    }
    Ok((observed, inlier))
}

/// Full pipeline: times, hidden path, corruption.
pub fn simulate_series(
    params: &WowParams,
    rate: f64,
    horizon: f64,
    seed: u64,
) -> Result<SyntheticSeries> {
    let times = sample_times(rate, horizon, seed)?;
    let hidden = simulate_ou(params, &times, seed)?;
    let (observed, inlier) = corrupt(&hidden, params, seed)?;
    Ok(SyntheticSeries {
        times,
        hidden,
        inlier,
        observed,
        seed,
    })
}
