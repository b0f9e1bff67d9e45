//! Dense small-dimension Gaussian primitives shared by every filter:
//! log-density evaluation and the Kalman propagation/update steps.
//!
//! State dimension `N` and observation dimension `M` are const generics;
//! everything is stack-allocated and intended for small dimensions. All
//! covariance handling goes through a symmetric Cholesky factorization —
//! innovation matrices are never inverted explicitly — and every produced
//! covariance is re-symmetrized to keep floating-point drift from breaking
//! the symmetry invariant.

use alloc::format;
use alloc::string::String;

use nalgebra::{Cholesky, SMatrix, SVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::numeric::LN_TAU;

/// Minimum allowed ratio between the extreme Cholesky pivots of an
/// innovation covariance before it is reported as singular.
const COND_FLOOR: f64 = 1e-12;

/// Symmetry tolerance used by the validating constructors.
const SYM_TOL: f64 = 1e-12;

/// Eigenvalue floor used by the PSD checks of the validating constructors.
const PSD_TOL: f64 = -1e-10;

pub(crate) fn symmetrize<const N: usize>(m: &mut SMatrix<f64, N, N>) {
    *m = (*m + m.transpose()) * 0.5;
}

fn check_symmetric_psd<const N: usize>(m: &SMatrix<f64, N, N>, what: &str) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    if asym >= SYM_TOL {
        return Err(Error::InvalidParameter(format!(
            "{what} is not symmetric (max asymmetry {asym:e})"
        )));
    }
    // λ_min(m) ≥ PSD_TOL ⟺ m − PSD_TOL·I is positive semi-definite, probed
    // through the Cholesky factorization of the shifted matrix.
    let shifted = m - SMatrix::<f64, N, N>::identity() * PSD_TOL;
    if Cholesky::new(shifted).is_none() {
        return Err(Error::InvalidParameter(format!(
            "{what} is not positive semi-definite"
        )));
    }
    Ok(())
}

/// A Gaussian law over the hidden state: mean vector plus a symmetric
/// positive semi-definite covariance matrix. This is the unit propagated by
/// every filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBelief<const N: usize> {
    pub mean: SVector<f64, N>,
    pub cov: SMatrix<f64, N, N>,
}

impl<const N: usize> GaussianBelief<N> {
    /// Builds a belief, validating symmetry and positive semi-definiteness
    /// of the covariance.
    pub fn new(mean: SVector<f64, N>, cov: SMatrix<f64, N, N>) -> Result<Self> {
        check_symmetric_psd(&cov, "belief covariance")?;
        Ok(Self { mean, cov })
    }
}

impl GaussianBelief<1> {
    /// Scalar convenience constructor.
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(SVector::<f64, 1>::new(mean), SMatrix::<f64, 1, 1>::new(var))
    }
}

/// Log-density of the outlier (impulse) observation distribution.
pub trait OutlierDensity<const M: usize> {
    fn logpdf(&self, y: &SVector<f64, M>) -> f64;

    /// Support bounds used by the construction-time normalization check.
    /// Only meaningful for one-dimensional densities.
    fn support(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Per-step model parameters: affine state transition `x' = T x + drift + w`
/// with `w ~ N(0, process_noise)`, affine observation map
/// `y = H x + obs_offset + v` with `v ~ N(0, obs_noise)`, the inlier
/// probability and the outlier density.
#[derive(Debug, Clone)]
pub struct StepModel<const N: usize, const M: usize, D> {
    pub transition: SMatrix<f64, N, N>,
    pub drift: SVector<f64, N>,
    pub process_noise: SMatrix<f64, N, N>,
    pub obs_map: SMatrix<f64, M, N>,
    pub obs_offset: SVector<f64, M>,
    pub obs_noise: SMatrix<f64, M, M>,
    pub p_inlier: f64,
    pub outlier: D,
}

impl<const N: usize, const M: usize, D: OutlierDensity<M>> StepModel<N, M, D> {
    /// Builds a step, validating that the noise covariances are symmetric
    /// PSD, that `p_inlier` lies in `[0, 1]`, and (for one-dimensional
    /// densities with known support) that the outlier density integrates to
    /// one within 1e-6.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        transition: SMatrix<f64, N, N>,
        drift: SVector<f64, N>,
        process_noise: SMatrix<f64, N, N>,
        obs_map: SMatrix<f64, M, N>,
        obs_offset: SVector<f64, M>,
        obs_noise: SMatrix<f64, M, M>,
        p_inlier: f64,
        outlier: D,
    ) -> Result<Self> {
        check_symmetric_psd(&process_noise, "process noise")?;
        check_symmetric_psd(&obs_noise, "observation noise")?;
        if !(0.0..=1.0).contains(&p_inlier) {
            return Err(Error::InvalidParameter(format!(
                "p_inlier must lie in [0, 1], got {p_inlier}"
            )));
        }
        check_density_normalized(&outlier)?;
        Ok(Self {
            transition,
            drift,
            process_noise,
            obs_map,
            obs_offset,
            obs_noise,
            p_inlier,
            outlier,
        })
    }

    /// Rebuilds this step with new transition parameters, revalidating only
    /// the process noise. Used by model builders that share one validated
    /// observation/outlier block across many steps.
    pub fn with_transition(
        &self,
        transition: SMatrix<f64, N, N>,
        drift: SVector<f64, N>,
        process_noise: SMatrix<f64, N, N>,
    ) -> Result<Self>
    where
        D: Clone,
    {
        check_symmetric_psd(&process_noise, "process noise")?;
        Ok(Self {
            transition,
            drift,
            process_noise,
            ..self.clone()
        })
    }
}

/// Composite-Simpson check that a 1-D outlier density integrates to one.
fn check_density_normalized<const M: usize, D: OutlierDensity<M>>(density: &D) -> Result<()> {
    if M != 1 {
        return Ok(());
    }
    let Some((lo, hi)) = density.support() else {
        return Ok(());
    };
    if !(hi > lo) {
        return Err(Error::InvalidParameter(String::from(
            "outlier density support must be a non-empty interval",
        )));
    }
    let n = 512usize; // even
    let h = (hi - lo) / n as f64;
    let eval = |x: f64| density.logpdf(&SVector::<f64, M>::from_element(x)).exp();
    let mut acc = eval(lo) + eval(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * eval(lo + i as f64 * h);
    }
    let integral = acc * h / 3.0;
    if (integral - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "outlier density integrates to {integral}, not 1"
        )));
    }
    Ok(())
}

/// Cholesky factorization of a covariance with a relative conditioning
/// guard on the pivots.
fn factor_covariance<const M: usize>(cov: &SMatrix<f64, M, M>) -> Result<Cholesky<f64, nalgebra::Const<M>>> {
    let chol =
        Cholesky::new(*cov).ok_or(Error::SingularCovariance { step: None })?;
    let l = chol.l_dirty();
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for i in 0..M {
        let d = l[(i, i)];
        if !d.is_finite() {
            return Err(Error::SingularCovariance { step: None });
        }
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmin * dmin <= COND_FLOOR * dmax * dmax {
        return Err(Error::SingularCovariance { step: None });
    }
    Ok(chol)
}

/// log φ_{mean,cov}(y), evaluated entirely in log space.
pub fn log_gaussian_pdf<const M: usize>(
    y: &SVector<f64, M>,
    mean: &SVector<f64, M>,
    cov: &SMatrix<f64, M, M>,
) -> Result<f64> {
    let chol = factor_covariance(cov)?;
    let resid = y - mean;
    let quad = resid.dot(&chol.solve(&resid));
    let mut logdet = 0.0;
    let l = chol.l_dirty();
    for i in 0..M {
        logdet += 2.0 * l[(i, i)].ln();
    }
    Ok(-0.5 * (M as f64 * LN_TAU + logdet + quad))
}

/// Propagation step: pushes a belief through the state transition.
///
/// mean' = T·mean + drift, cov' = T·cov·Tᵗ + Q.
pub fn kalman_propagate<const N: usize, const M: usize, D>(
    bel: &GaussianBelief<N>,
    step: &StepModel<N, M, D>,
) -> GaussianBelief<N> {
    let mean = step.transition * bel.mean + step.drift;
    let mut cov = step.transition * bel.cov * step.transition.transpose() + step.process_noise;
    symmetrize(&mut cov);
    GaussianBelief { mean, cov }
}

/// Parameters of the one-step-ahead observation distribution:
/// (H·mean + obs_offset, H·cov·Hᵗ + R).
pub fn predictive_obs_params<const N: usize, const M: usize, D>(
    bel: &GaussianBelief<N>,
    step: &StepModel<N, M, D>,
) -> (SVector<f64, M>, SMatrix<f64, M, M>) {
    let mean = step.obs_map * bel.mean + step.obs_offset;
    let mut cov = step.obs_map * bel.cov * step.obs_map.transpose() + step.obs_noise;
    symmetrize(&mut cov);
    (mean, cov)
}

/// Update step fused with the predictive log-density, sharing one
/// factorization of the innovation covariance. This is the hot path of the
/// mixture filter, where both quantities are needed per hypothesis.
pub(crate) fn update_with_loglik<const N: usize, const M: usize, D>(
    bel: &GaussianBelief<N>,
    y: &SVector<f64, M>,
    step: &StepModel<N, M, D>,
) -> Result<(GaussianBelief<N>, f64)> {
    let (pred_mean, innov_cov) = predictive_obs_params(bel, step);
    let chol = factor_covariance(&innov_cov)?;

    let resid = y - pred_mean;
    let quad = resid.dot(&chol.solve(&resid));
    let mut logdet = 0.0;
    let l = chol.l_dirty();
    for i in 0..M {
        logdet += 2.0 * l[(i, i)].ln();
    }
    let loglik = -0.5 * (M as f64 * LN_TAU + logdet + quad);

    let cross = bel.cov * step.obs_map.transpose(); // N×M
    let gain = chol.solve(&cross.transpose()).transpose(); // N×M
    let mean = bel.mean + gain * resid;
    let mut cov = (SMatrix::<f64, N, N>::identity() - gain * step.obs_map) * bel.cov;
    symmetrize(&mut cov);
    Ok((GaussianBelief { mean, cov }, loglik))
}

/// Update (correction) step: conditions a belief on an observation.
///
/// K = cov·Hᵗ(H·cov·Hᵗ + R)⁻¹, mean' = mean + K(y − H·mean − obs_offset),
/// cov' = (I − K·H)·cov, re-symmetrized.
pub fn kalman_update<const N: usize, const M: usize, D>(
    bel: &GaussianBelief<N>,
    y: &SVector<f64, M>,
    step: &StepModel<N, M, D>,
) -> Result<GaussianBelief<N>> {
    update_with_loglik(bel, y, step).map(|(belief, _)| belief)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Uniform density on [lo, hi]; test stand-in for the outlier law.
    #[derive(Debug, Clone, Copy)]
    pub(crate) struct Uniform {
        pub lo: f64,
        pub hi: f64,
    }

    impl OutlierDensity<1> for Uniform {
        fn logpdf(&self, y: &SVector<f64, 1>) -> f64 {
            if (self.lo..=self.hi).contains(&y[0]) {
                -(self.hi - self.lo).ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        fn support(&self) -> Option<(f64, f64)> {
            Some((self.lo, self.hi))
        }
    }

    fn scalar_step(a: f64, b: f64, q: f64, c: f64, d: f64, r: f64, p: f64) -> StepModel<1, 1, Uniform> {
        StepModel::new(
            SMatrix::<f64, 1, 1>::new(a),
            SVector::<f64, 1>::new(b),
            SMatrix::<f64, 1, 1>::new(q),
            SMatrix::<f64, 1, 1>::new(c),
            SVector::<f64, 1>::new(d),
            SMatrix::<f64, 1, 1>::new(r),
            p,
            Uniform { lo: 0.0, hi: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn log_pdf_standard_normal_at_origin() {
        let y = SVector::<f64, 1>::new(0.0);
        let v = log_gaussian_pdf(&y, &y, &SMatrix::<f64, 1, 1>::new(1.0)).unwrap();
        assert_relative_eq!(v, -0.5 * LN_TAU, max_relative = 1e-14);
    }

    #[test]
    fn log_pdf_matches_closed_form_at_mode() {
        // At the mode the log-density is -0.5 ln(2π·var).
        let y = SVector::<f64, 1>::new(40.0);
        let v = log_gaussian_pdf(&y, &y, &SMatrix::<f64, 1, 1>::new(6.0)).unwrap();
        assert_relative_eq!(v, -0.5 * (12.0 * core::f64::consts::PI).ln(), max_relative = 1e-14);
    }

    #[test]
    fn log_pdf_symmetric_around_mean() {
        let mean = SVector::<f64, 2>::new(1.0, -2.0);
        let cov = SMatrix::<f64, 2, 2>::new(2.0, 0.3, 0.3, 1.0);
        for delta in [
            SVector::<f64, 2>::new(0.7, 0.1),
            SVector::<f64, 2>::new(-1.3, 2.0),
        ] {
            let hi = log_gaussian_pdf(&(mean + delta), &mean, &cov).unwrap();
            let lo = log_gaussian_pdf(&(mean - delta), &mean, &cov).unwrap();
            assert_relative_eq!(hi, lo, max_relative = 1e-12);
        }
    }

    #[test]
    fn log_pdf_rejects_singular_covariance() {
        let y = SVector::<f64, 2>::zeros();
        let cov = SMatrix::<f64, 2, 2>::new(1.0, 1.0, 1.0, 1.0);
        assert!(matches!(
            log_gaussian_pdf(&y, &y, &cov),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn log_pdf_matches_grid_quadrature() {
        // ∫ exp(log φ) over ±10σ must be 1 within 1e-6 for scalar cases.
        let mean = SVector::<f64, 1>::new(3.0);
        let cov = SMatrix::<f64, 1, 1>::new(2.5);
        let sd = cov[(0, 0)].sqrt();
        let (lo, hi) = (mean[0] - 10.0 * sd, mean[0] + 10.0 * sd);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let f = |x: f64| {
            log_gaussian_pdf(&SVector::<f64, 1>::new(x), &mean, &cov)
                .unwrap()
                .exp()
        };
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
        }
        assert_relative_eq!(acc * h / 3.0, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn propagate_identity_dynamics() {
        let bel = GaussianBelief::scalar(0.0, 1.0).unwrap();
        let step = scalar_step(1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.5);
        let out = kalman_propagate(&bel, &step);
        assert_eq!(out.mean[0], 0.0);
        assert_eq!(out.cov[(0, 0)], 1.0);
    }

    #[test]
    fn propagate_scalar_affine() {
        let bel = GaussianBelief::scalar(40.0, 1.0).unwrap();
        let step = scalar_step(0.999, 0.06, 0.05, 1.0, 0.0, 1.0, 0.5);
        let out = kalman_propagate(&bel, &step);
        assert_relative_eq!(out.mean[0], 0.999 * 40.0 + 0.06, max_relative = 1e-15);
        assert_relative_eq!(out.cov[(0, 0)], 0.999 * 0.999 + 0.05, max_relative = 1e-15);
    }

    #[test]
    fn propagate_orthogonal_preserves_trace() {
        // Q = 0 and orthogonal transition leave tr(cov) unchanged.
        #[derive(Debug, Clone, Copy)]
        struct NoOutlier;
        impl OutlierDensity<2> for NoOutlier {
            fn logpdf(&self, _: &SVector<f64, 2>) -> f64 {
                f64::NEG_INFINITY
            }
        }
        let angle = 0.3f64;
        let rot = SMatrix::<f64, 2, 2>::new(angle.cos(), -angle.sin(), angle.sin(), angle.cos());
        let step = StepModel::new(
            rot,
            SVector::<f64, 2>::zeros(),
            SMatrix::<f64, 2, 2>::zeros(),
            SMatrix::<f64, 2, 2>::identity(),
            SVector::<f64, 2>::zeros(),
            SMatrix::<f64, 2, 2>::identity(),
            1.0,
            NoOutlier,
        )
        .unwrap();
        let bel = GaussianBelief::new(
            SVector::<f64, 2>::new(1.0, 2.0),
            SMatrix::<f64, 2, 2>::new(2.0, 0.5, 0.5, 1.0),
        )
        .unwrap();
        let out = kalman_propagate(&bel, &step);
        assert_relative_eq!(out.cov.trace(), bel.cov.trace(), max_relative = 1e-13);
    }

    #[test]
    fn update_conjugate_scalar() {
        let bel = GaussianBelief::scalar(0.0, 1.0).unwrap();
        let step = scalar_step(1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.5);
        let out = kalman_update(&bel, &SVector::<f64, 1>::new(2.0), &step).unwrap();
        assert_relative_eq!(out.mean[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(out.cov[(0, 0)], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn update_zero_innovation_keeps_mean() {
        let bel = GaussianBelief::scalar(7.0, 2.0).unwrap();
        let step = scalar_step(1.0, 0.0, 0.0, 1.0, 0.5, 3.0, 0.5);
        let y = SVector::<f64, 1>::new(1.0 * 7.0 + 0.5);
        let out = kalman_update(&bel, &y, &step).unwrap();
        assert_eq!(out.mean[0], 7.0);
    }

    #[test]
    fn update_uninformative_observation_limit() {
        let bel = GaussianBelief::scalar(7.0, 2.0).unwrap();
        let step = scalar_step(1.0, 0.0, 0.0, 1.0, 0.0, 1e12, 0.5);
        let out = kalman_update(&bel, &SVector::<f64, 1>::new(100.0), &step).unwrap();
        assert_relative_eq!(out.mean[0], 7.0, max_relative = 1e-6);
        assert_relative_eq!(out.cov[(0, 0)], 2.0, max_relative = 1e-6);
    }

    #[test]
    fn predictive_params_examples() {
        let bel = GaussianBelief::scalar(40.0, 1.0).unwrap();
        let step = scalar_step(1.0, 0.0, 0.0, 1.0, 0.0, 5.0, 0.5);
        let (m, s) = predictive_obs_params(&bel, &step);
        assert_eq!(m[0], 40.0);
        assert_eq!(s[(0, 0)], 6.0);

        // Zero observation map falls back to (offset, noise).
        let step = scalar_step(1.0, 0.0, 0.0, 0.0, 0.25, 5.0, 0.5);
        let (m, s) = predictive_obs_params(&bel, &step);
        assert_eq!(m[0], 0.25);
        assert_eq!(s[(0, 0)], 5.0);

        // Zero observation noise passes the state variance through.
        let step = scalar_step(1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5);
        let (m, s) = predictive_obs_params(&bel, &step);
        assert_eq!(m[0], 40.0);
        assert_eq!(s[(0, 0)], 1.0);
    }

    #[test]
    fn step_model_rejects_bad_inputs() {
        let mk = |q: f64, r: f64, p: f64, lo: f64, hi: f64| {
            StepModel::new(
                SMatrix::<f64, 1, 1>::new(1.0),
                SVector::<f64, 1>::zeros(),
                SMatrix::<f64, 1, 1>::new(q),
                SMatrix::<f64, 1, 1>::new(1.0),
                SVector::<f64, 1>::zeros(),
                SMatrix::<f64, 1, 1>::new(r),
                p,
                Uniform { lo, hi },
            )
        };
        assert!(mk(-1.0, 1.0, 0.5, 0.0, 1.0).is_err());
        assert!(mk(1.0, -1.0, 0.5, 0.0, 1.0).is_err());
        assert!(mk(1.0, 1.0, 1.5, 0.0, 1.0).is_err());
        // Density that integrates to 2 on its declared support.
        #[derive(Debug, Clone, Copy)]
        struct Double;
        impl OutlierDensity<1> for Double {
            fn logpdf(&self, _: &SVector<f64, 1>) -> f64 {
                2.0f64.ln()
            }
            fn support(&self) -> Option<(f64, f64)> {
                Some((0.0, 1.0))
            }
        }
        assert!(StepModel::new(
            SMatrix::<f64, 1, 1>::new(1.0),
            SVector::<f64, 1>::zeros(),
            SMatrix::<f64, 1, 1>::new(1.0),
            SMatrix::<f64, 1, 1>::new(1.0),
            SVector::<f64, 1>::zeros(),
            SMatrix::<f64, 1, 1>::new(1.0),
            0.5,
            Double,
        )
        .is_err());
    }

    proptest! {
        /// Joseph-form cross-check plus the information-gain ordering: for
        /// random strictly PD priors the simple-form posterior covariance
        /// matches (I−KC)Σ(I−KC)ᵗ + KRKᵗ, and prior − posterior stays PSD.
        #[test]
        fn update_joseph_form_and_psd(
            seed_vals in proptest::array::uniform4(-2.0f64..2.0),
            qd in 0.1f64..3.0,
            rd in 0.1f64..3.0,
            y0 in -5.0f64..5.0,
            y1 in -5.0f64..5.0,
        ) {
            #[derive(Debug, Clone, Copy)]
            struct NoOutlier;
            impl OutlierDensity<2> for NoOutlier {
                fn logpdf(&self, _: &SVector<f64, 2>) -> f64 { f64::NEG_INFINITY }
            }
            let a = SMatrix::<f64, 2, 2>::new(seed_vals[0], seed_vals[1], seed_vals[2], seed_vals[3]);
            let cov = a * a.transpose() + SMatrix::<f64, 2, 2>::identity() * 0.05;
            let bel = GaussianBelief::new(SVector::<f64, 2>::new(1.0, -1.0), cov).unwrap();
            let step = StepModel::new(
                SMatrix::<f64, 2, 2>::identity(),
                SVector::<f64, 2>::zeros(),
                SMatrix::<f64, 2, 2>::identity() * qd,
                SMatrix::<f64, 2, 2>::new(1.0, 0.2, -0.1, 0.8),
                SVector::<f64, 2>::zeros(),
                SMatrix::<f64, 2, 2>::identity() * rd,
                1.0,
                NoOutlier,
            ).unwrap();
            let y = SVector::<f64, 2>::new(y0, y1);
            let post = kalman_update(&bel, &y, &step).unwrap();

            // Recompute the gain independently for the Joseph form.
            let s = step.obs_map * bel.cov * step.obs_map.transpose() + step.obs_noise;
            let k = bel.cov * step.obs_map.transpose() * s.try_inverse().unwrap();
            let ikc = SMatrix::<f64, 2, 2>::identity() - k * step.obs_map;
            let joseph = ikc * bel.cov * ikc.transpose() + k * step.obs_noise * k.transpose();
            let scale = bel.cov.abs().max();
            prop_assert!((post.cov - joseph).abs().max() <= 1e-8 * scale);

            // Posterior covariance never exceeds the prior.
            let gain_psd = bel.cov - post.cov;
            for e in gain_psd.symmetric_eigenvalues().iter() {
                prop_assert!(*e >= -1e-10 * scale.max(1.0));
            }
            // Output covariance stays symmetric to tight tolerance.
            prop_assert!((post.cov - post.cov.transpose()).abs().max() < 1e-12);
        }
    }
}
