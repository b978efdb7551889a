//! Finite-dimensional Gaussian measures, covariance kernels and
//! conditioning on linear observations.

mod conditioning;
mod experiment;
mod kernel;

pub(crate) use conditioning::{functional_cross, functional_gram};
pub use conditioning::{gp_condition, Functional, GpPredictor, LinearObservation, MIN_SEPARATION};
pub use experiment::LinearGaussianExperiment;
pub use kernel::{se_functional_covariances, KernelKind, KernelModel, SeCovariances};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{check_symmetric_psd, default_jitter, psd_factor, symmetrize};
use crate::rng::{self, McRng};
use crate::{Error, Result};

/// Gaussian measure `N(mean, cov)` on `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianDensity {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianDensity {
    /// Validated constructor: `cov` must be `d x d`, symmetric to `1e-12`
    /// relative and PSD to `-1e-10 * lambda_max`.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDensity("mean has non-finite entries".into()));
        }
        check_symmetric_psd(&cov).map_err(|e| Error::InvalidDensity(e.to_string()))?;
        Ok(Self { mean, cov })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim),
        }
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, variance),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

fn check_linear_model(
    prior: &GaussianDensity,
    design: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    observation: &DVector<f64>,
) -> Result<()> {
    let d = prior.dim();
    let n = design.nrows();
    if design.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "design matrix has {} columns, prior dimension is {d}",
            design.ncols()
        )));
    }
    if noise_cov.nrows() != n || noise_cov.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "noise covariance is {}x{}, expected {n}x{n}",
            noise_cov.nrows(),
            noise_cov.ncols()
        )));
    }
    if observation.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "observation has length {}, expected {n}",
            observation.len()
        )));
    }
    Ok(())
}

/// Posterior of `x ~ prior` given `y = A x + noise`, `noise ~ N(0, noise_cov)`.
///
/// Uses the information form when both the noise and the prior covariance
/// are nonsingular and joint-Gaussian conditioning otherwise (zero noise
/// gets a diagonal jitter of `1e-10 * trace / n`).
pub fn conjugate_posterior(
    prior: &GaussianDensity,
    design: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    observation: &DVector<f64>,
) -> Result<GaussianDensity> {
    check_linear_model(prior, design, noise_cov, observation)?;
    match information_form(prior, design, noise_cov, observation) {
        Ok(post) => Ok(post),
        Err(Error::SingularSystem(_)) => joint_conditioning(prior, design, noise_cov, observation),
        Err(e) => Err(e),
    }
}

/// `Sigma_e = (A^T Sigma^-1 A + Sigma_0^-1)^-1`,
/// `mu = Sigma_e (A^T Sigma^-1 y + Sigma_0^-1 mu_0)`.
pub fn information_form(
    prior: &GaussianDensity,
    design: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    observation: &DVector<f64>,
) -> Result<GaussianDensity> {
    check_linear_model(prior, design, noise_cov, observation)?;
    let noise = noise_cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("noise covariance is singular".into()))?;
    let prior_chol = prior
        .cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("prior covariance is singular".into()))?;
    let prior_prec = prior_chol.inverse();
    let noise_inv_a = noise.solve(design);
    let precision = design.tr_mul(&noise_inv_a) + &prior_prec;
    let prec_chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("posterior precision is singular".into()))?;
    let diag = prec_chol.l_dirty().diagonal();
    let ratio = diag.max() / diag.min();
    if !(ratio * ratio < 1e12) {
        return Err(Error::SingularSystem(format!(
            "posterior precision condition number ~{:e}",
            ratio * ratio
        )));
    }
    let mut cov = prec_chol.inverse();
    symmetrize(&mut cov);
    let rhs = noise_inv_a.tr_mul(observation) + &prior_prec * &prior.mean;
    let mean = &cov * rhs;
    Ok(GaussianDensity { mean, cov })
}

/// Conditioning of the joint Gaussian `(x, y)`:
/// `mu = mu_0 + K (y - A mu_0)`, `Sigma_e = Sigma_0 - K A Sigma_0` with
/// `K = Sigma_0 A^T (A Sigma_0 A^T + Sigma)^-1`.
pub fn joint_conditioning(
    prior: &GaussianDensity,
    design: &DMatrix<f64>,
    noise_cov: &DMatrix<f64>,
    observation: &DVector<f64>,
) -> Result<GaussianDensity> {
    check_linear_model(prior, design, noise_cov, observation)?;
    let cross = &prior.cov * design.transpose(); // d x n
    let mut innov = design * &cross + noise_cov;
    symmetrize(&mut innov);
    let chol = match innov.clone().cholesky() {
        Some(c) => c,
        None => {
            let jitter = default_jitter(&innov);
            let mut jittered = innov.clone();
            for i in 0..jittered.nrows() {
                jittered[(i, i)] += jitter;
            }
            jittered.cholesky().ok_or_else(|| {
                Error::SingularSystem("innovation covariance is singular even after jitter".into())
            })?
        }
    };
    let resid = observation - design * &prior.mean;
    let mean = &prior.mean + &cross * chol.solve(&resid);
    let white = chol
        .l_dirty()
        .solve_lower_triangular(&cross.transpose())
        .expect("positive Cholesky diagonal");
    let mut cov = &prior.cov - white.tr_mul(&white);
    symmetrize(&mut cov);
    Ok(GaussianDensity { mean, cov })
}

/// Reusable sampler holding a square-root factor of the covariance.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(g: &GaussianDensity) -> Result<Self> {
        Ok(Self {
            mean: g.mean.clone(),
            factor: psd_factor(&g.cov)?,
        })
    }

    pub fn from_factor(mean: DVector<f64>, factor: DMatrix<f64>) -> Self {
        Self { mean, factor }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut McRng) -> DVector<f64> {
        let z = DVector::from_fn(self.factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }
}

/// `count` draws from `g`, deterministic in `seed`.
pub fn sample_gaussian(g: &GaussianDensity, seed: u64, count: usize) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Err(Error::SamplerFailure("count must be at least 1".into()));
    }
    let sampler = GaussianSampler::new(g)?;
    let mut rng = rng::stream(seed, 0);
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(seed: u64, d: usize) -> DMatrix<f64> {
        let mut rng = rng::stream(seed, 99);
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(d, d) * 0.3
    }

    #[test]
    fn constructor_validates() {
        assert!(GaussianDensity::new(DVector::zeros(2), DMatrix::identity(3, 3)).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(GaussianDensity::new(DVector::zeros(2), neg).is_err());
        assert!(GaussianDensity::scalar(0.0, 0.0).is_ok());
    }

    #[test]
    fn uninformative_design_returns_prior() {
        let prior = GaussianDensity::scalar(0.0, 1.0).unwrap();
        let a = DMatrix::from_element(1, 1, 0.0);
        let s = DMatrix::identity(1, 1);
        for y in [-3.0, 0.0, 12.5] {
            let post = conjugate_posterior(&prior, &a, &s, &DVector::from_element(1, y)).unwrap();
            assert!((post.mean()[0]).abs() < 1e-15);
            assert!((post.cov()[(0, 0)] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_update_by_hand() {
        // Sigma_e = (1 + 1)^-1 = 1/2, mu = 1/2 * (1 * 1 + 0) = 1/2
        let prior = GaussianDensity::scalar(0.0, 1.0).unwrap();
        let one = DMatrix::from_element(1, 1, 1.0);
        let post = conjugate_posterior(&prior, &one, &one, &DVector::from_element(1, 1.0)).unwrap();
        assert!((post.mean()[0] - 0.5).abs() < 1e-15);
        assert!((post.cov()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grid_quadrature_oracle_2d() {
        // Bayes' rule evaluated on a 400x400 grid against the closed form.
        let mean = DVector::from_vec(vec![0.3, -0.2]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.2, 0.4, 0.4, 0.8]);
        let prior = GaussianDensity::new(mean.clone(), cov.clone()).unwrap();
        let a = DMatrix::from_row_slice(1, 2, &[0.7, -1.1]);
        let noise = DMatrix::from_element(1, 1, 0.5);
        let y = DVector::from_element(1, 0.9);
        let post = conjugate_posterior(&prior, &a, &noise, &y).unwrap();

        let prec = cov.clone().try_inverse().unwrap();
        let (n, lo, hi) = (400usize, -6.0, 6.0);
        let h = (hi - lo) / n as f64;
        let mut w_sum = 0.0;
        let mut m = [0.0; 2];
        let mut s = [[0.0; 2]; 2];
        let mut pts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                let dx = [x[0] - mean[0], x[1] - mean[1]];
                let q = dx[0] * (prec[(0, 0)] * dx[0] + prec[(0, 1)] * dx[1])
                    + dx[1] * (prec[(1, 0)] * dx[0] + prec[(1, 1)] * dx[1]);
                let r = y[0] - (a[(0, 0)] * x[0] + a[(0, 1)] * x[1]);
                let w = (-0.5 * q - 0.5 * r * r / noise[(0, 0)]).exp();
                w_sum += w;
                m[0] += w * x[0];
                m[1] += w * x[1];
                pts.push((x, w));
            }
        }
        m[0] /= w_sum;
        m[1] /= w_sum;
        for (x, w) in &pts {
            for p in 0..2 {
                for q in 0..2 {
                    s[p][q] += w * (x[p] - m[p]) * (x[q] - m[q]);
                }
            }
        }
        for p in 0..2 {
            assert!((post.mean()[p] - m[p]).abs() < 1e-3);
            for (q, sq) in s[p].iter().enumerate() {
                assert!((post.cov()[(p, q)] - sq / w_sum).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn both_routes_agree_with_identity_noise() {
        for seed in 0..20 {
            let d = 2 + (seed as usize % 3);
            let n = 1 + (seed as usize % 4);
            let mut rng = rng::stream(seed, 5);
            let prior = GaussianDensity::new(
                DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
                spd(seed, d),
            )
            .unwrap();
            let a = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
            let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let s = DMatrix::identity(n, n);
            let info = information_form(&prior, &a, &s, &y).unwrap();
            let joint = joint_conditioning(&prior, &a, &s, &y).unwrap();
            let scale = info.cov().amax().max(info.mean().amax());
            assert!((info.cov() - joint.cov()).amax() <= 1e-8 * scale);
            assert!((info.mean() - joint.mean()).amax() <= 1e-8 * scale);
            // the identity-noise special case written without Sigma
            let explicit = (a.tr_mul(&a) + prior.cov().clone().try_inverse().unwrap())
                .try_inverse()
                .unwrap();
            assert!((info.cov() - explicit).amax() <= 1e-10 * scale);
        }
    }

    #[test]
    fn zero_noise_interpolates() {
        let prior = GaussianDensity::new(DVector::zeros(3), spd(3, 3)).unwrap();
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![0.7, -1.3]);
        let post = conjugate_posterior(&prior, &a, &DMatrix::zeros(2, 2), &y).unwrap();
        assert!((&a * post.mean() - &y).amax() < 1e-6);
        // small nonzero noise converges to the same answer
        let eps = DMatrix::identity(2, 2) * 1e-9;
        let near = conjugate_posterior(&prior, &a, &eps, &y).unwrap();
        assert!((&a * near.mean() - &y).amax() < 1e-6);
    }

    #[test]
    fn dimension_errors() {
        let prior = GaussianDensity::standard(2);
        let a = DMatrix::zeros(1, 3);
        let r = conjugate_posterior(&prior, &a, &DMatrix::identity(1, 1), &DVector::zeros(1));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sampling_contract() {
        let degenerate = GaussianDensity::scalar(2.5, 0.0).unwrap();
        for s in sample_gaussian(&degenerate, 1, 10).unwrap() {
            assert_eq!(s[0], 2.5);
        }
        let g = GaussianDensity::standard(2);
        let a = sample_gaussian(&g, 42, 100_000).unwrap();
        let b = sample_gaussian(&g, 42, 100_000).unwrap();
        assert_eq!(a, b);
        let n = a.len() as f64;
        let mean = a.iter().fold(DVector::zeros(2), |acc, x| acc + x) / n;
        // 3 standard errors at n = 1e5
        assert!(mean.amax() < 3.0 / n.sqrt());
        let mut cov = DMatrix::zeros(2, 2);
        for x in &a {
            let d = x - &mean;
            cov += &d * d.transpose();
        }
        cov /= n - 1.0;
        assert!((cov - DMatrix::identity(2, 2)).amax() < 0.05);
        assert!(sample_gaussian(&g, 0, 0).is_err());
    }
}
