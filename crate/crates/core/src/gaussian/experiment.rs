use nalgebra::{DMatrix, DVector};

use super::{conjugate_posterior, GaussianDensity, GaussianSampler};
use crate::decision::{ExperimentModel, PosteriorModel};
use crate::linalg::{default_jitter, SymmetricSolver};
use crate::rng::McRng;
use crate::Result;

/// `x ~ prior`, `y = A x + noise`, `noise ~ N(0, noise_cov)`.
#[derive(Clone, Debug)]
pub struct LinearGaussianExperiment {
    prior: GaussianDensity,
    design: DMatrix<f64>,
    prior_sampler: GaussianSampler,
    noise_sampler: GaussianSampler,
    gain: DMatrix<f64>,
    posterior_cov: DMatrix<f64>,
    posterior_sampler: GaussianSampler,
}

impl LinearGaussianExperiment {
    pub fn new(prior: GaussianDensity, design: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        let n = design.nrows();
        let noise = GaussianDensity::new(DVector::zeros(n), noise_cov.clone())?;
        let post = conjugate_posterior(&prior, &design, &noise_cov, &DVector::zeros(n))?;
        let cross = prior.cov() * design.transpose();
        let mut innov = &design * &cross + &noise_cov;
        if innov.clone().cholesky().is_none() {
            let j = default_jitter(&innov);
            for i in 0..n {
                innov[(i, i)] += j;
            }
        }
        let gain = SymmetricSolver::new(&innov)?
            .solve(&cross.transpose())
            .transpose();
        let posterior_cov = post.cov().clone();
        Ok(Self {
            prior_sampler: GaussianSampler::new(&prior)?,
            noise_sampler: GaussianSampler::new(&noise)?,
            posterior_sampler: GaussianSampler::new(&GaussianDensity::new(
                DVector::zeros(prior.dim()),
                posterior_cov.clone(),
            )?)?,
            prior,
            design,
            gain,
            posterior_cov,
        })
    }

    pub fn prior(&self) -> &GaussianDensity {
        &self.prior
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Posterior covariance, which does not depend on the observation.
    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.posterior_cov
    }

    pub fn posterior_mean(&self, y: &DVector<f64>) -> DVector<f64> {
        self.prior.mean() + &self.gain * (y - &self.design * self.prior.mean())
    }
}

impl ExperimentModel for LinearGaussianExperiment {
    type State = DVector<f64>;
    type Observation = DVector<f64>;

    fn sample_state(&self, rng: &mut McRng) -> DVector<f64> {
        self.prior_sampler.sample(rng)
    }

    fn sample_observation(&self, x: &DVector<f64>, rng: &mut McRng) -> DVector<f64> {
        &self.design * x + self.noise_sampler.sample(rng)
    }
}

impl PosteriorModel for LinearGaussianExperiment {
    fn sample_posterior(&self, y: &DVector<f64>, rng: &mut McRng) -> Result<DVector<f64>> {
        Ok(self.posterior_mean(y) + self.posterior_sampler.sample(rng))
    }

    fn posterior_covariance(&self) -> Option<DMatrix<f64>> {
        Some(self.posterior_cov.clone())
    }
}
