//! Losses, Bayes acts, Bayes rules and Bayes risk.
//!
//! An experiment is described by an [`ExperimentModel`]: a prior over
//! states together with the observation law of that experiment. The Bayes
//! risk of a decision rule is the prior-and-data expectation of the loss
//! between the state and the action the rule takes on the observation.

mod acts;
mod pushforward;

pub use acts::{
    bayes_acts, bayes_acts_discrete, bayes_rule_discrete, minimize_box, posterior_expected_loss,
    ActionSearch, BoxSearch, PosteriorHandle, TIE_TOLERANCE,
};
pub use pushforward::{gauss_hermite, verify_mean_is_bayes_act, BayesActReport};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::estimate::{replicate_mean, Estimate};
use crate::rng::McRng;
use crate::{Error, Result};

/// Quantity of interest `phi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PushforwardMap {
    Identity,
    /// `phi(x) = M x`.
    Linear(DMatrix<f64>),
    /// Scalar input, `phi(x) = (x, x^2, ..., x^degree)`.
    Moments {
        degree: usize,
    },
    /// Scalar input, `phi(x) = sum_k coefficients[k] x^k`.
    Polynomial {
        coefficients: Vec<f64>,
    },
}

impl PushforwardMap {
    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        match self {
            PushforwardMap::Identity => DVector::from_column_slice(x),
            PushforwardMap::Linear(m) => m * DVector::from_column_slice(x),
            PushforwardMap::Moments { degree } => DVector::from_fn(*degree, |k, _| x[0].powi(k as i32 + 1)),
            PushforwardMap::Polynomial { coefficients } => {
                let v = coefficients.iter().rev().fold(0.0, |acc, c| acc * x[0] + c);
                DVector::from_element(1, v)
            }
        }
    }

    /// Derivative matrix `[d phi_i / d a_j]`.
    pub fn jacobian(&self, a: &[f64]) -> DMatrix<f64> {
        match self {
            PushforwardMap::Identity => DMatrix::identity(a.len(), a.len()),
            PushforwardMap::Linear(m) => m.clone(),
            PushforwardMap::Moments { degree } => {
                DMatrix::from_fn(*degree, 1, |k, _| (k + 1) as f64 * a[0].powi(k as i32))
            }
            PushforwardMap::Polynomial { coefficients } => {
                let d = coefficients
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, c)| acc * a[0] + k as f64 * c);
                DMatrix::from_element(1, 1, d)
            }
        }
    }

    /// True when `phi` is affine, so posterior means push forward exactly.
    pub fn is_affine(&self) -> bool {
        match self {
            PushforwardMap::Identity | PushforwardMap::Linear(_) => true,
            PushforwardMap::Moments { degree } => *degree <= 1,
            PushforwardMap::Polynomial { coefficients } => coefficients.len() <= 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub fn label(&self) -> String {
        match self {
            NormOrder::Finite(p) => format!("{p}"),
            NormOrder::Infinity => "inf".to_string(),
        }
    }
}

/// Loss `l(x, a)`. States and actions are vectors; for
/// [`LossSpec::PartitionZeroOne`] the first coordinate carries an index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    /// `|phi(x) - phi(a)|_2^2`.
    SquaredPushforwardNorm(PushforwardMap),
    /// `(x - a)^T L (x - a)`.
    WeightedQuadratic(DMatrix<f64>),
    /// Weighted discrete `L^p` norm of `x - a`, optionally squared. The
    /// infinity norm is the maximum over coordinates with positive weight.
    PNormOnGrid {
        order: NormOrder,
        weights: Vec<f64>,
        squared: bool,
    },
    /// `1{ |x - a|_L > epsilon }`.
    ZeroOne { epsilon: f64, weight: DMatrix<f64> },
    /// `x[0]` is a state index and `a[0]` a class index; loss is
    /// `1{ classes[x] != a }`.
    PartitionZeroOne { classes: Vec<usize> },
}

impl LossSpec {
    pub fn eval(&self, x: &[f64], a: &[f64]) -> f64 {
        match self {
            LossSpec::SquaredPushforwardNorm(phi) => (phi.apply(x) - phi.apply(a)).norm_squared(),
            LossSpec::WeightedQuadratic(l) => {
                let d = DVector::from_iterator(x.len(), x.iter().zip(a).map(|(p, q)| p - q));
                d.dot(&(l * &d))
            }
            LossSpec::PNormOnGrid {
                order,
                weights,
                squared,
            } => {
                let norm = grid_norm(*order, weights, x.iter().zip(a).map(|(p, q)| p - q));
                if *squared {
                    norm * norm
                } else {
                    norm
                }
            }
            LossSpec::ZeroOne { epsilon, weight } => {
                let d = DVector::from_iterator(x.len(), x.iter().zip(a).map(|(p, q)| p - q));
                let n2 = d.dot(&(weight * &d)).max(0.0);
                if n2.sqrt() > *epsilon {
                    1.0
                } else {
                    0.0
                }
            }
            LossSpec::PartitionZeroOne { classes } => {
                let state = x[0] as usize;
                let class = a[0] as usize;
                if classes[state] == class {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Loss between two states, `l(x, x')`, used by the BPN criterion.
    pub fn eval_states(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        match self {
            LossSpec::PartitionZeroOne { classes } => {
                if classes[x[0] as usize] == classes[x_prime[0] as usize] {
                    0.0
                } else {
                    1.0
                }
            }
            _ => self.eval(x, x_prime),
        }
    }

    /// `l(x, a) = ||A(x - a)||^2` for some `A`: the posterior mean is a Bayes act.
    pub fn is_quadratic(&self) -> bool {
        match self {
            LossSpec::WeightedQuadratic(_) => true,
            LossSpec::SquaredPushforwardNorm(phi) => phi.is_affine(),
            LossSpec::PNormOnGrid { order, squared, .. } => *squared && *order == NormOrder::Finite(2.0),
            _ => false,
        }
    }
}

/// Weighted `L^p` norm over grid differences.
pub fn grid_norm<I: Iterator<Item = f64>>(order: NormOrder, weights: &[f64], diffs: I) -> f64 {
    match order {
        NormOrder::Infinity => diffs
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .fold(0.0_f64, |m, (d, _)| m.max(d.abs())),
        NormOrder::Finite(2.0) => diffs.zip(weights).map(|(d, w)| w * d * d).sum::<f64>().sqrt(),
        NormOrder::Finite(p) => diffs
            .zip(weights)
            .map(|(d, w)| w * d.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p),
    }
}

/// How an integral over states and observations is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Exhaustive enumeration; needs a finite joint support.
    Exact,
    MonteCarlo {
        seed: u64,
        samples: usize,
    },
}

/// Prior over states together with the observation law of one experiment.
pub trait ExperimentModel {
    type State: Send;
    type Observation: Send;

    fn sample_state(&self, rng: &mut McRng) -> Self::State;

    fn sample_observation(&self, state: &Self::State, rng: &mut McRng) -> Self::Observation;

    /// Joint law of `(x, y)` as weighted atoms, when it is finite.
    #[allow(clippy::type_complexity)]
    fn joint_support(&self) -> Option<Vec<(Self::State, Self::Observation, f64)>> {
        None
    }
}

/// An experiment whose posterior `pi(x | y, e)` can be sampled.
pub trait PosteriorModel: ExperimentModel {
    fn sample_posterior(&self, observation: &Self::Observation, rng: &mut McRng) -> Result<Self::State>;

    /// Posterior as weighted atoms, when it is finite.
    fn posterior_support(&self, _observation: &Self::Observation) -> Option<Vec<(Self::State, f64)>> {
        None
    }

    /// Posterior covariance when the posterior is Gaussian with a
    /// covariance that does not depend on the observation.
    fn posterior_covariance(&self) -> Option<DMatrix<f64>> {
        None
    }
}

/// Bayes risk `BR(e, d) = E_x E_{y|x} l(x, d(y))` of the decision rule `rule`.
pub fn bayes_risk<M, A, R, L>(model: &M, loss: L, rule: R, integrator: Integrator) -> Result<Estimate>
where
    M: ExperimentModel + Sync,
    R: Fn(&M::Observation) -> A + Sync,
    L: Fn(&M::State, &A) -> f64 + Sync,
{
    match integrator {
        Integrator::Exact => {
            let support = model.joint_support().ok_or_else(|| {
                Error::IntegratorFailure("exact integration needs a finite joint support".into())
            })?;
            let mut total = 0.0;
            for (x, y, p) in &support {
                if *p > 0.0 {
                    total += p * loss(x, &rule(y));
                }
            }
            if !total.is_finite() {
                return Err(Error::IntegratorFailure("risk is not finite".into()));
            }
            Ok(Estimate::exact(total))
        }
        Integrator::MonteCarlo { seed, samples } => {
            if samples == 0 {
                return Err(Error::IntegratorFailure("zero Monte Carlo samples".into()));
            }
            replicate_mean(samples, seed, |rng, _| {
                let x = model.sample_state(rng);
                let y = model.sample_observation(&x, rng);
                Ok(loss(&x, &rule(&y)))
            })
        }
    }
}
