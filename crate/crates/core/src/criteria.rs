//! Experiment-scoring criteria and optimal-set extraction.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::decision::{bayes_risk, Integrator, LossSpec, PosteriorModel};
use crate::discrete::DiscreteProblem;
use crate::estimate::{replicate_mean, Estimate};
use crate::gaussian::LinearGaussianExperiment;
use crate::linalg::{check_symmetric_psd, pivoted_cholesky};
use crate::{Error, Result};

/// Tie tolerance for criteria computed without sampling error.
pub const EXACT_TIE_TOLERANCE: f64 = 1e-9;
/// Pivoted-Cholesky truncation for sampling `Z`, relative to the largest variance.
const PAIR_FACTOR_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionValue {
    pub id: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: String,
    pub sense: Sense,
    pub values: Vec<CriterionValue>,
    pub optimal_set: Vec<String>,
    pub tie_tolerance: f64,
}

impl CriterionReport {
    pub fn new(
        criterion: &str,
        sense: Sense,
        values: Vec<CriterionValue>,
        tie_tolerance: f64,
    ) -> Result<Self> {
        let optimal_set = optimal_set(&values, sense, tie_tolerance)?;
        Ok(Self {
            criterion: criterion.to_string(),
            sense,
            values,
            optimal_set,
            tie_tolerance,
        })
    }
}

/// Ids whose value is within `tie_tolerance + 3 * stderr` of the best
/// finite value, sorted by id.
pub fn optimal_set(values: &[CriterionValue], sense: Sense, tie_tolerance: f64) -> Result<Vec<String>> {
    let sign = match sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let best = values
        .iter()
        .map(|v| sign * v.value)
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::AllValuesNonFinite);
    }
    let mut ids: Vec<String> = values
        .iter()
        .filter(|v| v.value.is_finite() && sign * v.value <= best + tie_tolerance + 3.0 * v.stderr)
        .map(|v| v.id.clone())
        .collect();
    ids.sort();
    Ok(ids)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    A,
    C(DVector<f64>),
    E,
    D,
}

/// Alphabet criteria of a posterior covariance `sigma` under weight `lambda`.
pub fn alphabet(sigma: &DMatrix<f64>, lambda: &DMatrix<f64>, which: &Alphabet) -> Result<f64> {
    check_symmetric_psd(sigma)?;
    check_symmetric_psd(lambda)?;
    let n = sigma.nrows();
    if lambda.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "sigma is {n}x{n}, lambda is {0}x{0}",
            lambda.nrows()
        )));
    }
    let weighted = || {
        let root = psd_sqrt(lambda);
        &root * sigma * &root
    };
    Ok(match which {
        // tr(L S) = sum_ij L_ij S_ji
        Alphabet::A => lambda.component_mul(&sigma.transpose()).sum(),
        Alphabet::C(c) => {
            if c.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "direction has length {}, expected {n}",
                    c.len()
                )));
            }
            c.dot(&(sigma * c))
        }
        Alphabet::E => weighted().symmetric_eigenvalues().max().max(0.0),
        Alphabet::D => weighted().determinant().max(0.0),
    })
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Expected Kullback-Leibler divergence from prior to posterior.
pub fn kl_gain_discrete(problem: &DiscreteProblem, e: &str) -> Result<f64> {
    let prior = problem.prior();
    let mut total = 0.0;
    for (y, py) in problem.marginal(e)?.into_iter().enumerate() {
        if py > 0.0 {
            let post = problem.posterior(e, y)?;
            let kl: f64 = post
                .iter()
                .zip(&prior)
                .filter(|(q, _)| **q > 0.0)
                .map(|(q, p)| q * (q / p).ln())
                .sum();
            total += py * kl;
        }
    }
    Ok(total.max(0.0))
}

/// Bayes risk of the Bayes rule on a discrete problem.
pub fn bdt_criterion_discrete(problem: &DiscreteProblem, e: &str) -> Result<f64> {
    problem.bayes_risk_optimal(e)
}

/// Bayes risk of the posterior-mean rule under `(x - a)^T L (x - a)`.
/// Exact integration gives `tr(L Sigma_e)`; Monte Carlo simulates the risk.
pub fn bdt_criterion_gaussian(
    experiment: &LinearGaussianExperiment,
    lambda: &DMatrix<f64>,
    integrator: Integrator,
) -> Result<Estimate> {
    match integrator {
        Integrator::Exact => Ok(Estimate::exact(alphabet(
            experiment.posterior_cov(),
            lambda,
            &Alphabet::A,
        )?)),
        Integrator::MonteCarlo { .. } => {
            let loss = LossSpec::WeightedQuadratic(lambda.clone());
            bayes_risk(
                experiment,
                |x: &DVector<f64>, a: &DVector<f64>| loss.eval(x.as_slice(), a.as_slice()),
                |y| experiment.posterior_mean(y),
                integrator,
            )
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub seed: u64,
    /// Outer samples `(x, y)`.
    pub n_outer: usize,
    /// Posterior draws per outer sample.
    pub n_inner: usize,
    /// Draw both members of each inner pair from the posterior instead of
    /// pairing the true state with one posterior draw.
    pub posterior_pairs: bool,
}

impl MonteCarloConfig {
    pub fn new(seed: u64, n_outer: usize, n_inner: usize) -> Result<Self> {
        let cfg = Self {
            seed,
            n_outer,
            n_inner,
            posterior_pairs: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.n_outer == 0 || self.n_inner == 0 {
            return Err(Error::InvalidSpec(
                "Monte Carlo sample sizes must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Nested Monte Carlo estimate of BPN: `x ~ prior`, `y ~ p(y | x)`, then
/// the loss between `x` and `n_inner` posterior draws is averaged. The
/// standard error comes from the variance across outer samples.
pub fn bpn_mc<M, L>(model: &M, loss: L, cfg: &MonteCarloConfig) -> Result<Estimate>
where
    M: PosteriorModel + Sync,
    L: Fn(&M::State, &M::State) -> f64 + Sync,
{
    cfg.validate()?;
    replicate_mean(cfg.n_outer, cfg.seed, |rng, _| {
        let x = model.sample_state(rng);
        let y = model.sample_observation(&x, rng);
        let mut acc = 0.0;
        for _ in 0..cfg.n_inner {
            let xp = model.sample_posterior(&y, rng)?;
            acc += if cfg.posterior_pairs {
                let xq = model.sample_posterior(&y, rng)?;
                loss(&xq, &xp)
            } else {
                loss(&x, &xp)
            };
        }
        Ok(acc / cfg.n_inner as f64)
    })
    .map_err(|e| match e {
        Error::IntegratorFailure(m) => Error::SamplerFailure(m),
        other => other,
    })
}

/// BPN when the posterior is Gaussian with observation-independent
/// covariance `sigma_e`: the expected loss of `Z ~ N(0, 2 sigma_e)`.
///
/// Quadratic losses are evaluated in closed form, others by `cfg.n_outer`
/// draws of `Z`.
pub fn bpn_gaussian_pair_reduction(
    sigma_e: &DMatrix<f64>,
    loss: &LossSpec,
    cfg: &MonteCarloConfig,
) -> Result<Estimate> {
    check_symmetric_psd(sigma_e)?;
    let n = sigma_e.nrows();
    let closed = match loss {
        LossSpec::WeightedQuadratic(l) => Some(alphabet(sigma_e, l, &Alphabet::A)?),
        LossSpec::SquaredPushforwardNorm(phi) if phi.is_affine() => {
            let j = phi.jacobian(&vec![0.0; n]);
            Some(alphabet(sigma_e, &j.tr_mul(&j), &Alphabet::A)?)
        }
        LossSpec::PNormOnGrid { weights, .. } if loss.is_quadratic() => {
            if weights.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: weights.len(),
                });
            }
            Some(
                weights
                    .iter()
                    .zip(sigma_e.diagonal().iter())
                    .map(|(w, s)| w * s)
                    .sum(),
            )
        }
        LossSpec::PartitionZeroOne { .. } => return Err(Error::NonGaussianPosterior),
        _ => None,
    };
    if let Some(v) = closed {
        return Ok(Estimate::exact(2.0 * v));
    }
    cfg.validate()?;
    let factor = pivoted_cholesky(sigma_e, PAIR_FACTOR_TOL)? * std::f64::consts::SQRT_2;
    let zero = vec![0.0; n];
    replicate_mean(cfg.n_outer, cfg.seed, |rng, _| {
        let xi = DVector::from_fn(factor.ncols(), |_, _| StandardNormal.sample(rng));
        let z = &factor * xi;
        Ok(loss.eval(z.as_slice(), &zero))
    })
}

/// [`bpn_gaussian_pair_reduction`] for a model that exposes its posterior covariance.
pub fn bpn_pair_reduction_model<M: PosteriorModel>(
    model: &M,
    loss: &LossSpec,
    cfg: &MonteCarloConfig,
) -> Result<Estimate> {
    let sigma = model.posterior_covariance().ok_or(Error::NonGaussianPosterior)?;
    bpn_gaussian_pair_reduction(&sigma, loss, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{NormOrder, PushforwardMap};
    use crate::discrete::{build_counterexample, CounterexampleSpec};
    use crate::gaussian::GaussianDensity;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_spd(seed: u64, n: usize) -> DMatrix<f64> {
        let mut r = rng::stream(seed, 7);
        let b = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * 0.05
    }

    #[test]
    fn alphabet_identity() {
        let i = DMatrix::identity(2, 2);
        assert_eq!(alphabet(&i, &i, &Alphabet::A).unwrap(), 2.0);
        assert!((alphabet(&i, &i, &Alphabet::D).unwrap() - 1.0).abs() < 1e-15);
        assert!((alphabet(&i, &i, &Alphabet::E).unwrap() - 1.0).abs() < 1e-15);
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            alphabet(&neg, &i, &Alphabet::A),
            Err(Error::NonPsdInput(_))
        ));
    }

    #[test]
    fn e_value_against_random_directions() {
        let s = random_spd(3, 3);
        let e = alphabet(&s, &DMatrix::identity(3, 3), &Alphabet::E).unwrap();
        let mut r = rng::stream(4, 0);
        let mut best = 0.0f64;
        for _ in 0..10_000 {
            let c = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut r)).normalize();
            best = best.max(c.dot(&(&s * &c)));
        }
        assert!(best <= e + 1e-12);
        assert!(e - best < 1e-3 * e.max(1.0));
    }

    proptest! {
        #[test]
        fn rank_one_weight_gives_c_value(seed in any::<u64>(), n in 1usize..5) {
            let s = random_spd(seed, n);
            let mut r = rng::stream(seed, 1);
            let c = DVector::from_fn(n, |_, _| r.random_range(-2.0..2.0));
            let a = alphabet(&s, &(&c * c.transpose()), &Alphabet::A).unwrap();
            let cv = alphabet(&s, &DMatrix::identity(n, n), &Alphabet::C(c)).unwrap();
            prop_assert!((a - cv).abs() < 1e-10 * cv.abs().max(1.0));
        }

        #[test]
        fn d_value_is_product_of_weighted_eigenvalues(seed in any::<u64>(), n in 1usize..5) {
            let s = random_spd(seed, n);
            let l = random_spd(seed.wrapping_add(1), n);
            let d = alphabet(&s, &l, &Alphabet::D).unwrap();
            let direct = s.determinant() * l.determinant();
            prop_assert!((d - direct).abs() < 1e-9 * direct.abs().max(1e-12));
        }
    }

    #[test]
    fn kl_gain_cases() {
        let p = build_counterexample(CounterexampleSpec::new(0.2, 0.3, 0.5).unwrap()).unwrap();
        // observations are deterministic, so the gain is the observation entropy
        let h = |q: f64| -(q * q.ln() + (1.0 - q) * (1.0 - q).ln());
        assert!((kl_gain_discrete(&p, "e1").unwrap() - h(0.2)).abs() < 1e-12);
        assert!((kl_gain_discrete(&p, "e2").unwrap() - h(0.5)).abs() < 1e-12);
        let mut spec = p.spec().clone();
        spec.experiments.insert("blind".into(), vec![vec![1.0]; 3]);
        spec.experiments.insert(
            "reveal".into(),
            (0..3)
                .map(|i| {
                    let mut r = vec![0.0; 3];
                    r[i] = 1.0;
                    r
                })
                .collect(),
        );
        let q = DiscreteProblem::new(spec).unwrap();
        assert_eq!(kl_gain_discrete(&q, "blind").unwrap(), 0.0);
        let ent = -[0.2f64, 0.3, 0.5].iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((kl_gain_discrete(&q, "reveal").unwrap() - ent).abs() < 1e-12);
    }

    #[test]
    fn optimal_set_rules() {
        let v = |id: &str, value: f64, stderr: f64| CriterionValue {
            id: id.into(),
            value,
            stderr,
        };
        assert_eq!(
            optimal_set(&[v("a", 1.0, 0.0)], Sense::Minimize, 1e-9).unwrap(),
            vec!["a"]
        );
        let vals = [
            v("b", 1.0, 0.0),
            v("a", 1.0 + 5e-10, 0.0),
            v("c", 1.1, 0.01),
            v("d", f64::NAN, 0.0),
        ];
        assert_eq!(optimal_set(&vals, Sense::Minimize, 1e-9).unwrap(), vec!["a", "b"]);
        let vals = [v("b", 1.0, 0.0), v("c", 1.02, 0.01)];
        assert_eq!(optimal_set(&vals, Sense::Minimize, 1e-9).unwrap(), vec!["b", "c"]);
        assert_eq!(optimal_set(&vals, Sense::Maximize, 1e-9).unwrap(), vec!["c"]);
        assert!(matches!(
            optimal_set(&[v("x", f64::INFINITY, 0.0)], Sense::Minimize, 1e-9),
            Err(Error::AllValuesNonFinite)
        ));
    }

    fn regression(seed: u64) -> LinearGaussianExperiment {
        let mut r = rng::stream(seed, 3);
        let d = 3;
        let m = 2;
        let prior = GaussianDensity::new(
            DVector::from_fn(d, |_, _| r.random_range(-1.0..1.0)),
            random_spd(seed, d),
        )
        .unwrap();
        let a = DMatrix::from_fn(m, d, |_, _| r.random_range(-1.0..1.0));
        let noise = random_spd(seed.wrapping_add(5), m) * 0.5;
        LinearGaussianExperiment::new(prior, a, noise).unwrap()
    }

    #[test]
    fn bpn_is_twice_the_bayes_risk() {
        for seed in 0..5 {
            let e = regression(seed);
            let l = random_spd(seed + 100, 3);
            let br = bdt_criterion_gaussian(&e, &l, Integrator::Exact).unwrap().value;
            let bpn = bpn_pair_reduction_model(
                &e,
                &LossSpec::WeightedQuadratic(l.clone()),
                &MonteCarloConfig::new(1, 1, 1).unwrap(),
            )
            .unwrap();
            assert!((bpn.value - 2.0 * br).abs() < 1e-10);
            let mc = bdt_criterion_gaussian(
                &e,
                &l,
                Integrator::MonteCarlo {
                    seed,
                    samples: 20_000,
                },
            )
            .unwrap();
            assert!(mc.agrees_with(&Estimate::exact(br), 4.0), "{mc:?} vs {br}");
        }
    }

    #[test]
    fn nested_and_reduced_bpn_agree() {
        for seed in 0..10 {
            let e = regression(seed);
            let loss = LossSpec::PNormOnGrid {
                order: NormOrder::Infinity,
                weights: vec![1.0; 3],
                squared: false,
            };
            let cfg = MonteCarloConfig::new(seed, 4000, 4).unwrap();
            let nested = bpn_mc(&e, |x, xp| loss.eval(x.as_slice(), xp.as_slice()), &cfg).unwrap();
            let reduced = bpn_pair_reduction_model(&e, &loss, &cfg).unwrap();
            assert!(nested.agrees_with(&reduced, 3.0), "{nested:?} vs {reduced:?}");
        }
    }

    #[test]
    fn pair_reduction_cases() {
        let cfg = MonteCarloConfig::new(2, 1000, 1).unwrap();
        let sq = LossSpec::PNormOnGrid {
            order: NormOrder::Finite(2.0),
            weights: vec![0.5, 0.25],
            squared: true,
        };
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(
            bpn_gaussian_pair_reduction(&zero, &sq, &cfg).unwrap(),
            Estimate::exact(0.0)
        );
        let inf = LossSpec::PNormOnGrid {
            order: NormOrder::Infinity,
            weights: vec![0.5, 0.25],
            squared: false,
        };
        let z = bpn_gaussian_pair_reduction(&zero, &inf, &cfg).unwrap();
        assert_eq!((z.value, z.stderr), (0.0, 0.0));
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let v = bpn_gaussian_pair_reduction(&s, &sq, &cfg).unwrap().value;
        assert!((v - 2.0 * (0.5 + 0.5)).abs() < 1e-12);
        let part = LossSpec::PartitionZeroOne { classes: vec![0, 1] };
        assert!(matches!(
            bpn_gaussian_pair_reduction(&s, &part, &cfg),
            Err(Error::NonGaussianPosterior)
        ));
        let phi = LossSpec::SquaredPushforwardNorm(PushforwardMap::Identity);
        assert!((bpn_gaussian_pair_reduction(&s, &phi, &cfg).unwrap().value - 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_loss_bpn() {
        let p = build_counterexample(CounterexampleSpec::new(0.2, 0.3, 0.5).unwrap()).unwrap();
        let e = p.experiment("e2").unwrap();
        let est = bpn_mc(&e, |_, _| 0.0, &MonteCarloConfig::new(1, 100, 2).unwrap()).unwrap();
        assert_eq!((est.value, est.stderr), (0.0, 0.0));
    }

    #[test]
    fn counterexample_bpn_by_sampling() {
        let p = build_counterexample(CounterexampleSpec::new(0.2, 0.3, 0.5).unwrap()).unwrap();
        let sl = p.state_loss().unwrap().to_vec();
        let e = p.experiment("e2").unwrap();
        let est = bpn_mc(
            &e,
            |x, xp| sl[*x][*xp],
            &MonteCarloConfig::new(8, 20_000, 4).unwrap(),
        )
        .unwrap();
        assert!(est.agrees_with(&Estimate::exact(0.24), 3.0), "{est:?}");
    }
}
