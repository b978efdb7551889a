use nalgebra::DVector;

use super::{Integrator, LossSpec};
use crate::discrete::DiscreteProblem;
use crate::gaussian::{GaussianDensity, GaussianSampler};
use crate::rng;
use crate::{Error, Result};

/// Tolerance for ties between posterior expected losses of discrete actions.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A posterior distribution over state vectors.
#[derive(Clone, Debug)]
pub enum PosteriorHandle {
    /// Finitely many atoms with probabilities summing to one.
    Discrete {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Gaussian(GaussianDensity),
    /// Weighted sample approximation, e.g. from Monte Carlo.
    Weighted {
        samples: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

impl PosteriorHandle {
    pub fn empirical(samples: Vec<Vec<f64>>) -> Self {
        let w = 1.0 / samples.len().max(1) as f64;
        let weights = vec![w; samples.len()];
        PosteriorHandle::Weighted { samples, weights }
    }

    /// Replaces a Gaussian posterior by a shared sample set so that every
    /// candidate action is scored on the same draws.
    fn atoms(&self, integrator: Integrator) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        match self {
            PosteriorHandle::Discrete { atoms, weights } => Ok((atoms.clone(), weights.clone())),
            PosteriorHandle::Weighted { samples, weights } => Ok((samples.clone(), weights.clone())),
            PosteriorHandle::Gaussian(g) => match integrator {
                Integrator::MonteCarlo { seed, samples } if samples > 0 => {
                    let sampler = GaussianSampler::new(g)?;
                    let mut r = rng::stream(seed, 0);
                    let xs: Vec<Vec<f64>> = (0..samples)
                        .map(|_| sampler.sample(&mut r).as_slice().to_vec())
                        .collect();
                    let w = vec![1.0 / samples as f64; samples];
                    Ok((xs, w))
                }
                _ => Err(Error::IntegratorFailure(
                    "Gaussian posterior with a non-quadratic loss needs Monte Carlo".into(),
                )),
            },
        }
    }
}

/// Axis-aligned box for continuous action search.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSearch {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ActionSearch {
    /// Candidate actions; the full argmin set is returned.
    Finite(Vec<Vec<f64>>),
    Box(BoxSearch),
}

fn quadratic_expected_loss(g: &GaussianDensity, loss: &LossSpec, a: &[f64]) -> Option<f64> {
    // E (x - a)^T L (x - a) = tr(L Sigma) + (mu - a)^T L (mu - a)
    let l = match loss {
        LossSpec::WeightedQuadratic(l) => l.clone(),
        LossSpec::SquaredPushforwardNorm(phi) if phi.is_affine() => {
            let j = phi.jacobian(a);
            j.tr_mul(&j)
        }
        LossSpec::PNormOnGrid { weights, .. } if loss.is_quadratic() => {
            nalgebra::DMatrix::from_diagonal(&DVector::from_column_slice(weights))
        }
        _ => return None,
    };
    let d = g.mean() - DVector::from_column_slice(a);
    let trace: f64 = (0..g.dim())
        .map(|i| (0..g.dim()).map(|k| l[(i, k)] * g.cov()[(k, i)]).sum::<f64>())
        .sum();
    Some(trace + d.dot(&(&l * &d)))
}

/// Posterior expected loss `E_{x ~ posterior} l(x, a)`.
pub fn posterior_expected_loss(
    posterior: &PosteriorHandle,
    loss: &LossSpec,
    action: &[f64],
    integrator: Integrator,
) -> Result<f64> {
    if let PosteriorHandle::Gaussian(g) = posterior {
        if let Some(v) = quadratic_expected_loss(g, loss, action) {
            return Ok(v);
        }
    }
    let (xs, w) = posterior.atoms(integrator)?;
    Ok(weighted_loss(&xs, &w, loss, action))
}

fn weighted_loss(xs: &[Vec<f64>], w: &[f64], loss: &LossSpec, a: &[f64]) -> f64 {
    xs.iter()
        .zip(w)
        .filter(|(_, p)| **p > 0.0)
        .map(|(x, p)| p * loss.eval(x, a))
        .sum()
}

/// Set of Bayes acts for `posterior` under `loss`.
///
/// Quadratic losses with a Gaussian posterior return the posterior mean.
/// Other combinations are scored on a common sample set drawn according to
/// `integrator`; a finite candidate list returns its exact argmin set, a box
/// returns the single best point found.
pub fn bayes_acts(
    posterior: &PosteriorHandle,
    loss: &LossSpec,
    search: &ActionSearch,
    integrator: Integrator,
) -> Result<Vec<Vec<f64>>> {
    if let PosteriorHandle::Gaussian(g) = posterior {
        if loss.is_quadratic() {
            let mean = g.mean().as_slice().to_vec();
            return match search {
                ActionSearch::Box(_) => Ok(vec![mean]),
                ActionSearch::Finite(cands) => {
                    let values: Vec<f64> = cands
                        .iter()
                        .map(|a| quadratic_expected_loss(g, loss, a).unwrap_or(f64::NAN))
                        .collect();
                    argmin_set(&values).map(|ix| ix.into_iter().map(|i| cands[i].clone()).collect())
                }
            };
        }
    }
    let (xs, w) = posterior.atoms(integrator)?;
    let objective = |a: &[f64]| weighted_loss(&xs, &w, loss, a);
    match search {
        ActionSearch::Finite(cands) => {
            let values: Vec<f64> = cands.iter().map(|a| objective(a)).collect();
            argmin_set(&values).map(|ix| ix.into_iter().map(|i| cands[i].clone()).collect())
        }
        ActionSearch::Box(b) => {
            let (a, _) = minimize_box(objective, &b.lower, &b.upper, b.tol)?;
            Ok(vec![a])
        }
    }
}

/// Indices whose value is within [`TIE_TOLERANCE`] (relative to scale) of the minimum.
fn argmin_set(values: &[f64]) -> Result<Vec<usize>> {
    let min = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::UnboundedObjective);
    }
    let tol = TIE_TOLERANCE * min.abs().max(1.0);
    Ok(values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite() && **v <= min + tol)
        .map(|(i, _)| i)
        .collect())
}

/// Bayes acts of a finite posterior under a state-by-action loss table.
/// Returns action indices in increasing order.
pub fn bayes_acts_discrete(posterior: &[f64], loss_table: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n_actions = loss_table.first().map_or(0, |r| r.len());
    if posterior.len() != loss_table.len() {
        return Err(Error::LengthMismatch {
            expected: loss_table.len(),
            actual: posterior.len(),
        });
    }
    let values: Vec<f64> = (0..n_actions)
        .map(|a| {
            posterior
                .iter()
                .zip(loss_table)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, row)| p * row[a])
                .sum()
        })
        .collect();
    argmin_set(&values)
}

/// Bayes rule of experiment `e` as a table indexed by observation. Entries
/// for zero-probability observations are `None`; ties go to the lowest
/// action index.
pub fn bayes_rule_discrete(problem: &DiscreteProblem, e: &str) -> Result<Vec<Option<usize>>> {
    let marginal = problem.marginal(e)?;
    let mut rule = Vec::with_capacity(marginal.len());
    for (y, &p) in marginal.iter().enumerate() {
        if p > 0.0 {
            let post = problem.posterior(e, y)?;
            rule.push(Some(bayes_acts_discrete(&post, problem.loss())?[0]));
        } else {
            rule.push(None);
        }
    }
    Ok(rule)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const MAX_SWEEPS: usize = 200;

/// Minimizes `f` over the box `[lower, upper]` by cyclic golden-section
/// line searches followed by a quadratic-fit refinement on each axis.
/// Returns the minimizer and its value.
pub fn minimize_box<F: Fn(&[f64]) -> f64>(
    f: F,
    lower: &[f64],
    upper: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    if lower.len() != upper.len() {
        return Err(Error::LengthMismatch {
            expected: lower.len(),
            actual: upper.len(),
        });
    }
    if lower.iter().zip(upper).any(|(l, u)| !(u >= l)) || !(tol > 0.0) {
        return Err(Error::InvalidSpec(
            "empty search box or non-positive tolerance".into(),
        ));
    }
    let mut x: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::UnboundedObjective);
    }
    for _ in 0..MAX_SWEEPS {
        let before = x.clone();
        for i in 0..x.len() {
            let line = |t: f64| {
                let mut z = x.clone();
                z[i] = t;
                f(&z)
            };
            let (t, ft) = golden_section(&line, lower[i], upper[i], tol * 1e-2);
            let (t, ft) = quadratic_refine(&line, t, ft, lower[i], upper[i], tol);
            if ft <= fx {
                x[i] = t;
                fx = ft;
            }
        }
        if !fx.is_finite() {
            return Err(Error::OptimizerDiverged("objective became non-finite".into()));
        }
        let step = x
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if step <= tol {
            return Ok((x, fx));
        }
    }
    Err(Error::OptimizerDiverged(format!(
        "no convergence after {MAX_SWEEPS} sweeps"
    )))
}

fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let candidates = [(a, f(a)), (b, f(b)), (c, fc), (d, fd)];
    candidates
        .into_iter()
        .filter(|(_, v)| !v.is_nan())
        .fold((0.5 * (a + b), f64::INFINITY), |best, c| {
            if c.1 < best.1 {
                c
            } else {
                best
            }
        })
}

// Parabola through (t - h, t, t + h); accepted only if it improves.
fn quadratic_refine<F: Fn(f64) -> f64>(f: &F, t: f64, ft: f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let h = tol.max(1e-6 * t.abs());
    if t - h < lo || t + h > hi {
        return (t, ft);
    }
    let (fm, fp) = (f(t - h), f(t + h));
    let curv = fp - 2.0 * ft + fm;
    if !(curv > 0.0) {
        return (t, ft);
    }
    let s = (t - 0.5 * h * (fp - fm) / curv).clamp(lo, hi);
    let fs = f(s);
    if fs < ft {
        (s, fs)
    } else {
        (t, ft)
    }
}
