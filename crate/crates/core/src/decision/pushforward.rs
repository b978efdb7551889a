use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::{minimize_box, PushforwardMap};
use crate::gaussian::GaussianDensity;
use crate::{Error, Result};

const QUADRATURE_NODES: usize = 64;
const SEARCH_HALF_WIDTH: f64 = 8.0;
const RANK_TOL: f64 = 1e-10;

/// Outcome of checking that the Bayes act under `|phi(x) - phi(a)|^2`
/// pushes forward to the posterior mean of `phi`.
#[derive(Clone, Debug, Serialize)]
pub struct BayesActReport {
    /// Numerically found minimizer of the posterior expected loss.
    pub act: Vec<f64>,
    /// Posterior mean of `phi(x)`.
    pub pushforward_mean: Vec<f64>,
    /// `|E phi(x) - phi(act)|`.
    pub mean_residual: f64,
    /// Norm of the gradient of the posterior expected loss at `act`.
    pub stationarity_residual: f64,
    pub coercivity: String,
    pub passed: bool,
}

/// Nodes and weights of the `n`-point Gauss-Hermite rule for expectations
/// under the standard normal, by the Golub-Welsch eigenvalue method.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Jacobi matrix of the probabilists' Hermite polynomials.
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn coercivity_note(phi: &PushforwardMap, dim: usize) -> String {
    match phi {
        PushforwardMap::Identity => "identity map is coercive".into(),
        PushforwardMap::Linear(m) => {
            let rank = m.clone().svd(false, false).rank(RANK_TOL * m.norm().max(1.0));
            if rank == dim {
                "injective linear map is coercive".into()
            } else {
                "linear map with a kernel is not coercive".into()
            }
        }
        PushforwardMap::Moments { degree } if *degree >= 1 => "polynomial growth, coercive".into(),
        PushforwardMap::Polynomial { coefficients } if coefficients.iter().skip(1).any(|c| *c != 0.0) => {
            "non-constant polynomial, coercive".into()
        }
        _ => "constant map is not coercive".into(),
    }
}

fn check_full_row_rank(j: &DMatrix<f64>) -> Result<()> {
    if j.nrows() > j.ncols() {
        return Err(Error::PreconditionViolated(format!(
            "derivative of phi is {}x{} and cannot have full row rank",
            j.nrows(),
            j.ncols()
        )));
    }
    let sv = j.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min < RANK_TOL * max {
        return Err(Error::PreconditionViolated(format!(
            "derivative of phi is rank deficient (singular values {min:e} .. {max:e})"
        )));
    }
    Ok(())
}

/// Minimizes the posterior expected loss `E |phi(x) - phi(a)|^2` and reports
/// how closely `phi(a*)` matches `E phi(x)`.
///
/// The derivative of `phi` must have full row rank at the posterior mean
/// and at the minimizer; otherwise `PreconditionViolated` is returned.
pub fn verify_mean_is_bayes_act(
    posterior: &GaussianDensity,
    phi: &PushforwardMap,
    tol: f64,
) -> Result<BayesActReport> {
    let mu = posterior.mean().as_slice().to_vec();
    let d = mu.len();
    check_full_row_rank(&phi.jacobian(&mu))?;
    let coercivity = coercivity_note(phi, d);

    let target: DVector<f64> = if phi.is_affine() {
        phi.apply(&mu)
    } else {
        if d != 1 {
            return Err(Error::PreconditionViolated(
                "non-affine maps are supported on scalar states only".into(),
            ));
        }
        let (nodes, weights) = gauss_hermite(QUADRATURE_NODES);
        let sd = posterior.cov()[(0, 0)].sqrt();
        nodes
            .iter()
            .zip(&weights)
            .map(|(z, w)| phi.apply(&[mu[0] + sd * z]) * *w)
            .fold(DVector::zeros(phi.apply(&mu).len()), |acc, v| acc + v)
    };

    // E|phi(x) - phi(a)|^2 = |phi(a) - E phi(x)|^2 + const.
    let objective = |a: &[f64]| (phi.apply(a) - &target).norm_squared();
    let sd: Vec<f64> = (0..d).map(|i| posterior.cov()[(i, i)].sqrt().max(1.0)).collect();
    let lower: Vec<f64> = mu
        .iter()
        .zip(&sd)
        .map(|(m, s)| m - SEARCH_HALF_WIDTH * s)
        .collect();
    let upper: Vec<f64> = mu
        .iter()
        .zip(&sd)
        .map(|(m, s)| m + SEARCH_HALF_WIDTH * s)
        .collect();
    let (mut act, mut value) = minimize_box(objective, &lower, &upper, 1e-12)?;

    // Gauss-Newton polish.
    for _ in 0..20 {
        let j = phi.jacobian(&act);
        let r = phi.apply(&act) - &target;
        let Some(step) = (j.transpose() * &j).lu().solve(&(j.transpose() * r)) else {
            break;
        };
        let cand: Vec<f64> = act.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
        let v = objective(&cand);
        if !(v < value) {
            break;
        }
        act = cand;
        value = v;
    }
    if !value.is_finite() {
        return Err(Error::OptimizerDiverged("expected loss is not finite".into()));
    }
    let j = phi.jacobian(&act);
    check_full_row_rank(&j)?;
    let resid = phi.apply(&act) - &target;
    let stationarity_residual = 2.0 * (j.transpose() * &resid).norm();
    let mean_residual = resid.norm();
    Ok(BayesActReport {
        act,
        pushforward_mean: target.as_slice().to_vec(),
        mean_residual,
        stationarity_residual,
        coercivity,
        passed: mean_residual < tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite(20);
        let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn identity_gives_the_mean() {
        let g = GaussianDensity::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]),
        )
        .unwrap();
        let r = verify_mean_is_bayes_act(&g, &PushforwardMap::Identity, 1e-8).unwrap();
        assert!(r.passed);
        assert!((r.act[0] - 1.0).abs() < 1e-9 && (r.act[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn cubic_map_matches_quadrature_mean() {
        // E[x + x^3] for N(0.5, 0.3^2) = mu + mu^3 + 3 mu s^2
        let g = GaussianDensity::scalar(0.5, 0.09).unwrap();
        let phi = PushforwardMap::Polynomial {
            coefficients: vec![0.0, 1.0, 0.0, 1.0],
        };
        let r = verify_mean_is_bayes_act(&g, &phi, 1e-6).unwrap();
        let expect = 0.5 + 0.125 + 3.0 * 0.5 * 0.09;
        assert!((r.pushforward_mean[0] - expect).abs() < 1e-12);
        assert!(r.passed, "{r:?}");
        assert!(r.stationarity_residual < 1e-6);
    }

    #[test]
    fn rank_deficient_map_is_rejected() {
        let g = GaussianDensity::scalar(0.0, 1.0).unwrap();
        assert!(matches!(
            verify_mean_is_bayes_act(&g, &PushforwardMap::Moments { degree: 2 }, 1e-6),
            Err(Error::PreconditionViolated(_))
        ));
        let flat = PushforwardMap::Polynomial {
            coefficients: vec![1.0, 0.0, 1.0],
        };
        // derivative 2a vanishes at the mean 0
        assert!(matches!(
            verify_mean_is_bayes_act(&g, &flat, 1e-6),
            Err(Error::PreconditionViolated(_))
        ));
    }
}
