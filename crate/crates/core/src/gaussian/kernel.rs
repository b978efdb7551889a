use serde::{Deserialize, Serialize};

use super::Functional;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// Standard Wiener measure on `[0, 1]`: `k(t, t') = min(t, t')`.
    Wiener,
    /// Wiener process pinned at both ends of `[start, end]`.
    BrownianBridge {
        start: f64,
        end: f64,
        start_value: f64,
        end_value: f64,
    },
    /// `amplitude * exp(-|t - t'|^2 / lengthscale^2)`.
    SquaredExponential { lengthscale: f64, amplitude: f64 },
}

/// Covariance function together with its prior mean and input dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    pub kind: KernelKind,
    pub input_dim: usize,
}

impl KernelModel {
    pub fn wiener() -> Self {
        Self {
            kind: KernelKind::Wiener,
            input_dim: 1,
        }
    }

    pub fn brownian_bridge(start: f64, end: f64, start_value: f64, end_value: f64) -> Result<Self> {
        if !(end > start) {
            return Err(Error::InvalidSpec(format!(
                "bridge interval [{start}, {end}] is empty"
            )));
        }
        Ok(Self {
            kind: KernelKind::BrownianBridge {
                start,
                end,
                start_value,
                end_value,
            },
            input_dim: 1,
        })
    }

    /// Unit-amplitude squared-exponential kernel on `R^input_dim`.
    pub fn squared_exponential(input_dim: usize, lengthscale: f64) -> Result<Self> {
        if !(lengthscale > 0.0) || !lengthscale.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        if input_dim == 0 || input_dim > 2 {
            return Err(Error::InvalidSpec(format!(
                "input dimension must be 1 or 2, got {input_dim}"
            )));
        }
        Ok(Self {
            kind: KernelKind::SquaredExponential {
                lengthscale,
                amplitude: 1.0,
            },
            input_dim,
        })
    }

    pub fn with_amplitude(mut self, value: f64) -> Self {
        if let KernelKind::SquaredExponential { amplitude, .. } = &mut self.kind {
            *amplitude = value;
        }
        self
    }

    pub fn supports_laplacian(&self) -> bool {
        matches!(self.kind, KernelKind::SquaredExponential { .. })
    }

    pub fn prior_mean(&self, t: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Wiener | KernelKind::SquaredExponential { .. } => 0.0,
            KernelKind::BrownianBridge {
                start,
                end,
                start_value,
                end_value,
            } => {
                let s = ((t[0] - start) / (end - start)).clamp(0.0, 1.0);
                start_value + s * (end_value - start_value)
            }
        }
    }

    pub fn eval(&self, t: &[f64], s: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Wiener => t[0].min(s[0]).max(0.0),
            KernelKind::BrownianBridge { start, end, .. } => {
                let lo = t[0].min(s[0]);
                let hi = t[0].max(s[0]);
                if lo < start || hi > end {
                    0.0
                } else {
                    (lo - start) * (end - hi) / (end - start)
                }
            }
            KernelKind::SquaredExponential {
                lengthscale,
                amplitude,
            } => amplitude * (-sq_dist(t, s) / (lengthscale * lengthscale)).exp(),
        }
    }

    /// Prior mean of a functional of the latent function.
    pub fn functional_mean(&self, f: &Functional) -> Result<f64> {
        match f {
            Functional::PointEvaluation(t) => Ok(self.prior_mean(t)),
            Functional::NegativeLaplacian(_) => {
                self.require_laplacian()?;
                Ok(0.0)
            }
        }
    }

    /// Prior covariance between two linear functionals.
    pub fn functional_cov(&self, a: &Functional, b: &Functional) -> Result<f64> {
        use Functional::*;
        match (a, b) {
            (PointEvaluation(t), PointEvaluation(s)) => Ok(self.eval(t, s)),
            (PointEvaluation(t), NegativeLaplacian(s)) | (NegativeLaplacian(s), PointEvaluation(t)) => {
                let c = self.se_parts(t, s)?;
                Ok(-c.laplacian)
            }
            (NegativeLaplacian(t), NegativeLaplacian(s)) => Ok(self.se_parts(t, s)?.bilaplacian),
        }
    }

    fn require_laplacian(&self) -> Result<()> {
        if self.supports_laplacian() {
            Ok(())
        } else {
            Err(Error::UnsupportedFunctional("negative Laplacian evaluation"))
        }
    }

    fn se_parts(&self, t: &[f64], s: &[f64]) -> Result<SeCovariances> {
        match self.kind {
            KernelKind::SquaredExponential {
                lengthscale,
                amplitude,
            } => Ok(se_covariances_nd(lengthscale, t, s).scaled(amplitude)),
            _ => Err(Error::UnsupportedFunctional("negative Laplacian evaluation")),
        }
    }
}

fn sq_dist(t: &[f64], s: &[f64]) -> f64 {
    t.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `k`, `Delta_t k` and `Delta_t Delta_t' k` for the squared-exponential kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeCovariances {
    pub value: f64,
    pub laplacian: f64,
    pub bilaplacian: f64,
}

impl SeCovariances {
    fn scaled(self, a: f64) -> Self {
        Self {
            value: a * self.value,
            laplacian: a * self.laplacian,
            bilaplacian: a * self.bilaplacian,
        }
    }
}

// With a = 1/l^2, s = |t - t'|^2 and k = exp(-a s) in d dimensions:
//   Delta k         = (4 a^2 s - 2 a d) k
//   Delta Delta' k  = (16 a^4 s^2 - (32 + 16 d) a^3 s + 4 a^2 d (d + 2)) k
fn se_covariances_nd(lengthscale: f64, t: &[f64], s: &[f64]) -> SeCovariances {
    let a = 1.0 / (lengthscale * lengthscale);
    let d = t.len() as f64;
    let r2 = sq_dist(t, s);
    let k = (-a * r2).exp();
    let a2 = a * a;
    SeCovariances {
        value: k,
        laplacian: (4.0 * a2 * r2 - 2.0 * a * d) * k,
        bilaplacian: (16.0 * a2 * a2 * r2 * r2 - (32.0 + 16.0 * d) * a2 * a * r2 + 4.0 * a2 * d * (d + 2.0))
            * k,
    }
}

/// Squared-exponential covariances of point and Laplacian functionals for
/// `t, t'` in the plane, unit amplitude.
pub fn se_functional_covariances(lengthscale: f64, t: [f64; 2], t_prime: [f64; 2]) -> SeCovariances {
    se_covariances_nd(lengthscale, &t, &t_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    const H: f64 = 1e-4;

    fn k(l: f64, t: [f64; 2], s: [f64; 2]) -> f64 {
        let r2 = (t[0] - s[0]).powi(2) + (t[1] - s[1]).powi(2);
        (-r2 / (l * l)).exp()
    }

    // five-point Laplacian in the first argument
    fn fd_lap<F: Fn([f64; 2]) -> f64>(f: F, t: [f64; 2], h: f64) -> f64 {
        (f([t[0] + h, t[1]]) + f([t[0] - h, t[1]]) + f([t[0], t[1] + h]) + f([t[0], t[1] - h]) - 4.0 * f(t))
            / (h * h)
    }

    #[test]
    fn zero_distance_and_symmetry() {
        let c = se_functional_covariances(1.0, [0.3, 0.4], [0.3, 0.4]);
        assert_eq!(c.value, 1.0);
        let a = se_functional_covariances(0.7, [0.1, 0.9], [0.5, 0.2]);
        let b = se_functional_covariances(0.7, [0.5, 0.2], [0.1, 0.9]);
        assert_eq!(a, b);
        // at zero distance with l = 1: Delta k = -4, Delta^2 k = 32
        assert_eq!(c.laplacian, -4.0);
        assert_eq!(c.bilaplacian, 32.0);
    }

    #[test]
    fn laplacian_matches_finite_differences() {
        let mut rng = rng::stream(11, 0);
        for _ in 0..100 {
            let l = rng.random_range(0.3..1.5);
            let t = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let s = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let c = se_functional_covariances(l, t, s);
            let fd = fd_lap(|x| k(l, x, s), t, H);
            assert!((c.laplacian - fd).abs() < 1e-5, "{} vs {}", c.laplacian, fd);
            // second Laplacian in t', differencing the first one
            let fd2 = fd_lap(|x| se_functional_covariances(l, t, x).laplacian, s, H);
            assert!((c.bilaplacian - fd2).abs() < 1e-5 * c.bilaplacian.abs().max(1.0));
        }
    }

    #[test]
    fn wiener_and_bridge() {
        let w = KernelModel::wiener();
        assert_eq!(w.eval(&[0.3], &[0.7]), 0.3);
        assert_eq!(w.eval(&[0.9], &[0.2]), 0.2);
        let b = KernelModel::brownian_bridge(0.2, 0.6, 1.0, 3.0).unwrap();
        assert!((b.eval(&[0.3], &[0.5]) - 0.1 * 0.1 / 0.4).abs() < 1e-15);
        assert_eq!(b.eval(&[0.2], &[0.5]), 0.0);
        assert!((b.prior_mean(&[0.4]) - 2.0).abs() < 1e-15);
        assert!(matches!(
            w.functional_cov(
                &Functional::NegativeLaplacian(vec![0.5]),
                &Functional::PointEvaluation(vec![0.5])
            ),
            Err(Error::UnsupportedFunctional(_))
        ));
    }
}
