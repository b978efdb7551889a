//! Monte Carlo averages with standard errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, McRng};
use crate::{Error, Result};

/// A point estimate with its Monte Carlo standard error (zero when exact).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// Sample mean and `sd / sqrt(n)` of `values`.
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::IntegratorFailure("no samples".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        if !mean.is_finite() || !stderr.is_finite() {
            return Err(Error::IntegratorFailure(format!(
                "non-finite estimate (mean {mean}, stderr {stderr})"
            )));
        }
        Ok(Self { value: mean, stderr })
    }

    /// `|self - other| <= k * sqrt(se1^2 + se2^2)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        let band = k * (self.stderr * self.stderr + other.stderr * other.stderr).sqrt();
        (self.value - other.value).abs() <= band
    }
}

/// Averages `f(rng, i)` over `n` replicates, replicate `i` drawing from
/// stream `i` of `seed`. The result does not depend on the thread count.
pub fn replicate_mean<F>(n: usize, seed: u64, f: F) -> Result<Estimate>
where
    F: Fn(&mut McRng, usize) -> Result<f64> + Sync,
{
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            f(&mut rng, i)
        })
        .collect::<Result<_>>()?;
    Estimate::from_samples(&values)
}
