use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::KernelModel;
use crate::linalg::{symmetrize, SymmetricSolver};
use crate::{Error, Result};

/// Minimum separation between two observations of the same kind.
pub const MIN_SEPARATION: f64 = 1e-6;

/// Linear functional of the latent function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Functional {
    PointEvaluation(Vec<f64>),
    /// `-Delta x(t)`; needs a twice-differentiable kernel.
    NegativeLaplacian(Vec<f64>),
}

impl Functional {
    pub fn location(&self) -> &[f64] {
        match self {
            Functional::PointEvaluation(t) | Functional::NegativeLaplacian(t) => t,
        }
    }

    fn same_kind(&self, other: &Functional) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearObservation {
    pub functional: Functional,
    pub value: f64,
}

impl LinearObservation {
    /// Checked constructor: Laplacian observations are rejected for kernels
    /// that are not twice differentiable.
    pub fn new(kernel: &KernelModel, functional: Functional, value: f64) -> Result<Self> {
        if functional.location().len() != kernel.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "location has dimension {}, kernel input dimension is {}",
                functional.location().len(),
                kernel.input_dim
            )));
        }
        if matches!(functional, Functional::NegativeLaplacian(_)) && !kernel.supports_laplacian() {
            return Err(Error::UnsupportedFunctional("negative Laplacian evaluation"));
        }
        Ok(Self { functional, value })
    }

    pub fn point(t: &[f64], value: f64) -> Self {
        Self {
            functional: Functional::PointEvaluation(t.to_vec()),
            value,
        }
    }

    pub fn neg_laplacian(t: &[f64], value: f64) -> Self {
        Self {
            functional: Functional::NegativeLaplacian(t.to_vec()),
            value,
        }
    }
}

/// Gram matrix of a list of functionals.
pub(crate) fn functional_gram(kernel: &KernelModel, fs: &[Functional]) -> Result<DMatrix<f64>> {
    let n = fs.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.functional_cov(&fs[i], &fs[j])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

pub(crate) fn functional_cross(
    kernel: &KernelModel,
    rows: &[Functional],
    cols: &[Functional],
) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in cols.iter().enumerate() {
            m[(i, j)] = kernel.functional_cov(a, b)?;
        }
    }
    Ok(m)
}

/// Posterior Gaussian process after conditioning on linear observations.
pub struct GpPredictor {
    kernel: KernelModel,
    functionals: Vec<Functional>,
    solver: Option<SymmetricSolver>,
    weights: DVector<f64>,
}

/// Conditions the Gaussian process with covariance `kernel` on the given
/// observations, treating them as corrupted by independent `N(0, jitter)`
/// noise.
pub fn gp_condition(
    kernel: &KernelModel,
    observations: &[LinearObservation],
    jitter: f64,
) -> Result<GpPredictor> {
    if !(jitter > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "jitter must be positive, got {jitter}"
        )));
    }
    let functionals: Vec<Functional> = observations.iter().map(|o| o.functional.clone()).collect();
    for f in &functionals {
        if f.location().len() != kernel.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "location has dimension {}, kernel input dimension is {}",
                f.location().len(),
                kernel.input_dim
            )));
        }
        if matches!(f, Functional::NegativeLaplacian(_)) && !kernel.supports_laplacian() {
            return Err(Error::UnsupportedFunctional("negative Laplacian evaluation"));
        }
    }
    for i in 0..functionals.len() {
        for j in (i + 1)..functionals.len() {
            let (a, b) = (&functionals[i], &functionals[j]);
            let dist = a
                .location()
                .iter()
                .zip(b.location())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if a.same_kind(b) && dist < MIN_SEPARATION {
                return Err(Error::SingularGram(format!(
                    "observations {i} and {j} are {dist:e} apart"
                )));
            }
        }
    }
    if functionals.is_empty() {
        return Ok(GpPredictor {
            kernel: kernel.clone(),
            functionals,
            solver: None,
            weights: DVector::zeros(0),
        });
    }
    let mut gram = functional_gram(kernel, &functionals)?;
    for i in 0..gram.nrows() {
        gram[(i, i)] += jitter;
    }
    let solver = SymmetricSolver::new(&gram).map_err(|e| Error::SingularGram(e.to_string()))?;
    let resid = DVector::from_iterator(
        observations.len(),
        observations
            .iter()
            .map(|o| kernel.functional_mean(&o.functional).map(|m| o.value - m))
            .collect::<Result<Vec<_>>>()?,
    );
    let weights = solver.solve_vec(&resid);
    Ok(GpPredictor {
        kernel: kernel.clone(),
        functionals,
        solver: Some(solver),
        weights,
    })
}

impl GpPredictor {
    pub fn kernel(&self) -> &KernelModel {
        &self.kernel
    }

    pub fn mean_functional(&self, f: &Functional) -> Result<f64> {
        let mut m = self.kernel.functional_mean(f)?;
        for (g, w) in self.functionals.iter().zip(self.weights.iter()) {
            m += self.kernel.functional_cov(f, g)? * w;
        }
        Ok(m)
    }

    pub fn mean(&self, t: &[f64]) -> Result<f64> {
        self.mean_functional(&Functional::PointEvaluation(t.to_vec()))
    }

    /// Posterior covariance of the given functionals.
    pub fn covariance_functionals(&self, queries: &[Functional]) -> Result<DMatrix<f64>> {
        let mut prior = functional_gram(&self.kernel, queries)?;
        if let Some(solver) = &self.solver {
            let cross = functional_cross(&self.kernel, &self.functionals, queries)?;
            let white = solver.whiten(&cross);
            prior -= white.tr_mul(&white);
            symmetrize(&mut prior);
        }
        Ok(prior)
    }

    /// Posterior covariance of point values at `points`.
    pub fn covariance(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let fs: Vec<Functional> = points.iter().cloned().map(Functional::PointEvaluation).collect();
        self.covariance_functionals(&fs)
    }

    pub fn variance(&self, t: &[f64]) -> Result<f64> {
        Ok(self.covariance(&[t.to_vec()])?[(0, 0)])
    }
}
