//! Dense symmetric linear algebra shared by the Gaussian routines.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative eigenvalue floor used when a Cholesky factorization fails.
pub const EIGEN_CLIP: f64 = 1e-12;

/// Default diagonal jitter for a Gram matrix: `1e-10 * trace / n`.
pub fn default_jitter(gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows().max(1) as f64;
    let scale = gram.trace() / n;
    if scale.is_finite() && scale > 0.0 {
        1e-10 * scale
    } else {
        1e-10
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Checks symmetry (relative `1e-12`) and positive semi-definiteness
/// (smallest eigenvalue at least `-1e-10` times the largest).
pub fn check_symmetric_psd(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NonPsdInput(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonPsdInput("matrix has non-finite entries".into()));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::NonPsdInput(format!(
                    "entries ({i},{j}) and ({j},{i}) differ"
                )));
            }
        }
    }
    if n == 0 {
        return Ok(());
    }
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if min < -1e-10 * max.max(0.0) || (max <= 0.0 && min < -1e-300) {
        return Err(Error::NonPsdInput(format!(
            "smallest eigenvalue {min:e} against largest {max:e}"
        )));
    }
    Ok(())
}

enum Factor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Eigen {
        vectors: DMatrix<f64>,
        inv_values: DVector<f64>,
    },
}

/// Solver for a symmetric positive (semi-)definite system.
///
/// A Cholesky factorization is tried first; if it fails the matrix is
/// eigendecomposed and its eigenvalues are clipped from below at
/// `EIGEN_CLIP * lambda_max`.
pub struct SymmetricSolver {
    factor: Factor,
    n: usize,
}

impl SymmetricSolver {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "solver needs a square matrix, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("matrix has non-finite entries".into()));
        }
        if let Some(chol) = matrix.clone().cholesky() {
            return Ok(Self {
                factor: Factor::Cholesky(chol),
                n,
            });
        }
        let mut sym = matrix.clone();
        symmetrize(&mut sym);
        let eig = sym.symmetric_eigen();
        let max = eig.eigenvalues.max();
        if !(max > 0.0) {
            return Err(Error::SingularSystem(format!("largest eigenvalue is {max:e}")));
        }
        let floor = EIGEN_CLIP * max;
        let inv_values = eig.eigenvalues.map(|v| 1.0 / v.max(floor));
        Ok(Self {
            factor: Factor::Eigen {
                vectors: eig.eigenvectors,
                inv_values,
            },
            n,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn used_fallback(&self) -> bool {
        matches!(self.factor, Factor::Eigen { .. })
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            Factor::Cholesky(c) => c.solve(rhs),
            Factor::Eigen { vectors, inv_values } => {
                let mut t = vectors.tr_mul(rhs);
                for (mut row, s) in t.row_iter_mut().zip(inv_values.iter()) {
                    row *= *s;
                }
                vectors * t
            }
        }
    }

    pub fn solve_vec(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Cholesky(c) => c.solve(rhs),
            Factor::Eigen { vectors, inv_values } => {
                let t = vectors.tr_mul(rhs).component_mul(inv_values);
                vectors * t
            }
        }
    }

    /// `W` with `W^T W = rhs^T A^{-1} rhs`, i.e. the whitened right-hand side.
    pub fn whiten(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            Factor::Cholesky(c) => c
                .l_dirty()
                .solve_lower_triangular(rhs)
                .expect("Cholesky factor has a positive diagonal"),
            Factor::Eigen { vectors, inv_values } => {
                let mut t = vectors.tr_mul(rhs);
                for (mut row, s) in t.row_iter_mut().zip(inv_values.iter()) {
                    row *= s.sqrt();
                }
                t
            }
        }
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.solve(&DMatrix::identity(self.n, self.n));
        symmetrize(&mut inv);
        inv
    }
}

/// Returns `L` with `L L^T = cov`, for drawing correlated samples.
///
/// Falls back to an eigendecomposition when Cholesky fails; eigenvalues
/// below `-1e-10 * lambda_max` are a [`Error::FactorizationFailure`], the
/// remaining negative ones are clipped to zero.
pub fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !cov.is_square() {
        return Err(Error::FactorizationFailure("covariance is not square".into()));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::FactorizationFailure(
            "covariance has non-finite entries".into(),
        ));
    }
    if let Some(chol) = cov.clone().cholesky() {
        return Ok(chol.unpack());
    }
    let mut sym = cov.clone();
    symmetrize(&mut sym);
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.max().max(0.0);
    let min = eig.eigenvalues.min();
    if min < -1e-10 * max || (max == 0.0 && min < 0.0) {
        return Err(Error::FactorizationFailure(format!(
            "covariance has eigenvalue {min:e} against largest {max:e}"
        )));
    }
    let mut l = eig.eigenvectors;
    for (mut col, v) in l.column_iter_mut().zip(eig.eigenvalues.iter()) {
        col *= v.max(0.0).sqrt();
    }
    Ok(l)
}

/// Greedy pivoted Cholesky: `L` (n x r) with `L L^T ~= matrix`.
///
/// Stops once the largest remaining diagonal drops to `rel_tol` times the
/// largest diagonal of `matrix`, so the residual is bounded entrywise by
/// that level. Suited to the numerically low-rank Gram matrices of smooth
/// kernels.
pub fn pivoted_cholesky(matrix: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let n = matrix.nrows();
    if !matrix.is_square() {
        return Err(Error::FactorizationFailure("matrix is not square".into()));
    }
    let mut diag: Vec<f64> = (0..n).map(|i| matrix[(i, i)]).collect();
    if diag.iter().any(|v| !v.is_finite()) {
        return Err(Error::FactorizationFailure("non-finite diagonal".into()));
    }
    let scale = diag.iter().cloned().fold(0.0_f64, f64::max);
    if diag.iter().any(|&d| d < -1e-8 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::FactorizationFailure("negative diagonal entry".into()));
    }
    let stop = rel_tol * scale;
    let mut chosen = vec![false; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let (pivot, &d) = diag
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("fewer pivots than rows");
        if d <= stop || d <= 0.0 {
            break;
        }
        chosen[pivot] = true;
        let root = d.sqrt();
        let mut col: Vec<f64> = (0..n).map(|i| matrix[(i, pivot)]).collect();
        for prev in &cols {
            let f = prev[pivot];
            if f != 0.0 {
                for (c, p) in col.iter_mut().zip(prev) {
                    *c -= p * f;
                }
            }
        }
        for (i, c) in col.iter_mut().enumerate() {
            if chosen[i] && i != pivot {
                *c = 0.0;
            } else {
                *c /= root;
            }
        }
        col[pivot] = root;
        for (i, c) in col.iter().enumerate() {
            if !chosen[i] {
                diag[i] -= c * c;
            }
        }
        diag[pivot] = 0.0;
        cols.push(col);
    }
    if diag.iter().any(|&d| d < -1e-6 * scale) {
        return Err(Error::FactorizationFailure(
            "residual diagonal became negative; matrix is not PSD".into(),
        ));
    }
    let r = cols.len();
    Ok(DMatrix::from_fn(n, r, |i, j| cols[j][i]))
}
