//! Sequential placement of interior observations of `-Delta x` for a
//! Gaussian-process model of the solution of an elliptic problem on the
//! unit square, with the solution observed on the boundary.
//!
//! The joint covariance of the solution on an evaluation grid and of the
//! Laplacian at every candidate location is kept up to date with rank-one
//! updates as points are chosen. For the max-norm loss the criterion is
//! estimated from residuals `x - E[x | y]` of joint prior draws, which are
//! exact posterior samples of the error and are updated in the same way.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{bpn_gaussian_pair_reduction, MonteCarloConfig};
use crate::decision::{LossSpec, NormOrder};
use crate::estimate::Estimate;
use crate::gaussian::{
    functional_cross, functional_gram, gp_condition, Functional, GaussianDensity, KernelModel,
    LinearGaussianExperiment, LinearObservation, MIN_SEPARATION,
};
use crate::linalg::{pivoted_cholesky, SymmetricSolver};
use crate::rng;
use crate::{Error, Result};

/// Relative tolerance for ties between candidate scores.
pub const CANDIDATE_TIE_TOLERANCE: f64 = 1e-9;
const SAMPLE_FACTOR_TOL: f64 = 1e-12;

pub type Point = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticDesignProblem {
    /// Cell-centred evaluation grid is `grid_size x grid_size`.
    pub grid_size: usize,
    /// Candidates are `(i / (c + 1), j / (c + 1))` for `i, j = 1..=c`.
    pub candidate_size: usize,
    /// Points equispaced along the boundary, starting at the origin.
    pub boundary_points: usize,
    pub lengthscale: f64,
}

impl Default for EllipticDesignProblem {
    fn default() -> Self {
        Self {
            grid_size: 32,
            candidate_size: 25,
            boundary_points: 32,
            lengthscale: 0.35,
        }
    }
}

fn sq_dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

impl EllipticDesignProblem {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.candidate_size == 0 {
            return Err(Error::InvalidSpec(
                "grid and candidate sizes must be positive".into(),
            ));
        }
        if !(self.lengthscale > 0.0) || !self.lengthscale.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<KernelModel> {
        KernelModel::squared_exponential(2, self.lengthscale)
    }

    /// Evaluation grid, ordered by `x` and then `y`.
    pub fn grid(&self) -> Vec<Point> {
        let g = self.grid_size;
        let c = |i: usize| (i as f64 + 0.5) / g as f64;
        (0..g).flat_map(|i| (0..g).map(move |j| [c(i), c(j)])).collect()
    }

    /// Quadrature weight of each grid cell.
    pub fn grid_weight(&self) -> f64 {
        1.0 / (self.grid_size * self.grid_size) as f64
    }

    pub fn boundary(&self) -> Vec<Point> {
        let n = self.boundary_points;
        (0..n)
            .map(|k| {
                let s = 4.0 * k as f64 / n as f64;
                if s < 1.0 {
                    [s, 0.0]
                } else if s < 2.0 {
                    [1.0, s - 1.0]
                } else if s < 3.0 {
                    [3.0 - s, 1.0]
                } else {
                    [0.0, 4.0 - s]
                }
            })
            .collect()
    }

    /// Candidate locations, ordered by `x` and then `y`.
    pub fn candidates(&self) -> Vec<Point> {
        let c = self.candidate_size;
        let t = |i: usize| (i + 1) as f64 / (c + 1) as f64;
        (0..c).flat_map(|i| (0..c).map(move |j| [t(i), t(j)])).collect()
    }

    /// Observation noise variance: `1e-10` times the mean prior variance
    /// over every boundary and candidate observation.
    pub fn nugget(&self) -> Result<f64> {
        let k = self.kernel()?;
        let p = [0.5, 0.5];
        let point = k.functional_cov(
            &Functional::PointEvaluation(p.to_vec()),
            &Functional::PointEvaluation(p.to_vec()),
        )?;
        let lap = k.functional_cov(
            &Functional::NegativeLaplacian(p.to_vec()),
            &Functional::NegativeLaplacian(p.to_vec()),
        )?;
        let nb = self.boundary_points as f64;
        let nc = (self.candidate_size * self.candidate_size) as f64;
        Ok(1e-10 * (nb * point + nc * lap) / (nb + nc))
    }

    fn observations(&self, points: &[Point]) -> Vec<LinearObservation> {
        self.boundary()
            .iter()
            .map(|b| LinearObservation::point(b, 0.0))
            .chain(points.iter().map(|p| LinearObservation::neg_laplacian(p, 0.0)))
            .collect()
    }

    /// Grid loss `(sum_g w |x_g - x'_g|^p)^(1/p)`; `p = 2` is squared, the
    /// max norm is not.
    pub fn loss(&self, norm: NormOrder) -> Result<LossSpec> {
        check_norm(norm)?;
        Ok(LossSpec::PNormOnGrid {
            order: norm,
            weights: vec![self.grid_weight(); self.grid_size * self.grid_size],
            squared: norm == NormOrder::Finite(2.0),
        })
    }
}

fn check_norm(norm: NormOrder) -> Result<()> {
    match norm {
        NormOrder::Finite(2.0) | NormOrder::Infinity => Ok(()),
        other => Err(Error::InvalidSpec(format!(
            "only p = 2 and p = inf are supported, got {}",
            other.label()
        ))),
    }
}

fn check_points(points: &[Point]) -> Result<()> {
    for (i, p) in points.iter().enumerate() {
        if !(p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0) {
            return Err(Error::PreconditionViolated(format!(
                "interior point {i} ({}, {}) is not inside the open unit square",
                p[0], p[1]
            )));
        }
    }
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = sq_dist(&points[i], &points[j]).sqrt();
            if d < MIN_SEPARATION {
                return Err(Error::SingularGram(format!(
                    "interior points {i} ({}, {}) and {j} ({}, {}) are {d:e} apart",
                    points[i][0], points[i][1], points[j][0], points[j][1]
                )));
            }
        }
    }
    Ok(())
}

/// Posterior covariance on the evaluation grid given the boundary values
/// and `-Delta x` at `points`.
pub fn posterior_on_grid(problem: &EllipticDesignProblem, points: &[Point]) -> Result<DMatrix<f64>> {
    problem.validate()?;
    check_points(points)?;
    let gp = gp_condition(
        &problem.kernel()?,
        &problem.observations(points),
        problem.nugget()?,
    )?;
    let grid: Vec<Vec<f64>> = problem.grid().iter().map(|p| p.to_vec()).collect();
    gp.covariance(&grid)
}

/// Chosen interior points with the posterior covariance they induce on the grid.
#[derive(Clone, Debug)]
pub struct DesignState {
    pub points: Vec<Point>,
    pub grid_covariance: DMatrix<f64>,
}

impl DesignState {
    pub fn new(problem: &EllipticDesignProblem, points: Vec<Point>) -> Result<Self> {
        let grid_covariance = posterior_on_grid(problem, &points)?;
        Ok(Self {
            points,
            grid_covariance,
        })
    }

    pub fn weighted_trace(&self, problem: &EllipticDesignProblem) -> f64 {
        problem.grid_weight() * self.grid_covariance.trace()
    }
}

/// Monte Carlo settings for the max-norm criterion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeMonteCarlo {
    pub seed: u64,
    pub samples: usize,
}

impl Default for PdeMonteCarlo {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 2000,
        }
    }
}

/// BPN of the design `points` by the Gaussian pair reduction.
pub fn design_bpn(
    problem: &EllipticDesignProblem,
    points: &[Point],
    norm: NormOrder,
    mc: PdeMonteCarlo,
) -> Result<Estimate> {
    let loss = problem.loss(norm)?;
    let sigma = posterior_on_grid(problem, points)?;
    bpn_gaussian_pair_reduction(&sigma, &loss, &MonteCarloConfig::new(mc.seed, mc.samples, 1)?)
}

/// BPN of the design `state` extended by `candidate`.
pub fn bpn_surface(
    problem: &EllipticDesignProblem,
    state: &DesignState,
    candidate: Point,
    norm: NormOrder,
    mc: PdeMonteCarlo,
) -> Result<Estimate> {
    let mut points = state.points.clone();
    points.push(candidate);
    design_bpn(problem, &points, norm, mc)
}

/// The problem as a linear-Gaussian experiment on the stacked vector of
/// grid values, boundary values and `-Delta x` at `points`, observing the
/// last two blocks with the nugget as noise. The first `grid_size^2`
/// coordinates of the state are the grid values.
pub fn linear_gaussian_experiment(
    problem: &EllipticDesignProblem,
    points: &[Point],
) -> Result<LinearGaussianExperiment> {
    problem.validate()?;
    check_points(points)?;
    let kernel = problem.kernel()?;
    let mut fs: Vec<Functional> = problem
        .grid()
        .iter()
        .map(|p| Functional::PointEvaluation(p.to_vec()))
        .collect();
    let n_g = fs.len();
    fs.extend(problem.observations(points).into_iter().map(|o| o.functional));
    let gram = functional_gram(&kernel, &fs)?;
    let n = fs.len();
    let n_o = n - n_g;
    let prior = GaussianDensity::new(DVector::zeros(n), gram)?;
    let design = DMatrix::from_fn(n_o, n, |i, j| if j == n_g + i { 1.0 } else { 0.0 });
    let noise = DMatrix::identity(n_o, n_o) * problem.nugget()?;
    LinearGaussianExperiment::new(prior, design, noise)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyObjective {
    /// Minimize BPN under the grid loss.
    Bpn,
    /// Minimize the weighted trace of the grid posterior covariance.
    Trace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub norm: NormOrder,
    pub objective: GreedyObjective,
    pub mc: PdeMonteCarlo,
}

/// Criterion values over the candidate grid at one greedy step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourGrid {
    pub step: usize,
    pub candidates: Vec<Point>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl ContourGrid {
    /// CSV with header `x,y,bpn`, one row per candidate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,bpn\n");
        for (p, v) in self.candidates.iter().zip(&self.values) {
            out.push_str(&format!("{},{},{}\n", p[0], p[1], v));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct GreedyResult {
    pub state: DesignState,
    pub chosen: Vec<usize>,
    pub contours: Vec<ContourGrid>,
    /// Criterion value with the boundary observations alone.
    pub initial_value: f64,
    /// Criterion value after each step.
    pub value_trace: Vec<f64>,
    /// Weighted trace of the grid covariance after each step.
    pub covariance_trace: Vec<f64>,
}

struct Residuals {
    /// Columns are samples; rows follow the joint index (grid, then candidates).
    r: DMatrix<f64>,
    /// Observation noise of each candidate in each sample.
    eps: DMatrix<f64>,
}

struct Engine {
    n_g: usize,
    n_c: usize,
    weight: f64,
    tau: f64,
    /// Joint posterior covariance of grid values and candidate Laplacians.
    s: DMatrix<f64>,
    residuals: Option<Residuals>,
}

impl Engine {
    fn new(problem: &EllipticDesignProblem, sample: Option<PdeMonteCarlo>) -> Result<Self> {
        problem.validate()?;
        let kernel = problem.kernel()?;
        let tau = problem.nugget()?;
        let grid = problem.grid();
        let cands = problem.candidates();
        let n_g = grid.len();
        let n_c = cands.len();
        let joint: Vec<Functional> = grid
            .iter()
            .map(|p| Functional::PointEvaluation(p.to_vec()))
            .chain(cands.iter().map(|p| Functional::NegativeLaplacian(p.to_vec())))
            .collect();
        let bnd: Vec<Functional> = problem
            .boundary()
            .iter()
            .map(|p| Functional::PointEvaluation(p.to_vec()))
            .collect();
        let n_b = bnd.len();
        let k_jj = functional_gram(&kernel, &joint)?;
        let mut s = k_jj.clone();
        let mut residuals = None;
        let k_jb = functional_cross(&kernel, &joint, &bnd)?;
        let k_bb = functional_gram(&kernel, &bnd)?;
        let solver = if n_b > 0 {
            let mut noisy = k_bb.clone();
            for i in 0..n_b {
                noisy[(i, i)] += tau;
            }
            let solver = SymmetricSolver::new(&noisy).map_err(|e| Error::SingularGram(e.to_string()))?;
            let white = solver.whiten(&k_jb.transpose());
            s -= white.tr_mul(&white);
            Some(solver)
        } else {
            None
        };
        if let Some(mc) = sample {
            if mc.samples == 0 {
                return Err(Error::InvalidSpec("at least one sample is needed".into()));
            }
            let n = n_g + n_c + n_b;
            let mut full = DMatrix::zeros(n, n);
            full.view_mut((0, 0), (n_g + n_c, n_g + n_c)).copy_from(&k_jj);
            full.view_mut((0, n_g + n_c), (n_g + n_c, n_b)).copy_from(&k_jb);
            full.view_mut((n_g + n_c, 0), (n_b, n_g + n_c))
                .copy_from(&k_jb.transpose());
            full.view_mut((n_g + n_c, n_g + n_c), (n_b, n_b)).copy_from(&k_bb);
            // factor in correlation scale so point and Laplacian rows are balanced
            let scale: Vec<f64> = (0..n)
                .map(|i| full[(i, i)].max(f64::MIN_POSITIVE).sqrt())
                .collect();
            let corr = DMatrix::from_fn(n, n, |i, j| full[(i, j)] / (scale[i] * scale[j]));
            let mut factor = pivoted_cholesky(&corr, SAMPLE_FACTOR_TOL)?;
            for (i, mut row) in factor.row_iter_mut().enumerate() {
                row *= scale[i];
            }
            let rank = factor.ncols();
            let sd = tau.sqrt();
            let mut xi = DMatrix::zeros(rank, mc.samples);
            let mut eps = DMatrix::zeros(n_c, mc.samples);
            let mut eps_b = DMatrix::zeros(n_b, mc.samples);
            for k in 0..mc.samples {
                let mut g = rng::stream(mc.seed, k as u64);
                for i in 0..rank {
                    xi[(i, k)] = StandardNormal.sample(&mut g);
                }
                for i in 0..n_b {
                    let z: f64 = StandardNormal.sample(&mut g);
                    eps_b[(i, k)] = sd * z;
                }
                for i in 0..n_c {
                    let z: f64 = StandardNormal.sample(&mut g);
                    eps[(i, k)] = sd * z;
                }
            }
            let f = factor * xi;
            let mut r = f.rows(0, n_g + n_c).into_owned();
            if let Some(solver) = &solver {
                let y_b = f.rows(n_g + n_c, n_b) + eps_b;
                r -= &k_jb * solver.solve(&y_b);
            }
            residuals = Some(Residuals { r, eps });
        }
        Ok(Self {
            n_g,
            n_c,
            weight: problem.grid_weight(),
            tau,
            s,
            residuals,
        })
    }

    fn grid_trace(&self) -> f64 {
        (0..self.n_g).map(|g| self.s[(g, g)]).sum()
    }

    fn current(&self, cfg: &GreedyConfig) -> Result<Estimate> {
        match (cfg.objective, cfg.norm) {
            (GreedyObjective::Trace, _) => Ok(Estimate::exact(self.weight * self.grid_trace())),
            (GreedyObjective::Bpn, NormOrder::Infinity) => {
                let res = self.residuals.as_ref().expect("sampled engine");
                let values: Vec<f64> = (0..res.r.ncols())
                    .map(|k| {
                        let col = res.r.column(k);
                        std::f64::consts::SQRT_2 * col.rows(0, self.n_g).amax()
                    })
                    .collect();
                Estimate::from_samples(&values)
            }
            (GreedyObjective::Bpn, _) => Ok(Estimate::exact(2.0 * self.weight * self.grid_trace())),
        }
    }

    /// Criterion after adding candidate `c`.
    fn score(&self, c: usize, cfg: &GreedyConfig) -> Result<Estimate> {
        let j = self.n_g + c;
        let denom = self.s[(j, j)] + self.tau;
        let v = self.s.column(j);
        match (cfg.objective, cfg.norm) {
            (GreedyObjective::Trace, _) => {
                let t: f64 = (0..self.n_g).map(|g| self.s[(g, g)] - v[g] * v[g] / denom).sum();
                Ok(Estimate::exact(self.weight * t))
            }
            (GreedyObjective::Bpn, NormOrder::Infinity) => {
                let res = self.residuals.as_ref().expect("sampled engine");
                let coef: Vec<f64> = v.rows(0, self.n_g).iter().map(|x| x / denom).collect();
                let values: Vec<f64> = (0..res.r.ncols())
                    .map(|k| {
                        let col = res.r.column(k);
                        let z = col[j] + res.eps[(c, k)];
                        let grid = &col.as_slice()[..self.n_g];
                        let m = grid
                            .iter()
                            .zip(&coef)
                            .fold(0.0f64, |m, (r, a)| m.max((r - a * z).abs()));
                        std::f64::consts::SQRT_2 * m
                    })
                    .collect();
                Estimate::from_samples(&values)
            }
            (GreedyObjective::Bpn, _) => {
                let reduction = v.rows(0, self.n_g).norm_squared() / denom;
                Ok(Estimate::exact(
                    2.0 * self.weight * (self.grid_trace() - reduction),
                ))
            }
        }
    }

    fn observe(&mut self, c: usize) {
        let j = self.n_g + c;
        let denom = self.s[(j, j)] + self.tau;
        let col = self.s.column(j).into_owned();
        if let Some(res) = &mut self.residuals {
            let z: DVector<f64> = (res.r.row(j).transpose() + res.eps.row(c).transpose()) / denom;
            res.r.ger(-1.0, &col, &z, 1.0);
        }
        self.s.ger(-1.0 / denom, &col, &col, 1.0);
    }
}

/// Greedy sequential design: each of `m` steps adds the candidate with the
/// smallest criterion, ties going to the lowest candidate index.
pub fn greedy_design(problem: &EllipticDesignProblem, m: usize, cfg: &GreedyConfig) -> Result<GreedyResult> {
    if m == 0 {
        return Err(Error::InvalidSpec("need at least one point".into()));
    }
    check_norm(cfg.norm)?;
    let sampled = cfg.objective == GreedyObjective::Bpn && cfg.norm == NormOrder::Infinity;
    let mut engine = Engine::new(problem, sampled.then_some(cfg.mc))?;
    if m > engine.n_c {
        return Err(Error::InvalidSpec(format!(
            "cannot place {m} points on {} candidates",
            engine.n_c
        )));
    }
    let candidates = problem.candidates();
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let mut contours = Vec::with_capacity(m);
    let mut value_trace = Vec::with_capacity(m);
    let mut covariance_trace = Vec::with_capacity(m);
    let initial_value = engine.current(cfg)?.value;
    for step in 1..=m {
        let current = engine.current(cfg)?;
        let scores: Vec<Estimate> = (0..engine.n_c)
            .into_par_iter()
            .map(|c| {
                if chosen.contains(&c) {
                    Ok(current)
                } else {
                    engine.score(c, cfg)
                }
            })
            .collect::<Result<_>>()?;
        let best = scores
            .iter()
            .enumerate()
            .filter(|(c, _)| !chosen.contains(c))
            .map(|(_, e)| e.value)
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(Error::AllValuesNonFinite);
        }
        let tol = CANDIDATE_TIE_TOLERANCE * best.abs().max(f64::MIN_POSITIVE);
        let pick = (0..engine.n_c)
            .find(|c| !chosen.contains(c) && scores[*c].value <= best + tol)
            .expect("a finite minimum exists");
        contours.push(ContourGrid {
            step,
            candidates: candidates.clone(),
            values: scores.iter().map(|e| e.value).collect(),
            stderr: scores.iter().map(|e| e.stderr).collect(),
        });
        value_trace.push(scores[pick].value);
        engine.observe(pick);
        chosen.push(pick);
        covariance_trace.push(engine.weight * engine.grid_trace());
    }
    let n_g = engine.n_g;
    let grid_covariance = engine.s.view((0, 0), (n_g, n_g)).into_owned();
    Ok(GreedyResult {
        state: DesignState {
            points: chosen.iter().map(|&c| candidates[c]).collect(),
            grid_covariance,
        },
        chosen,
        contours,
        initial_value,
        value_trace,
        covariance_trace,
    })
}

/// Greedy design for the weighted trace of the grid covariance.
pub fn greedy_trace_design(problem: &EllipticDesignProblem, m: usize) -> Result<GreedyResult> {
    greedy_design(
        problem,
        m,
        &GreedyConfig {
            norm: NormOrder::Finite(2.0),
            objective: GreedyObjective::Trace,
            mc: PdeMonteCarlo::default(),
        },
    )
}

/// Smallest pairwise distance between points.
pub fn min_pairwise_distance(points: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            best = best.min(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    best
}

/// `m` points uniform on the open unit square, deterministic in `seed`.
pub fn random_design(m: usize, seed: u64) -> Vec<Point> {
    let mut g = rng::stream(seed, 0);
    (0..m)
        .map(|_| {
            let x: f64 = rand::Rng::random_range(&mut g, 1e-3..1.0 - 1e-3);
            let y: f64 = rand::Rng::random_range(&mut g, 1e-3..1.0 - 1e-3);
            [x, y]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::bpn_mc;

    fn small() -> EllipticDesignProblem {
        EllipticDesignProblem {
            grid_size: 8,
            candidate_size: 7,
            boundary_points: 16,
            lengthscale: 0.35,
        }
    }

    #[test]
    fn layout() {
        let p = EllipticDesignProblem::default();
        let b = p.boundary();
        assert_eq!(b.len(), 32);
        assert_eq!(b[0], [0.0, 0.0]);
        assert_eq!(b[8], [1.0, 0.0]);
        assert_eq!(b[16], [1.0, 1.0]);
        assert_eq!(b[24], [0.0, 1.0]);
        assert!(b
            .iter()
            .all(|q| q[0] == 0.0 || q[0] == 1.0 || q[1] == 0.0 || q[1] == 1.0));
        let c = p.candidates();
        assert_eq!(c.len(), 625);
        assert!(c
            .iter()
            .all(|q| q[0] > 0.0 && q[0] < 1.0 && q[1] > 0.0 && q[1] < 1.0));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p.grid().len(), 1024);
    }

    #[test]
    fn prior_without_observations() {
        let p = EllipticDesignProblem {
            boundary_points: 0,
            ..small()
        };
        let cov = posterior_on_grid(&p, &[]).unwrap();
        let k = p.kernel().unwrap();
        let g = p.grid();
        assert_eq!(cov[(3, 17)], k.eval(&g[3], &g[17]));
    }

    #[test]
    fn one_point_reduces_trace_and_duplicates_fail() {
        let p = small();
        let base = posterior_on_grid(&p, &[]).unwrap().trace();
        let one = posterior_on_grid(&p, &[[0.5, 0.5]]).unwrap().trace();
        assert!(one < base);
        match posterior_on_grid(&p, &[[0.5, 0.5], [0.3, 0.3], [0.5, 0.5]]) {
            Err(Error::SingularGram(m)) => assert!(m.contains("0 (0.5, 0.5) and 2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn greedy_cache_matches_batch() {
        let p = small();
        let cfg = GreedyConfig {
            norm: NormOrder::Finite(2.0),
            objective: GreedyObjective::Bpn,
            mc: PdeMonteCarlo::default(),
        };
        let r = greedy_design(&p, 4, &cfg).unwrap();
        let batch = posterior_on_grid(&p, &r.state.points).unwrap();
        let diff = (&batch - &r.state.grid_covariance).amax();
        assert!(diff < 1e-10, "{diff:e}");
        for w in r.covariance_trace.windows(2) {
            assert!(w[1] < w[0] - 1e-9);
        }
        // each step's contour minimum is the analytic BPN of the new design
        let s = DesignState::new(&p, r.state.points[..1].to_vec()).unwrap();
        assert!((r.value_trace[0] - 2.0 * s.weighted_trace(&p)).abs() < 1e-10);
    }

    #[test]
    fn surface_for_redundant_point() {
        let p = small();
        let s = DesignState::new(&p, vec![[0.5, 0.5]]).unwrap();
        let mc = PdeMonteCarlo::default();
        let base = design_bpn(&p, &s.points, NormOrder::Finite(2.0), mc)
            .unwrap()
            .value;
        let near = bpn_surface(&p, &s, [0.5 + 2e-6, 0.5], NormOrder::Finite(2.0), mc)
            .unwrap()
            .value;
        let far = bpn_surface(&p, &s, [0.25, 0.75], NormOrder::Finite(2.0), mc)
            .unwrap()
            .value;
        // a near-duplicate differences two Laplacians, which under the small
        // nugget still carries some derivative information
        assert!(
            near <= base && base - near < 0.5 * (base - far),
            "{near} {base} {far}"
        );
        assert!((base - 2.0 * s.weighted_trace(&p)).abs() < 1e-8);
        let a = bpn_surface(&p, &s, [0.25, 0.75], NormOrder::Infinity, mc).unwrap();
        let b = bpn_surface(&p, &s, [0.25, 0.75], NormOrder::Infinity, mc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_scores_agree_with_direct_pair_reduction() {
        let p = small();
        let mc = PdeMonteCarlo {
            seed: 3,
            samples: 4000,
        };
        let cfg = GreedyConfig {
            norm: NormOrder::Infinity,
            objective: GreedyObjective::Bpn,
            mc,
        };
        let r = greedy_design(&p, 2, &cfg).unwrap();
        let direct = design_bpn(
            &p,
            &r.state.points,
            NormOrder::Infinity,
            PdeMonteCarlo {
                seed: 9,
                samples: 4000,
            },
        )
        .unwrap();
        let step = &r.contours[1];
        let engine = Estimate {
            value: step.values[r.chosen[1]],
            stderr: step.stderr[r.chosen[1]],
        };
        assert!(engine.agrees_with(&direct, 3.0), "{engine:?} vs {direct:?}");
    }

    #[test]
    fn nested_estimator_agrees() {
        let p = small();
        let pts = [[0.3, 0.6], [0.7, 0.4]];
        let exp = linear_gaussian_experiment(&p, &pts).unwrap();
        let n_g = p.grid_size * p.grid_size;
        let nested = bpn_mc(
            &exp,
            |x, xp| (0..n_g).fold(0.0f64, |m, g| m.max((x[g] - xp[g]).abs())),
            &MonteCarloConfig::new(5, 4000, 4).unwrap(),
        )
        .unwrap();
        let reduced = design_bpn(
            &p,
            &pts,
            NormOrder::Infinity,
            PdeMonteCarlo {
                seed: 6,
                samples: 4000,
            },
        )
        .unwrap();
        assert!(nested.agrees_with(&reduced, 3.0), "{nested:?} vs {reduced:?}");
    }

    #[test]
    fn csv_layout() {
        let c = ContourGrid {
            step: 1,
            candidates: vec![[0.25, 0.5], [0.5, 0.25]],
            values: vec![0.1, 1.0 / 3.0],
            stderr: vec![0.0, 0.0],
        };
        assert_eq!(c.to_csv(), "x,y,bpn\n0.25,0.5,0.1\n0.5,0.25,0.3333333333333333\n");
    }
}
