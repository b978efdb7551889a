//! Integration of a Wiener process path on `[0, 1]` from its values at
//! finitely many nodes.
//!
//! Conditional on the node values the path is a sequence of independent
//! Brownian bridges, so the integral is Gaussian with the trapezoid rule as
//! mean and variance `sum dt^3 / 12`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::criteria::{bpn_mc, MonteCarloConfig};
use crate::decision::{bayes_risk, minimize_box, ExperimentModel, Integrator, PosteriorModel};
use crate::estimate::Estimate;
use crate::rng::{self, McRng};
use crate::{Error, Result};

/// Default bridge discretization for the Monte Carlo routes.
pub const DEFAULT_POINTS_PER_INTERVAL: usize = 64;
/// Smallest accepted bridge discretization.
pub const MIN_POINTS_PER_INTERVAL: usize = 8;

/// Interior nodes `t_1 <= ... <= t_{n-1}` with endpoints `0` and `1` implied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureDesign {
    interior: Vec<f64>,
}

impl QuadratureDesign {
    /// Sorts the nodes; every node must lie in `[0, 1]`.
    pub fn new(mut interior: Vec<f64>) -> Result<Self> {
        if let Some(t) = interior.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidSpec(format!("node {t} is outside [0, 1]")));
        }
        interior.sort_by(f64::total_cmp);
        Ok(Self { interior })
    }

    /// `t_i = i / n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpec("need at least one interval".into()));
        }
        Self::new((1..n).map(|i| i as f64 / n as f64).collect())
    }

    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    /// Number of intervals `n`.
    pub fn n_intervals(&self) -> usize {
        self.interior.len() + 1
    }

    /// `0, t_1, ..., t_{n-1}, 1`.
    pub fn all_nodes(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.interior.len() + 2);
        v.push(0.0);
        v.extend_from_slice(&self.interior);
        v.push(1.0);
        v
    }

    pub fn intervals(&self) -> Vec<f64> {
        self.all_nodes().windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn cubes(&self) -> f64 {
        self.intervals().iter().map(|d| d * d * d).sum()
    }
}

/// Posterior of the integral given the path values at every node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePosterior {
    pub mean: f64,
    pub variance: f64,
}

/// `values` holds the path at `0, t_1, ..., t_{n-1}, 1`.
pub fn quadrature_posterior(design: &QuadratureDesign, values: &[f64]) -> Result<QuadraturePosterior> {
    let nodes = design.all_nodes();
    if values.len() != nodes.len() {
        return Err(Error::LengthMismatch {
            expected: nodes.len(),
            actual: values.len(),
        });
    }
    let mean = nodes
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
        .sum();
    Ok(QuadraturePosterior {
        mean,
        variance: posterior_variance(design),
    })
}

/// `sum dt^3 / 12`, the Bayes risk of the trapezoid rule under squared loss.
pub fn posterior_variance(design: &QuadratureDesign) -> f64 {
    design.cubes() / 12.0
}

/// `sum dt^3 / 6`.
pub fn bpn_closed_form(design: &QuadratureDesign) -> f64 {
    design.cubes() / 6.0
}

/// Summary of one design.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureReport {
    pub nodes: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posterior_mean: Option<f64>,
    pub posterior_variance: f64,
    pub bpn: f64,
    pub bdt: f64,
}

pub fn report(design: &QuadratureDesign, values: Option<&[f64]>) -> Result<QuadratureReport> {
    let posterior_mean = values
        .map(|v| quadrature_posterior(design, v).map(|p| p.mean))
        .transpose()?;
    Ok(QuadratureReport {
        nodes: design.all_nodes(),
        posterior_mean,
        posterior_variance: posterior_variance(design),
        bpn: bpn_closed_form(design),
        bdt: posterior_variance(design),
    })
}

/// Integral over `[0, dt]` of a Brownian bridge pinned at zero at both ends,
/// simulated on `k` sub-steps. Each sub-step adds an independent
/// `N(0, h^3 / 12)` trapezoid correction, so the result is exactly
/// `N(0, dt^3 / 12)` in distribution for any `k`.
fn bridge_integral(dt: f64, k: usize, rng: &mut McRng) -> f64 {
    if dt <= 0.0 {
        return 0.0;
    }
    let h = dt / k as f64;
    let sh = h.sqrt();
    let corr = (h * h * h / 12.0).sqrt();
    let mut walk = 0.0;
    // trapezoid of the free walk B_j, then subtract the pinning ramp
    let mut trap = 0.0;
    let mut extra = 0.0;
    for _ in 0..k {
        let prev = walk;
        let z: f64 = StandardNormal.sample(rng);
        walk += sh * z;
        trap += 0.5 * (prev + walk) * h;
        let c: f64 = StandardNormal.sample(rng);
        extra += corr * c;
    }
    // integral of the ramp (s / dt) * B_k over [0, dt]
    trap - 0.5 * dt * walk + extra
}

/// Wiener prior observed at the nodes of a design. States are the node
/// values together with the integral; observations are the node values.
#[derive(Clone, Debug)]
pub struct WienerQuadratureModel {
    design: QuadratureDesign,
    points_per_interval: usize,
}

impl WienerQuadratureModel {
    pub fn new(design: QuadratureDesign, points_per_interval: usize) -> Result<Self> {
        if points_per_interval < MIN_POINTS_PER_INTERVAL {
            return Err(Error::SamplerFailure(format!(
                "bridge discretization {points_per_interval} is below {MIN_POINTS_PER_INTERVAL}"
            )));
        }
        Ok(Self {
            design,
            points_per_interval,
        })
    }

    fn integral_given(&self, values: &[f64], rng: &mut McRng) -> f64 {
        self.design
            .all_nodes()
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| {
                let dt = t[1] - t[0];
                0.5 * (v[0] + v[1]) * dt + bridge_integral(dt, self.points_per_interval, rng)
            })
            .sum()
    }
}

/// Node values and the integral of the path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathState {
    pub values: Vec<f64>,
    pub integral: f64,
}

impl ExperimentModel for WienerQuadratureModel {
    type State = PathState;
    type Observation = Vec<f64>;

    fn sample_state(&self, rng: &mut McRng) -> PathState {
        let mut values = vec![0.0];
        let mut w = 0.0;
        for dt in self.design.intervals() {
            let z: f64 = StandardNormal.sample(rng);
            w += dt.sqrt() * z;
            values.push(w);
        }
        let integral = self.integral_given(&values, rng);
        PathState { values, integral }
    }

    fn sample_observation(&self, state: &PathState, _rng: &mut McRng) -> Vec<f64> {
        state.values.clone()
    }
}

impl PosteriorModel for WienerQuadratureModel {
    fn sample_posterior(&self, y: &Vec<f64>, rng: &mut McRng) -> Result<PathState> {
        if y.len() != self.design.n_intervals() + 1 {
            return Err(Error::SamplerFailure(
                "observation length does not match design".into(),
            ));
        }
        Ok(PathState {
            values: y.clone(),
            integral: self.integral_given(y, rng),
        })
    }
}

/// Nested Monte Carlo BPN under the squared loss on the integral.
pub fn bpn_monte_carlo(
    design: &QuadratureDesign,
    cfg: &MonteCarloConfig,
    points_per_interval: usize,
) -> Result<Estimate> {
    let model = WienerQuadratureModel::new(design.clone(), points_per_interval)?;
    bpn_mc(
        &model,
        |x: &PathState, xp: &PathState| (x.integral - xp.integral).powi(2),
        cfg,
    )
}

/// Simulated Bayes risk of the trapezoid rule under squared loss.
pub fn bdt_monte_carlo(
    design: &QuadratureDesign,
    seed: u64,
    samples: usize,
    points_per_interval: usize,
) -> Result<Estimate> {
    let model = WienerQuadratureModel::new(design.clone(), points_per_interval)?;
    let nodes = design.all_nodes();
    let trapezoid = |v: &Vec<f64>| -> f64 {
        nodes
            .windows(2)
            .zip(v.windows(2))
            .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
            .sum()
    };
    bayes_risk(
        &model,
        |x: &PathState, a: &f64| (x.integral - a).powi(2),
        trapezoid,
        Integrator::MonteCarlo { seed, samples },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignObjective {
    Bpn,
    Bdt,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignOptimizer {
    ClosedForm,
    /// Cyclic one-node line searches from a random start.
    CoordinateDescent {
        seed: u64,
    },
}

/// Function values resolve a minimizer only to about `sqrt(eps)`.
const DESCENT_TOL: f64 = 1e-9;
const MAX_DESCENT_SWEEPS: usize = 100_000;

/// Design with `n` intervals minimizing `objective`.
pub fn optimize_design(
    n: usize,
    optimizer: DesignOptimizer,
    objective: DesignObjective,
) -> Result<QuadratureDesign> {
    if n == 0 {
        return Err(Error::InvalidSpec("need at least one interval".into()));
    }
    match optimizer {
        DesignOptimizer::ClosedForm => QuadratureDesign::uniform(n),
        DesignOptimizer::CoordinateDescent { seed } => {
            let f = |d: &QuadratureDesign| match objective {
                DesignObjective::Bpn => bpn_closed_form(d),
                DesignObjective::Bdt => posterior_variance(d),
            };
            let mut r = rng::stream(seed, 0);
            let mut t: Vec<f64> = (1..n).map(|_| rand::Rng::random::<f64>(&mut r)).collect();
            t.sort_by(f64::total_cmp);
            let mut value = f(&QuadratureDesign { interior: t.clone() });
            for _ in 0..MAX_DESCENT_SWEEPS {
                let mut moved = 0.0f64;
                for i in 0..t.len() {
                    let lo = if i == 0 { 0.0 } else { t[i - 1] };
                    let hi = if i + 1 == t.len() { 1.0 } else { t[i + 1] };
                    let line = |s: &[f64]| {
                        let mut z = t.clone();
                        z[i] = s[0];
                        f(&QuadratureDesign { interior: z })
                    };
                    let (s, _) = minimize_box(line, &[lo], &[hi], DESCENT_TOL)?;
                    moved = moved.max((s[0] - t[i]).abs());
                    t[i] = s[0];
                }
                let next = f(&QuadratureDesign { interior: t.clone() });
                let stalled = value - next <= 4.0 * f64::EPSILON * value;
                value = next;
                if moved <= DESCENT_TOL || stalled {
                    return QuadratureDesign::new(t);
                }
            }
            Err(Error::OptimizerDiverged(format!(
                "coordinate descent did not settle in {MAX_DESCENT_SWEEPS} sweeps"
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{gp_condition, KernelModel, LinearObservation};
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng;

    #[test]
    fn hand_cases() {
        let d = QuadratureDesign::uniform(2).unwrap();
        let p = quadrature_posterior(&d, &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(p.mean, 0.5);
        assert!((p.variance - 1.0 / 48.0).abs() < 1e-16);
        let one = QuadratureDesign::new(vec![]).unwrap();
        assert_eq!(bpn_closed_form(&one), 1.0 / 6.0);
        let four = QuadratureDesign::uniform(4).unwrap();
        // 4 * (1/4)^3 = 1/16
        assert!((bpn_closed_form(&four) - 1.0 / 96.0).abs() < 1e-15);
        assert!((posterior_variance(&four) - 1.0 / 192.0).abs() < 1e-15);
        assert!(matches!(
            quadrature_posterior(&four, &[0.0; 3]),
            Err(Error::LengthMismatch {
                expected: 5,
                actual: 3
            })
        ));
        assert!(QuadratureDesign::new(vec![1.2]).is_err());
    }

    proptest! {
        #[test]
        fn trapezoid_and_identities(seed in proptest::prelude::any::<u64>(), n in 1usize..12, c in -5.0f64..5.0) {
            let mut r = rng::stream(seed, 0);
            let d = QuadratureDesign::new((1..n).map(|_| r.random::<f64>()).collect()).unwrap();
            let values: Vec<f64> = (0..=n).map(|_| r.random_range(-2.0..2.0)).collect();
            // independent trapezoid: sum of node values times half the adjacent widths
            let nodes = d.all_nodes();
            let mut oracle = 0.0;
            for i in 0..=n {
                let left = if i > 0 { nodes[i] - nodes[i - 1] } else { 0.0 };
                let right = if i < n { nodes[i + 1] - nodes[i] } else { 0.0 };
                oracle += values[i] * 0.5 * (left + right);
            }
            let p = quadrature_posterior(&d, &values).unwrap();
            prop_assert!((p.mean - oracle).abs() < 1e-14);
            let flat = quadrature_posterior(&d, &vec![c; n + 1]).unwrap();
            prop_assert!((flat.mean - c).abs() < 1e-14);
            prop_assert!((bpn_closed_form(&d) - 2.0 * p.variance).abs() < 1e-15);
            // uniform spacing is never worse
            let u = QuadratureDesign::uniform(n).unwrap();
            prop_assert!(bpn_closed_form(&u) <= bpn_closed_form(&d) + 1e-15);
        }
    }

    #[test]
    fn variance_matches_integrated_gp_covariance() {
        let d = QuadratureDesign::new(vec![0.15, 0.4, 0.45, 0.8]).unwrap();
        let obs: Vec<_> = d
            .all_nodes()
            .into_iter()
            .map(|t| LinearObservation::point(&[t], 0.0))
            .collect();
        let gp = gp_condition(&KernelModel::wiener(), &obs, 1e-12).unwrap();
        let m = 400;
        let pts: Vec<Vec<f64>> = (0..m).map(|i| vec![(i as f64 + 0.5) / m as f64]).collect();
        let cov = gp.covariance(&pts).unwrap();
        let integral = cov.sum() / (m * m) as f64;
        assert!((integral - posterior_variance(&d)).abs() < 1e-5, "{integral}");
    }

    #[test]
    fn bridge_integral_variance() {
        let mut r = rng::stream(2, 0);
        let n = 40_000;
        let xs: Vec<f64> = (0..n).map(|_| bridge_integral(0.5, 8, &mut r)).collect();
        let e = Estimate::from_samples(&xs.iter().map(|x| x * x).collect::<Vec<_>>()).unwrap();
        assert!(e.agrees_with(&Estimate::exact(0.125 / 12.0), 3.0), "{e:?}");
    }

    #[test]
    fn monte_carlo_routes() {
        let d = QuadratureDesign::new(vec![0.1]).unwrap();
        let cfg = MonteCarloConfig::new(3, 20_000, 4).unwrap();
        let est = bpn_monte_carlo(&d, &cfg, 16).unwrap();
        let exact = (0.001 + 0.729) / 6.0;
        assert!(
            est.agrees_with(&Estimate::exact(exact), 3.0),
            "{est:?} vs {exact}"
        );
        let br = bdt_monte_carlo(&d, 4, 20_000, 16).unwrap();
        assert!(br.agrees_with(&Estimate::exact(exact / 2.0), 3.0), "{br:?}");
        assert!(matches!(
            bpn_monte_carlo(&d, &cfg, 4),
            Err(Error::SamplerFailure(_))
        ));
        // nodes on every sub-step: nothing left to learn
        let dense = QuadratureDesign::new((1..512).map(|i| i as f64 / 512.0).collect()).unwrap();
        let small = bpn_monte_carlo(&dense, &MonteCarloConfig::new(1, 200, 2).unwrap(), 8).unwrap();
        assert!(small.value < 1e-5);
        assert!(small.agrees_with(&Estimate::exact(bpn_closed_form(&dense)), 3.0));
    }

    #[test]
    fn optimizers() {
        assert!(
            optimize_design(1, DesignOptimizer::ClosedForm, DesignObjective::Bpn)
                .unwrap()
                .interior()
                .is_empty()
        );
        assert_eq!(
            optimize_design(4, DesignOptimizer::ClosedForm, DesignObjective::Bpn)
                .unwrap()
                .interior(),
            &[0.25, 0.5, 0.75]
        );
        for obj in [DesignObjective::Bpn, DesignObjective::Bdt] {
            let d = optimize_design(3, DesignOptimizer::CoordinateDescent { seed: 7 }, obj).unwrap();
            assert!((d.interior()[0] - 1.0 / 3.0).abs() < 1e-3);
            assert!((d.interior()[1] - 2.0 / 3.0).abs() < 1e-3);
        }
        for seed in 0..4 {
            let d = optimize_design(
                9,
                DesignOptimizer::CoordinateDescent { seed },
                DesignObjective::Bpn,
            )
            .unwrap();
            for (i, t) in d.interior().iter().enumerate() {
                assert!((t - (i + 1) as f64 / 9.0).abs() < 1e-3);
            }
        }
    }
}
