//! Exact design on finite state and observation spaces.
//!
//! Probabilities are validated once at construction and never renormalized.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::criteria::{
    bdt_criterion_discrete, kl_gain_discrete, optimal_set, CriterionReport, CriterionValue, Sense,
    EXACT_TIE_TOLERANCE,
};
use crate::decision::{bayes_rule_discrete, ExperimentModel, PosteriorModel};
use crate::rng::McRng;
use crate::{Error, Result};

const SUM_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub name: String,
    pub prior: f64,
}

/// On-disk form of a [`DiscreteProblem`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteProblemFile {
    pub states: Vec<StateSpec>,
    /// Experiment id to likelihood rows `[state][observation]`.
    pub experiments: BTreeMap<String, Vec<Vec<f64>>>,
    pub actions: Vec<String>,
    /// `[state][action]`.
    pub loss: Vec<Vec<f64>>,
    /// `[state][state]`, needed for BPN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_loss: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteProblem {
    spec: DiscreteProblemFile,
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidSpec(format!("{what} has invalid probability {v}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(Error::InvalidSpec(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn check_table(what: &str, t: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if t.len() != rows || t.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidSpec(format!("{what} must be {rows}x{cols}")));
    }
    if t.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidSpec(format!(
            "{what} entries must be finite and nonnegative"
        )));
    }
    Ok(())
}

impl DiscreteProblem {
    pub fn new(spec: DiscreteProblemFile) -> Result<Self> {
        let n = spec.states.len();
        if n == 0 {
            return Err(Error::InvalidSpec("no states".into()));
        }
        if spec.experiments.is_empty() {
            return Err(Error::InvalidSpec("no experiments".into()));
        }
        if spec.actions.is_empty() {
            return Err(Error::InvalidSpec("no actions".into()));
        }
        let prior: Vec<f64> = spec.states.iter().map(|s| s.prior).collect();
        check_distribution("prior", &prior)?;
        for (id, rows) in &spec.experiments {
            let n_obs = rows.first().map_or(0, |r| r.len());
            if rows.len() != n || n_obs == 0 || rows.iter().any(|r| r.len() != n_obs) {
                return Err(Error::InvalidSpec(format!(
                    "experiment {id} needs {n} rows of equal, nonzero length"
                )));
            }
            for (i, r) in rows.iter().enumerate() {
                check_distribution(&format!("experiment {id} row {i}"), r)?;
            }
        }
        check_table("loss", &spec.loss, n, spec.actions.len())?;
        if let Some(sl) = &spec.state_loss {
            check_table("state_loss", sl, n, n)?;
        }
        Ok(Self { spec })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: DiscreteProblemFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::InvalidProblem {
                path,
                message: inner.to_string(),
            }
        })?;
        Self::new(spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidProblem {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }

    pub fn spec(&self) -> &DiscreteProblemFile {
        &self.spec
    }

    pub fn n_states(&self) -> usize {
        self.spec.states.len()
    }

    pub fn prior(&self) -> Vec<f64> {
        self.spec.states.iter().map(|s| s.prior).collect()
    }

    pub fn experiment_ids(&self) -> Vec<String> {
        self.spec.experiments.keys().cloned().collect()
    }

    pub fn likelihood(&self, e: &str) -> Result<&[Vec<f64>]> {
        self.spec
            .experiments
            .get(e)
            .map(|r| r.as_slice())
            .ok_or_else(|| Error::UnknownExperiment(e.to_string()))
    }

    pub fn n_observations(&self, e: &str) -> Result<usize> {
        Ok(self.likelihood(e)?[0].len())
    }

    pub fn actions(&self) -> &[String] {
        &self.spec.actions
    }

    pub fn loss(&self) -> &[Vec<f64>] {
        &self.spec.loss
    }

    pub fn state_loss(&self) -> Result<&[Vec<f64>]> {
        self.spec.state_loss.as_deref().ok_or(Error::MissingLossTable)
    }

    /// Marginal law of the observation, `p(y | e)`.
    pub fn marginal(&self, e: &str) -> Result<Vec<f64>> {
        let lik = self.likelihood(e)?;
        let mut m = vec![0.0; lik[0].len()];
        for (s, row) in self.spec.states.iter().zip(lik) {
            for (my, l) in m.iter_mut().zip(row) {
                *my += s.prior * l;
            }
        }
        Ok(m)
    }

    /// Posterior over states given observation `y` of experiment `e`.
    pub fn posterior(&self, e: &str, y: usize) -> Result<Vec<f64>> {
        let lik = self.likelihood(e)?;
        if y >= lik[0].len() {
            return Err(Error::LengthMismatch {
                expected: lik[0].len(),
                actual: y + 1,
            });
        }
        let joint: Vec<f64> = self
            .spec
            .states
            .iter()
            .zip(lik)
            .map(|(s, row)| s.prior * row[y])
            .collect();
        let z: f64 = joint.iter().sum();
        if !(z > 0.0) {
            return Err(Error::ZeroProbabilityObservation {
                experiment: e.to_string(),
                observation: y,
            });
        }
        Ok(joint.into_iter().map(|p| p / z).collect())
    }

    fn check_rule(&self, e: &str, rule: &[Option<usize>]) -> Result<()> {
        let marginal = self.marginal(e)?;
        if rule.len() != marginal.len() {
            return Err(Error::LengthMismatch {
                expected: marginal.len(),
                actual: rule.len(),
            });
        }
        for (y, (a, p)) in rule.iter().zip(&marginal).enumerate() {
            match a {
                Some(a) if *a >= self.spec.actions.len() => {
                    return Err(Error::PreconditionViolated(format!(
                        "rule maps observation {y} to unknown action {a}"
                    )))
                }
                None if *p > 0.0 => {
                    return Err(Error::PreconditionViolated(format!(
                        "rule has no action for observation {y}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Bayes risk of a rule table, summing over states first and then
    /// observations given the state.
    pub fn bayes_risk(&self, e: &str, rule: &[Option<usize>]) -> Result<f64> {
        self.check_rule(e, rule)?;
        let lik = self.likelihood(e)?;
        let mut total = 0.0;
        for (x, (s, row)) in self.spec.states.iter().zip(lik).enumerate() {
            for (y, l) in row.iter().enumerate() {
                if s.prior * l > 0.0 {
                    let a = rule[y].expect("checked above");
                    total += s.prior * l * self.spec.loss[x][a];
                }
            }
        }
        Ok(total)
    }

    /// Bayes risk of a rule table, summing over observations first and then
    /// the posterior given each observation.
    pub fn bayes_risk_by_observation(&self, e: &str, rule: &[Option<usize>]) -> Result<f64> {
        self.check_rule(e, rule)?;
        let marginal = self.marginal(e)?;
        let mut total = 0.0;
        for (y, &py) in marginal.iter().enumerate() {
            if py > 0.0 {
                let a = rule[y].expect("checked above");
                let post = self.posterior(e, y)?;
                let inner: f64 = post.iter().zip(&self.spec.loss).map(|(p, row)| p * row[a]).sum();
                total += py * inner;
            }
        }
        Ok(total)
    }

    /// Bayes risk of the Bayes rule of `e`.
    pub fn bayes_risk_optimal(&self, e: &str) -> Result<f64> {
        let rule = bayes_rule_discrete(self, e)?;
        self.bayes_risk(e, &rule)
    }

    /// BPN by the triple sum over `x`, then `y | x`, then `x' | y`.
    pub fn bpn_exact(&self, e: &str) -> Result<f64> {
        let sl = self.state_loss()?;
        let lik = self.likelihood(e)?;
        let n_obs = lik[0].len();
        let posteriors: Vec<Option<Vec<f64>>> = (0..n_obs).map(|y| self.posterior(e, y).ok()).collect();
        let mut total = 0.0;
        for (x, (s, row)) in self.spec.states.iter().zip(lik).enumerate() {
            for (y, l) in row.iter().enumerate() {
                let w = s.prior * l;
                if w > 0.0 {
                    let post = posteriors[y].as_ref().expect("positive marginal");
                    let inner: f64 = post.iter().zip(&sl[x]).map(|(p, c)| p * c).sum();
                    total += w * inner;
                }
            }
        }
        Ok(total)
    }

    /// BPN by summing over `y` and then the posterior pair `(x, x')`.
    pub fn bpn_exact_by_observation(&self, e: &str) -> Result<f64> {
        let sl = self.state_loss()?;
        let marginal = self.marginal(e)?;
        let mut total = 0.0;
        for (y, &py) in marginal.iter().enumerate() {
            if py > 0.0 {
                let post = self.posterior(e, y)?;
                let mut inner = 0.0;
                for (x, px) in post.iter().enumerate() {
                    for (xp, pxp) in post.iter().enumerate() {
                        inner += px * pxp * sl[x][xp];
                    }
                }
                total += py * inner;
            }
        }
        Ok(total)
    }

    /// View of one experiment as a sampling model over state indices.
    pub fn experiment(&self, e: &str) -> Result<DiscreteExperiment<'_>> {
        Ok(DiscreteExperiment {
            problem: self,
            likelihood: self.likelihood(e)?,
            id: e.to_string(),
            prior: self.prior(),
        })
    }
}

fn sample_categorical(p: &[f64], rng: &mut McRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in p.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// One experiment of a [`DiscreteProblem`]; states and observations are indices.
pub struct DiscreteExperiment<'a> {
    problem: &'a DiscreteProblem,
    likelihood: &'a [Vec<f64>],
    id: String,
    prior: Vec<f64>,
}

impl ExperimentModel for DiscreteExperiment<'_> {
    type State = usize;
    type Observation = usize;

    fn sample_state(&self, rng: &mut McRng) -> usize {
        sample_categorical(&self.prior, rng)
    }

    fn sample_observation(&self, state: &usize, rng: &mut McRng) -> usize {
        sample_categorical(&self.likelihood[*state], rng)
    }

    fn joint_support(&self) -> Option<Vec<(usize, usize, f64)>> {
        let mut out = Vec::new();
        for (x, (p, row)) in self.prior.iter().zip(self.likelihood).enumerate() {
            for (y, l) in row.iter().enumerate() {
                if p * l > 0.0 {
                    out.push((x, y, p * l));
                }
            }
        }
        Some(out)
    }
}

impl PosteriorModel for DiscreteExperiment<'_> {
    fn sample_posterior(&self, y: &usize, rng: &mut McRng) -> Result<usize> {
        let post = self
            .problem
            .posterior(&self.id, *y)
            .map_err(|e| Error::SamplerFailure(e.to_string()))?;
        Ok(sample_categorical(&post, rng))
    }

    fn posterior_support(&self, y: &usize) -> Option<Vec<(usize, f64)>> {
        let post = self.problem.posterior(&self.id, *y).ok()?;
        Some(post.into_iter().enumerate().filter(|(_, p)| *p > 0.0).collect())
    }
}

/// Prior of the three-state, two-experiment divergence construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSpec {
    pub pi1: f64,
    pub pi2: f64,
    pub pi3: f64,
}

impl CounterexampleSpec {
    pub fn new(pi1: f64, pi2: f64, pi3: f64) -> Result<Self> {
        let ok = 0.0 < pi1 && pi1 <= pi2 && pi2 <= pi3 && pi3 < 1.0;
        if !ok {
            return Err(Error::InvalidSpec(format!(
                "need 0 < pi1 <= pi2 <= pi3 < 1, got ({pi1}, {pi2}, {pi3})"
            )));
        }
        let s = pi1 + pi2 + pi3;
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidSpec(format!("probabilities sum to {s}, not 1")));
        }
        Ok(Self { pi1, pi2, pi3 })
    }
}

/// Three states `s1, s2, s3`. Experiment `e1` reports whether the state is
/// `s1`; `e2` reports whether it is `s1` or `s2`. The actions guess `s1` or
/// not, and both losses are 0-1 on the indicator of `s1`.
pub fn build_counterexample(spec: CounterexampleSpec) -> Result<DiscreteProblem> {
    let spec = CounterexampleSpec::new(spec.pi1, spec.pi2, spec.pi3)?;
    // observation 0 is "no", observation 1 is "yes"
    let mut experiments = BTreeMap::new();
    experiments.insert(
        "e1".to_string(),
        vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]],
    );
    experiments.insert(
        "e2".to_string(),
        vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
    );
    DiscreteProblem::new(DiscreteProblemFile {
        states: [("s1", spec.pi1), ("s2", spec.pi2), ("s3", spec.pi3)]
            .into_iter()
            .map(|(n, p)| StateSpec {
                name: n.into(),
                prior: p,
            })
            .collect(),
        experiments,
        actions: vec!["s1".into(), "not_s1".into()],
        loss: vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]],
        state_loss: Some(vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ]),
    })
}

/// Criterion reports for every experiment of a discrete problem.
#[derive(Clone, Debug, Serialize)]
pub struct DiscreteReport {
    pub bdt: CriterionReport,
    /// Present when the problem has a state-to-state loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bpn: Option<CriterionReport>,
    pub kl_gain: CriterionReport,
}

pub fn criteria_report(problem: &DiscreteProblem) -> Result<DiscreteReport> {
    let ids = problem.experiment_ids();
    let collect = |f: &dyn Fn(&str) -> Result<f64>| -> Result<Vec<CriterionValue>> {
        ids.iter()
            .map(|id| {
                Ok(CriterionValue {
                    id: id.clone(),
                    value: f(id)?,
                    stderr: 0.0,
                })
            })
            .collect()
    };
    let make = |name: &str, sense: Sense, values: Vec<CriterionValue>| -> Result<CriterionReport> {
        let optimal = optimal_set(&values, sense, EXACT_TIE_TOLERANCE)?;
        Ok(CriterionReport {
            criterion: name.to_string(),
            sense,
            values,
            optimal_set: optimal,
            tie_tolerance: EXACT_TIE_TOLERANCE,
        })
    };
    let bdt = make(
        "bdt",
        Sense::Minimize,
        collect(&|id| bdt_criterion_discrete(problem, id))?,
    )?;
    let bpn = if problem.spec.state_loss.is_some() {
        Some(make(
            "bpn",
            Sense::Minimize,
            collect(&|id| problem.bpn_exact(id))?,
        )?)
    } else {
        None
    };
    let kl_gain = make(
        "kl_gain",
        Sense::Maximize,
        collect(&|id| kl_gain_discrete(problem, id))?,
    )?;
    Ok(DiscreteReport { bdt, bpn, kl_gain })
}
