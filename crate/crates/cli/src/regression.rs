//! Alphabet-criteria comparison of linear regression designs.

use std::collections::BTreeMap;
use std::fs;

use nalgebra::{DMatrix, DVector};
use optinfo_core::criteria::{
    alphabet, bpn_gaussian_pair_reduction, Alphabet, CriterionReport, CriterionValue, MonteCarloConfig,
    Sense, EXACT_TIE_TOLERANCE,
};
use optinfo_core::decision::LossSpec;
use optinfo_core::gaussian::{GaussianDensity, LinearGaussianExperiment};
use serde::{Deserialize, Serialize};

use crate::commands::Sink;
use crate::{Failure, RegressionArgs};

/// Matrices are lists of rows.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    pub prior_cov: Vec<Vec<f64>>,
    #[serde(default)]
    pub prior_mean: Option<Vec<f64>>,
    /// Observation noise is `noise_variance * I`.
    #[serde(default = "unit")]
    pub noise_variance: f64,
    /// Loss weight; identity when absent.
    #[serde(default)]
    pub lambda: Option<Vec<Vec<f64>>>,
    /// Direction of the c-criterion; the criterion is skipped when absent.
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    /// Design matrix of each candidate experiment.
    pub candidates: BTreeMap<String, Vec<Vec<f64>>>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Serialize)]
struct Candidate {
    id: String,
    posterior_cov: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct RegressionOutput {
    candidates: Vec<Candidate>,
    criteria: Vec<CriterionReport>,
}

fn matrix(rows: &[Vec<f64>], what: &str, cols: Option<usize>) -> Result<DMatrix<f64>, Failure> {
    let c = cols.or_else(|| rows.first().map(Vec::len)).unwrap_or(0);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != c) {
        return Err(Failure::Usage(format!(
            "{what}[{i}] has {} entries, expected {c}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn run(a: &RegressionArgs) -> Result<(), Failure> {
    let sink = Sink::open(a.out.as_deref(), "--out")?;
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Failure::Usage(format!("--config {}: {e}", a.config.display())))?;
    let cfg: RegressionConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("--config: {e}")))?;
    sink.write_json(&evaluate(&cfg)?)
}

fn evaluate(cfg: &RegressionConfig) -> Result<RegressionOutput, Failure> {
    let sigma0 = matrix(&cfg.prior_cov, "prior_cov", None)?;
    let d = sigma0.nrows();
    if sigma0.ncols() != d || d == 0 {
        return Err(Failure::Usage(
            "prior_cov must be a non-empty square matrix".into(),
        ));
    }
    let mean = match &cfg.prior_mean {
        Some(m) if m.len() != d => {
            return Err(Failure::Usage(format!(
                "prior_mean has {} entries, expected {d}",
                m.len()
            )))
        }
        Some(m) => DVector::from_column_slice(m),
        None => DVector::zeros(d),
    };
    let prior = GaussianDensity::new(mean, sigma0)?;
    let lambda = match &cfg.lambda {
        Some(l) => matrix(l, "lambda", Some(d))?,
        None => DMatrix::identity(d, d),
    };
    if lambda.nrows() != d {
        return Err(Failure::Usage(format!("lambda must be {d}x{d}")));
    }
    if !(cfg.noise_variance > 0.0) {
        return Err(Failure::Usage("noise_variance must be positive".into()));
    }
    if cfg.candidates.is_empty() {
        return Err(Failure::Usage("no candidates".into()));
    }
    let mut which = vec![("a", Alphabet::A)];
    if let Some(c) = &cfg.direction {
        which.push(("c", Alphabet::C(DVector::from_column_slice(c))));
    }
    which.push(("e", Alphabet::E));
    which.push(("d", Alphabet::D));

    let mut candidates = Vec::new();
    let mut values: Vec<Vec<CriterionValue>> = vec![Vec::new(); which.len() + 1];
    let loss = LossSpec::WeightedQuadratic(lambda.clone());
    let mc = MonteCarloConfig::new(0, 1, 1)?;
    for (id, design) in &cfg.candidates {
        let a = matrix(design, &format!("candidates.{id}"), Some(d))?;
        let n = a.nrows();
        let exp =
            LinearGaussianExperiment::new(prior.clone(), a, DMatrix::identity(n, n) * cfg.noise_variance)?;
        let sigma = exp.posterior_cov();
        for (k, (_, w)) in which.iter().enumerate() {
            values[k].push(CriterionValue {
                id: id.clone(),
                value: alphabet(sigma, &lambda, w)?,
                stderr: 0.0,
            });
        }
        let bpn = bpn_gaussian_pair_reduction(sigma, &loss, &mc)?;
        values[which.len()].push(CriterionValue {
            id: id.clone(),
            value: bpn.value,
            stderr: bpn.stderr,
        });
        candidates.push(Candidate {
            id: id.clone(),
            posterior_cov: rows(sigma),
        });
    }
    let names = which.iter().map(|(n, _)| *n).chain(std::iter::once("bpn"));
    let criteria = names
        .zip(values)
        .map(|(name, v)| CriterionReport::new(name, Sense::Minimize, v, EXACT_TIE_TOLERANCE))
        .collect::<optinfo_core::Result<Vec<_>>>()?;
    Ok(RegressionOutput { candidates, criteria })
}
