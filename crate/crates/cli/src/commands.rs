use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use optinfo_core::criteria::{CriterionReport, MonteCarloConfig};
use optinfo_core::decision::NormOrder;
use optinfo_core::discrete::{build_counterexample, criteria_report, CounterexampleSpec, DiscreteProblem};
use optinfo_core::estimate::Estimate;
use optinfo_core::pde::{
    greedy_design, EllipticDesignProblem, GreedyConfig, GreedyObjective, PdeMonteCarlo, Point,
};
use optinfo_core::quadrature::{
    bdt_monte_carlo, bpn_monte_carlo, optimize_design, report, DesignObjective, DesignOptimizer,
    QuadratureDesign, QuadratureReport,
};
use serde::Serialize;

use crate::{DiscreteArgs, Failure, Objective, Optimizer, PdeArgs, QuadratureArgs};

/// Output target opened before any computation, so an unwritable
/// destination fails fast.
pub enum Sink {
    Stdout,
    File(PathBuf, File),
}

impl Sink {
    pub fn open(path: Option<&Path>, flag: &str) -> Result<Self, Failure> {
        match path {
            None => Ok(Sink::Stdout),
            Some(p) => File::create(p)
                .map(|f| Sink::File(p.to_path_buf(), f))
                .map_err(|e| Failure::Usage(format!("{flag} {}: {e}", p.display()))),
        }
    }

    pub fn write_json<T: Serialize>(self, value: &T) -> Result<(), Failure> {
        let mut text = to_json(value)?;
        text.push('\n');
        match self {
            Sink::Stdout => {
                print!("{text}");
                Ok(())
            }
            Sink::File(p, mut f) => f
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Usage(format!("writing {}: {e}", p.display()))),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Numerical(format!("serializing report: {e}")))
}

#[derive(Serialize)]
struct MonteCarloSection {
    seed: u64,
    samples: usize,
    inner: usize,
    points_per_interval: usize,
    bpn: Estimate,
    bdt: Estimate,
}

#[derive(Serialize)]
struct QuadratureOutput {
    intervals: usize,
    #[serde(flatten)]
    report: QuadratureReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<MonteCarloSection>,
}

pub fn quadrature(a: &QuadratureArgs, seed: u64) -> Result<(), Failure> {
    let sink = Sink::open(a.out.as_deref(), "--out")?;
    let design = match (&a.nodes, a.optimize) {
        (Some(nodes), _) => {
            QuadratureDesign::new(nodes.clone()).map_err(|e| Failure::Usage(format!("--nodes: {e}")))?
        }
        (None, true) => {
            let n = a.n.ok_or_else(|| Failure::Usage("--optimize needs --n".into()))?;
            if n == 0 {
                return Err(Failure::Usage("--n must be at least 1".into()));
            }
            let optimizer = match a.optimizer {
                Optimizer::ClosedForm => DesignOptimizer::ClosedForm,
                Optimizer::CoordinateDescent => DesignOptimizer::CoordinateDescent { seed },
            };
            let objective = match a.objective {
                Objective::Bpn => DesignObjective::Bpn,
                Objective::Bdt => DesignObjective::Bdt,
            };
            optimize_design(n, optimizer, objective)?
        }
        (None, false) => return Err(Failure::Usage("give --nodes or --optimize".into())),
    };
    let rep = report(&design, a.values.as_deref()).map_err(|e| Failure::Usage(format!("--values: {e}")))?;
    let monte_carlo = if a.mc {
        let cfg = MonteCarloConfig::new(seed, a.samples, a.inner)
            .map_err(|e| Failure::Usage(format!("--samples/--inner: {e}")))?;
        Some(MonteCarloSection {
            seed,
            samples: a.samples,
            inner: a.inner,
            points_per_interval: a.points_per_interval,
            bpn: bpn_monte_carlo(&design, &cfg, a.points_per_interval)?,
            bdt: bdt_monte_carlo(&design, seed, a.samples, a.points_per_interval)?,
        })
    } else {
        None
    };
    sink.write_json(&QuadratureOutput {
        intervals: design.n_intervals(),
        report: rep,
        monte_carlo,
    })
}

/// Fails unless a file can be created in `dir`, creating `dir` if needed.
fn ensure_writable(dir: &Path) -> Result<(), Failure> {
    let fail = |e: std::io::Error| Failure::Usage(format!("--outdir {}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".optinfo-write-probe");
    File::create(&probe).map_err(fail)?;
    fs::remove_file(&probe).map_err(fail)
}

#[derive(Serialize)]
struct DesignOutput<'a> {
    points: &'a [Point],
    candidate_indices: &'a [usize],
    initial_bpn: f64,
    bpn_trace: &'a [f64],
    covariance_trace: &'a [f64],
    min_pairwise_distance: f64,
    config: DesignConfig<'a>,
    seed: u64,
}

#[derive(Serialize)]
struct DesignConfig<'a> {
    m: u64,
    p: String,
    objective: GreedyObjective,
    samples: u64,
    problem: &'a EllipticDesignProblem,
}

pub fn pde_design(a: &PdeArgs, seed: u64) -> Result<(), Failure> {
    ensure_writable(&a.outdir)?;
    let problem = EllipticDesignProblem {
        grid_size: a.grid_size,
        candidate_size: a.candidate_size,
        boundary_points: a.boundary_points,
        lengthscale: a.lengthscale,
    };
    problem.validate()?;
    let objective = if a.trace {
        GreedyObjective::Trace
    } else {
        GreedyObjective::Bpn
    };
    let cfg = GreedyConfig {
        norm: a.p,
        objective,
        mc: PdeMonteCarlo {
            seed,
            samples: a.samples as usize,
        },
    };
    let result = greedy_design(&problem, a.m as usize, &cfg)?;
    let label = match a.p {
        NormOrder::Infinity => "inf".to_string(),
        NormOrder::Finite(p) => format!("{p}"),
    };
    let write = |name: String, text: &str| -> Result<(), Failure> {
        let path = a.outdir.join(name);
        fs::write(&path, text).map_err(|e| Failure::Usage(format!("writing {}: {e}", path.display())))
    };
    for grid in &result.contours {
        write(format!("step_{}_p{label}.csv", grid.step), &grid.to_csv())?;
    }
    let summary = DesignOutput {
        points: &result.state.points,
        candidate_indices: &result.chosen,
        initial_bpn: result.initial_value,
        bpn_trace: &result.value_trace,
        covariance_trace: &result.covariance_trace,
        min_pairwise_distance: optinfo_core::pde::min_pairwise_distance(&result.state.points),
        config: DesignConfig {
            m: a.m,
            p: label.clone(),
            objective,
            samples: a.samples,
            problem: &problem,
        },
        seed,
    };
    let mut text = to_json(&summary)?;
    text.push('\n');
    write(format!("design_p{label}.json"), &text)
}

pub fn discrete(a: &DiscreteArgs) -> Result<(), Failure> {
    let problem = match (&a.problem, &a.counterexample) {
        (Some(path), None) => {
            DiscreteProblem::from_json_file(path).map_err(|e| Failure::Usage(format!("--problem: {e}")))?
        }
        (None, Some(pi)) => {
            let spec = CounterexampleSpec::new(pi[0], pi[1], pi[2])
                .map_err(|e| Failure::Usage(format!("--counterexample: {e}")))?;
            build_counterexample(spec)?
        }
        _ => {
            return Err(Failure::Usage(
                "give exactly one of --problem and --counterexample".into(),
            ))
        }
    };
    let rep = criteria_report(&problem)?;
    let mut reports: Vec<&CriterionReport> = vec![&rep.bdt];
    reports.extend(rep.bpn.as_ref());
    reports.push(&rep.kl_gain);
    eprint!("{}", table(&reports));
    Sink::Stdout.write_json(&rep)
}

/// Human-readable summary, one row per experiment.
fn table(reports: &[&CriterionReport]) -> String {
    let mut out = format!("{:<12}", "experiment");
    for r in reports {
        out.push_str(&format!(" {:>14}", r.criterion));
    }
    out.push('\n');
    for (i, v) in reports[0].values.iter().enumerate() {
        out.push_str(&format!("{:<12}", v.id));
        for r in reports {
            let mark = if r.optimal_set.contains(&v.id) { "*" } else { " " };
            out.push_str(&format!(" {:>13.6}{mark}", r.values[i].value));
        }
        out.push('\n');
    }
    out.push_str("* marks the optimal set of each criterion\n");
    out
}
