use nalgebra::{DMatrix, DVector};
use optinfo_core::criteria::{bdt_criterion_gaussian, bpn_pair_reduction_model, MonteCarloConfig};
use optinfo_core::decision::{Integrator, LossSpec, NormOrder};
use optinfo_core::gaussian::{GaussianDensity, LinearGaussianExperiment};
use optinfo_core::pde::{
    greedy_design, greedy_trace_design, EllipticDesignProblem, GreedyConfig, GreedyObjective, PdeMonteCarlo,
};
use optinfo_core::quadrature::{bdt_monte_carlo, bpn_closed_form, posterior_variance, QuadratureDesign};
use optinfo_core::rng::stream;
use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};
use rand::Rng;

fn experiment(seed: u64) -> LinearGaussianExperiment {
    let mut rng = stream(seed, 0);
    let d = rng.random_range(1..=4usize);
    let n = rng.random_range(1..=4usize);
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let cov = &b * b.transpose() + DMatrix::identity(d, d) * 0.05;
    let a = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
    let noise = DMatrix::identity(n, n) * rng.random_range(0.05..2.0);
    LinearGaussianExperiment::new(GaussianDensity::new(DVector::zeros(d), cov).unwrap(), a, noise).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_bpn_is_twice_bayes_risk(seed in any::<u64>()) {
        let e = experiment(seed);
        let d = e.prior().dim();
        let mut rng = stream(seed, 1);
        let c = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let lambda = &c * c.transpose();
        let bdt = bdt_criterion_gaussian(&e, &lambda, Integrator::Exact).unwrap().value;
        let loss = LossSpec::WeightedQuadratic(lambda);
        let bpn = bpn_pair_reduction_model(&e, &loss, &MonteCarloConfig::new(0, 1, 1).unwrap()).unwrap();
        prop_assert!((bpn.value - 2.0 * bdt).abs() <= 1e-12 * bdt.abs().max(1.0));
        prop_assert!(bpn.stderr == 0.0);
    }
}

#[test]
fn simulated_bayes_risk_agrees_with_exact() {
    for seed in 0..5 {
        let e = experiment(seed);
        let d = e.prior().dim();
        let lambda = DMatrix::identity(d, d);
        let exact = bdt_criterion_gaussian(&e, &lambda, Integrator::Exact).unwrap();
        let mc = bdt_criterion_gaussian(
            &e,
            &lambda,
            Integrator::MonteCarlo {
                seed,
                samples: 20_000,
            },
        )
        .unwrap();
        assert!(mc.agrees_with(&exact, 4.0), "{mc:?} vs {exact:?}");
    }
}

#[test]
fn simulated_trapezoid_risk_matches_closed_form() {
    let d = QuadratureDesign::new(vec![0.2, 0.45, 0.9]).unwrap();
    let mc = bdt_monte_carlo(&d, 3, 20_000, 16).unwrap();
    let exact = posterior_variance(&d);
    assert!((mc.value - exact).abs() < 4.0 * mc.stderr);
    assert!((bpn_closed_form(&d) - 2.0 * exact).abs() < 1e-16);
}

#[test]
fn squared_norm_greedy_follows_trace_greedy() {
    let problem = EllipticDesignProblem {
        grid_size: 12,
        candidate_size: 9,
        boundary_points: 20,
        lengthscale: 0.35,
    };
    let bpn = greedy_design(
        &problem,
        6,
        &GreedyConfig {
            norm: NormOrder::Finite(2.0),
            objective: GreedyObjective::Bpn,
            mc: PdeMonteCarlo::default(),
        },
    )
    .unwrap();
    let trace = greedy_trace_design(&problem, 6).unwrap();
    assert_eq!(bpn.chosen, trace.chosen);
    for (v, t) in bpn.value_trace.iter().zip(&trace.value_trace) {
        assert!((v - 2.0 * t).abs() <= 1e-12 * t.abs().max(1.0));
    }
}
