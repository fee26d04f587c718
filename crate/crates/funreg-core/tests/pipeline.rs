//! End-to-end flows through the library: simulate, cross-validate, fit,
//! predict, and score.

use funreg_core::{
    cv_select, discretized_excess_risk, fit_ws, precompute, predict, preset_fof_lambda1, rmise,
    simulate, CoefficientFit, CvConfig, KernelSpec, PredictionRequest, ScenarioKind,
    SimulationScenario,
};
use ndarray::Array2;

#[test]
fn full_study_pipeline_recovers_signal() {
    let kernel = KernelSpec::bernoulli_w22();
    let sc = SimulationScenario {
        kind: ScenarioKind::Random,
        q: 4,
        kappa: 1.0,
        p: 0,
        seed: 12,
    };
    let (all, oracle) = simulate(&sc, 8, 8, 90).unwrap();
    let (train, test) = all.split_at(60).unwrap();
    let cv = CvConfig::new(5, preset_fof_lambda1(), vec![0.0], vec![0.0], 12);
    let (selected, rows) = cv_select(&train, kernel, &cv).unwrap();
    assert_eq!(rows.len(), 35);
    let ws = precompute(&train, kernel).unwrap();
    let fitted = fit_ws(&ws, &selected).unwrap();
    assert!(fitted.converged);

    let req = PredictionRequest {
        x_new: test.x().clone(),
        z_new: test.z().clone(),
        target_points: test.y_grid().points().to_vec(),
    };
    let predicted = predict(&ws, &fitted, &req).unwrap();
    let oracles = oracle
        .signal_matrix(60, test.z(), test.y_grid().points())
        .unwrap();
    let score = rmise(&predicted, &oracles, test.y_grid()).unwrap();
    assert!(score < 0.5, "relative error {score} is too large");

    // The fitted model must beat the zero model on the excess-risk scale.
    let zero = CoefficientFit {
        r: Array2::zeros((ws.n2(), ws.n1())),
        b: Array2::zeros((ws.n2(), 0)),
        converged: true,
        iterations: 0,
        objective_trace: vec![],
    };
    let fitted_risk = discretized_excess_risk(&ws, &fitted, &test, &oracle, 60).unwrap();
    let zero_risk = discretized_excess_risk(&ws, &zero, &test, &oracle, 60).unwrap();
    assert!(
        fitted_risk < zero_risk,
        "fitted risk {fitted_risk} vs zero-model risk {zero_risk}"
    );
    assert!(fitted_risk < 0.1, "fitted risk {fitted_risk}");
}

#[test]
fn cv_selects_interior_lambda_in_majority_of_seeds() {
    let kernel = KernelSpec::bernoulli_w22();
    let grid = preset_fof_lambda1();
    let mut interior = 0;
    for seed in 0..10u64 {
        let sc = SimulationScenario {
            kind: ScenarioKind::Exponential,
            q: 20,
            kappa: 1.0,
            p: 0,
            seed,
        };
        let (all, _) = simulate(&sc, 20, 20, 100).unwrap();
        let cv = CvConfig::new(5, grid.clone(), vec![0.0], vec![0.0], seed);
        let (selected, _) = cv_select(&all, kernel, &cv).unwrap();
        let idx = grid
            .iter()
            .position(|&v| v == selected.lambda1)
            .expect("selected value comes from the grid");
        if idx > 0 && idx < grid.len() - 1 {
            interior += 1;
        }
    }
    assert!(
        interior >= 6,
        "selected lambda1 interior in only {interior}/10 seeds"
    );
}

#[test]
fn fits_are_reproducible() {
    let kernel = KernelSpec::bernoulli_w22();
    let sc = SimulationScenario {
        kind: ScenarioKind::Random,
        q: 3,
        kappa: 2.0,
        p: 2,
        seed: 77,
    };
    let (d, _) = simulate(&sc, 5, 6, 25).unwrap();
    let ws = precompute(&d, kernel).unwrap();
    let cfg = funreg_core::PenaltyConfig::new(1e-4, 1e-6, 0.3);
    let a = fit_ws(&ws, &cfg).unwrap();
    let b = fit_ws(&ws, &cfg).unwrap();
    assert_eq!(a.r, b.r);
    assert_eq!(a.b, b.b);
    assert_eq!(a.objective_trace, b.objective_trace);
}
