use koopman_pe_core::dictionary::Dictionary;
use koopman_pe_core::edmd::{build_snapshots, fit_edmd, FitOptions};
use koopman_pe_core::eval::*;
use koopman_pe_core::ode_sim::{Repressilator, RepressilatorParams, Trajectory};
use koopman_pe_core::{Error, Sequential};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn traj(values: DMatrix<f64>) -> Trajectory {
    Trajectory::from_columns(0.0, 0.1, values).unwrap()
}

#[test]
fn error_of_identical_and_doubled_predictions() {
    let truth = traj(DMatrix::from_fn(2, 5, |i, j| (i + 2 * j) as f64 - 3.0));
    for mode in [ErrorMode::RmseRel, ErrorMode::SupRel] {
        assert_eq!(trajectory_error(&truth, &truth, mode).unwrap(), TrajectoryError::Finite(0.0));
        let doubled = traj(truth.states() * 2.0);
        let e = trajectory_error(&doubled, &truth, mode).unwrap().finite().unwrap();
        assert!((e - 1.0).abs() < 1e-15);
    }
}

#[test]
fn non_finite_prediction_is_divergence() {
    let truth = traj(DMatrix::from_element(1, 4, 1.0));
    let mut p = DMatrix::from_element(1, 4, 1.0);
    p[(0, 3)] = f64::INFINITY;
    assert_eq!(trajectory_error(&traj(p), &truth, ErrorMode::RmseRel).unwrap(), TrajectoryError::Divergence);
}

#[test]
fn grid_mismatch_is_an_error() {
    let truth = traj(DMatrix::zeros(1, 4));
    let shorter = traj(DMatrix::zeros(1, 3));
    let shifted = Trajectory::from_columns(0.05, 0.1, DMatrix::zeros(1, 4)).unwrap();
    assert!(matches!(trajectory_error(&shorter, &truth, ErrorMode::RmseRel), Err(Error::GridMismatch)));
    assert!(matches!(trajectory_error(&shifted, &truth, ErrorMode::RmseRel), Err(Error::GridMismatch)));
}

#[test]
fn exact_linear_model_rollout_over_fifty_steps() {
    let a = DMatrix::from_row_slice(3, 3, &[0.95, 0.1, 0.0, -0.1, 0.95, 0.05, 0.0, 0.0, 0.9]);
    let run = |x0: [f64; 3], steps: usize| {
        let mut s = DMatrix::zeros(3, steps + 1);
        s.set_column(0, &nalgebra::Vector3::from(x0));
        for k in 0..steps {
            let next = &a * s.column(k);
            s.set_column(k + 1, &next);
        }
        traj(s)
    };
    let train = [run([1.0, 0.0, 0.0], 20), run([0.0, 1.0, 0.0], 20), run([0.0, 0.0, 1.0], 20)];
    let dict = Dictionary::state_only(3).unwrap();
    let model = fit_edmd(&build_snapshots(&dict, &train).unwrap(), &FitOptions::default()).unwrap();
    let truth = run([0.4, -0.7, 0.2], 50);
    let pred = model.predict(&[0.4, -0.7, 0.2], 50).unwrap();
    let e = trajectory_error(&pred.trajectory, &truth, ErrorMode::RmseRel).unwrap().finite().unwrap();
    assert!(e < 1e-8, "{e}");
}

#[test]
fn spearman_examples() {
    let same = [0.5; 6];
    let c = spearman(&same, &same).unwrap();
    assert!(c.degenerate && c.rho == 0.0);
    let pts: Vec<(usize, TrajectoryError)> =
        (0..6).map(|i| (60 - i, TrajectoryError::Finite(0.1 * (i + 1) as f64))).collect();
    let c = rank_error_correlation(&pts).unwrap();
    assert!(!c.degenerate && (c.rho + 1.0).abs() < 1e-15);
    let flat: Vec<(usize, TrajectoryError)> = (0..5).map(|_| (10, TrajectoryError::Finite(1.0))).collect();
    assert!(rank_error_correlation(&flat).unwrap().degenerate);
    assert!(matches!(rank_error_correlation(&pts[..4]), Err(Error::InsufficientData { needed: 5, got: 4 })));
}

#[test]
fn fixed_point_training_data_is_rank_deficient() {
    let m = Repressilator::new(RepressilatorParams::default()).unwrap().symmetric_fixed_point().to_vec();
    let cfg = ExperimentConfig { n_train_ics: 1, train_ics: Some(vec![m]), ..ExperimentConfig::default() };
    let out = run_basin_experiment(&cfg, &Sequential).unwrap();
    assert!(out.stacked_rank() <= 3, "rank {}", out.stacked_rank());
    // a relative error of order one means the model carries no information
    match out.mean_test_error() {
        TrajectoryError::Finite(e) => assert!(e >= 0.5, "{e}"),
        TrajectoryError::Divergence => {}
    }
}

#[test]
fn one_step_error_matches_training_residual() {
    let out = run_basin_experiment(&ExperimentConfig::default(), &Sequential).unwrap();
    assert!((out.one_step_error - out.model.training_residual).abs() < 1e-10);
    assert_eq!(out.train_ics.len(), 6);
    assert_eq!(out.test_errors.len(), 6);
    assert_eq!(out.train_trajectories[0].len(), 251);
    assert_eq!(out.test_truth[0].len(), 751);
    assert!(out.stacked_rank() < 84);
}

#[test]
fn experiment_is_a_pure_function_of_the_config() {
    let cfg = ExperimentConfig { n_test_ics: 2, test_horizon: 30.0, ..ExperimentConfig::default() };
    let a = run_basin_experiment(&cfg, &Sequential).unwrap();
    let b = run_basin_experiment(&cfg, &Sequential).unwrap();
    assert_eq!(a.model.k, b.model.k);
    assert_eq!(a.lifted.certificate, b.lifted.certificate);
    assert_eq!(a.test_errors, b.test_errors);
    assert_eq!(a.rank_curve, b.rank_curve);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = ExperimentConfig { train_horizon: 0.0, ..ExperimentConfig::default() };
    assert!(run_basin_experiment(&bad, &Sequential).is_err());
    let bad = ExperimentConfig { test_region: koopman_pe_core::Region::ball(3, 1.0), ..ExperimentConfig::default() };
    assert!(run_basin_experiment(&bad, &Sequential).is_err());
}

proptest! {
    #[test]
    fn spearman_is_bounded_and_antisymmetric(x in prop::collection::vec(-10.0f64..10.0, 5..20), flip in any::<bool>()) {
        let y: Vec<f64> = x.iter().map(|v| if flip { -v * v * v } else { v * v * v }).collect();
        let c = spearman(&x, &y).unwrap();
        let distinct = x.iter().any(|v| *v != x[0]);
        if distinct {
            let expected = if flip { -1.0 } else { 1.0 };
            prop_assert!((c.rho - expected).abs() < 1e-12);
        }
        let z: Vec<f64> = y.iter().map(|v| -v).collect();
        let d = spearman(&x, &z).unwrap();
        prop_assert!((c.rho + d.rho).abs() < 1e-12);
        prop_assert!(c.rho.abs() <= 1.0 + 1e-12);
    }
}
