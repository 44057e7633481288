//! Monte Carlo study drivers at reduced scale.

use sacfv::experiments::{error_curve, estimate_error, estimate_expectation, splitting_error_study, StudyConfig};
use sacfv::prelude::*;

#[test]
fn refinement_error_decreases_in_n_for_unit_amplitude() {
    let config = StudyConfig::desk_convergence();
    let curve = error_curve(&config, 1.0).unwrap();
    assert_eq!(curve.points.len(), 8);
    for w in curve.points.windows(2) {
        assert!(w[1].2 < w[0].2, "E({}) = {:e} not below E({}) = {:e}", w[1].0, w[1].2, w[0].0, w[0].2);
    }
}

#[test]
fn refinement_error_matches_single_point_driver() {
    let config = StudyConfig { paths: 20, ..StudyConfig::desk_convergence() };
    let curve = error_curve(&config, 5.0).unwrap();
    let single = estimate_error(&config, 84, 5.0).unwrap();
    let from_curve = curve.points.iter().find(|p| p.0 == 84).unwrap().2;
    assert_eq!(single.to_bits(), from_curve.to_bits());
}

#[test]
fn splitting_error_shrinks_as_epsilon_grows() {
    let base = StudyConfig { n_list: vec![64], ..StudyConfig::desk_splitting_error() };
    let errors: Vec<f64> = [0.025, 0.05, 0.1]
        .into_iter()
        .map(|eps| {
            let config = StudyConfig { epsilon: EpsilonSchedule::Fixed(eps), ..base.clone() };
            splitting_error_study(&config, 1.0).unwrap().points[0].2
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn splitting_error_vanishes_without_noise_from_a_constant() {
    let config = StudyConfig { initial: InitialDatum::Constant(0.4), ..StudyConfig::desk_splitting_error() };
    let curve = splitting_error_study(&config, 0.0).unwrap();
    assert!(curve.points.iter().all(|p| p.2 == 0.0));
    assert!(curve.fit.is_none());
}

#[test]
fn noiseless_mean_is_conserved_on_the_expectation_grid() {
    let config = StudyConfig { paths: 8, ..StudyConfig::desk_expectation() };
    for est in estimate_expectation(&config, 0.0).unwrap() {
        assert!(est.abs_diff <= 1e-9, "n = {}: {:e}", est.n, est.abs_diff);
    }
}

#[test]
#[ignore = "drift of this size is not produced by N(0, tau) increments at n = 2"]
fn large_amplitude_drift_magnitude() {
    let config = StudyConfig { checkpoints: vec![2], ..StudyConfig::full_expectation() };
    let est = estimate_expectation(&config, 40.0).unwrap();
    assert!((est[0].abs_diff - 0.166).abs() <= 0.02, "drift {:e}", est[0].abs_diff);
}

#[test]
#[ignore = "long-running: N_max = 403200 with 3000 paths"]
fn order_improves_on_finer_grids_for_large_amplitude() {
    let config = StudyConfig::full_convergence_extended();
    let curve = error_curve(&config, 60.0).unwrap();
    let coarse = curve.fit_subset(&StudyConfig::full_convergence().n_list).unwrap();
    let fine: Vec<usize> = config.n_list.iter().copied().filter(|n| *n >= 5040).collect();
    let fine = curve.fit_subset(&fine).unwrap();
    assert!(fine.slope > coarse.slope, "coarse {} fine {}", coarse.slope, fine.slope);
}
