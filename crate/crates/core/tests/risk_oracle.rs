use std::f64::consts::{LN_2, PI};

use earlystop::data_model::CovarianceModel;
use earlystop::risk::*;
use nalgebra::DVector;
use proptest::prelude::*;

fn within_se(quad: f64, mc: f64, se: f64, k: f64) -> bool {
    (quad - mc).abs() <= k * se + 1e-15
}

fn unit_spike() -> (CovarianceModel, DVector<f64>) {
    let cov = CovarianceModel::new(vec![1.0, 0.5]).unwrap();
    (cov, DVector::from_vec(vec![1.0, 0.0]))
}

#[test]
fn logistic_risk_at_truth_matches_large_monte_carlo() {
    let (cov, ws) = unit_spike();
    let grid = QuadratureGrid::default();
    let s = joint_summary(&ws, &ws, &cov).unwrap();
    let mc = monte_carlo_risks(&ws, &ws, &cov, 10_000_000, 1).unwrap();
    let q = population_logistic_risk(&s, &grid);
    assert!(within_se(q, mc.estimate.logistic, mc.std_error.logistic, 3.0), "{q} vs {mc:?}");
}

#[test]
fn calibration_of_doubled_truth_matches_large_monte_carlo() {
    let (cov, ws) = unit_spike();
    let grid = QuadratureGrid::default();
    let w = &ws * 2.0;
    let s = joint_summary(&w, &ws, &cov).unwrap();
    let mc = monte_carlo_risks(&w, &ws, &cov, 10_000_000, 2).unwrap();
    let q = calibration_error(&s, &grid);
    assert!(q > 0.0);
    assert!(within_se(q, mc.estimate.calibration, mc.std_error.calibration, 3.0), "{q} vs {mc:?}");
}

#[test]
fn zero_one_at_truth_matches_monte_carlo() {
    let (cov, ws) = unit_spike();
    let grid = QuadratureGrid::default();
    let s = joint_summary(&ws, &ws, &cov).unwrap();
    let mc = monte_carlo_risks(&ws, &ws, &cov, 1_000_000, 3).unwrap();
    let q = population_zero_one_error(&s, &grid);
    assert!(within_se(q, mc.estimate.zero_one, mc.std_error.zero_one, 3.0));
    assert!(q >= 1.0 / (2f64.sqrt() * PI * 2.0));
}

#[test]
fn zero_predictor_and_degenerate_truth() {
    let (cov, ws) = unit_spike();
    let grid = QuadratureGrid::default();
    let s = joint_summary(&DVector::zeros(2), &ws, &cov).unwrap();
    assert_eq!(population_logistic_risk(&s, &grid), LN_2);
    assert_eq!(population_zero_one_error(&s, &grid), 1.0);
    let z = DVector::zeros(2);
    let both = joint_summary(&z, &z, &cov).unwrap();
    assert_eq!(population_logistic_risk(&both, &grid), LN_2);
    let mc = monte_carlo_risks(&z, &ws, &cov, 100_000, 4).unwrap();
    assert!((mc.estimate.logistic - LN_2).abs() <= 3.0 * mc.std_error.logistic + 1e-15);
}

#[test]
fn angle_lower_bounds_hold() {
    let grid = QuadratureGrid::default();
    let obtuse_bound = 1.0 / (4.0 * (2.0 * PI).sqrt());
    for k in 1..=20 {
        let theta = PI / 2.0 + k as f64 * (PI / 2.0) / 20.0;
        let e = excess_zero_one_from_angle(theta, 1.0, &grid).unwrap();
        assert!(e >= obtuse_bound, "theta {theta}: {e}");
    }
    let e = excess_zero_one_from_angle(PI / 4.0, 1.0, &grid).unwrap();
    assert!(e >= (1.0 - (PI / 4.0).cos()) / (48.0 * PI));
    assert_eq!(excess_zero_one_from_angle(0.0, 1.0, &grid).unwrap(), 0.0);
}

#[test]
fn excess_from_angle_agrees_with_general_error() {
    let grid = QuadratureGrid::default();
    let cov = CovarianceModel::new(vec![2.0, 1.0, 0.3]).unwrap();
    let ws = DVector::from_vec(vec![0.4, -1.1, 2.0]);
    let w = DVector::from_vec(vec![-0.3, 0.5, 1.0]);
    let s = joint_summary(&w, &ws, &cov).unwrap();
    let (_, bayes) = bayes_risks(&ws, &cov, &grid).unwrap();
    let excess = excess_zero_one_from_angle(s.theta.unwrap(), s.s_star, &grid).unwrap();
    let total = population_zero_one_error(&s, &grid);
    assert!((total - bayes - excess).abs() < 1e-15);
    let mc = monte_carlo_risks(&w, &ws, &cov, 1_000_000, 5).unwrap();
    assert!(within_se(total, mc.estimate.zero_one, mc.std_error.zero_one, 3.0));
}

#[test]
fn bayes_risk_relations() {
    let grid = QuadratureGrid::default();
    let (cov, ws) = unit_spike();
    let (r, e) = bayes_risks(&ws, &cov, &grid).unwrap();
    assert!(e >= 1.0 / (2.0 * 2f64.sqrt() * PI));
    assert!(r >= LN_2 * e);
    assert_eq!(bayes_risks(&DVector::zeros(2), &cov, &grid).unwrap(), (LN_2, 1.0));
}

#[test]
fn quadrature_order_is_validated() {
    assert!(QuadratureGrid::new(7).is_err());
    assert_eq!(QuadratureGrid::new(8).unwrap().order(), 8);
}

fn instance(max_d: usize, scale: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1..=max_d).prop_flat_map(move |d| {
        (
            prop::collection::vec(0.05f64..2.0, d),
            prop::collection::vec(-scale..scale, d),
            prop::collection::vec(-scale..scale, d),
        )
            .prop_map(|(mut l, w, ws)| {
                l.sort_by(|a, b| b.total_cmp(a));
                (l, w, ws)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn calibration_chain_holds((l, w, ws) in instance(5, 4.0)) {
        let grid = QuadratureGrid::new(64).unwrap();
        let cov = CovarianceModel::new(l).unwrap();
        let (w, ws) = (DVector::from_vec(w), DVector::from_vec(ws));
        let s = joint_summary(&w, &ws, &cov).unwrap();
        let r = population_risks(&s, &grid);
        let (br, be) = bayes_risks(&ws, &cov, &grid).unwrap();
        prop_assert!(r.zero_one - be <= 2.0 * r.calibration.sqrt() + 1e-8);
        prop_assert!(2.0 * r.calibration <= r.logistic - br + 1e-8);
        prop_assert!(r.logistic >= LN_2 * r.zero_one - 1e-12);
    }

    #[test]
    fn excess_error_is_scale_free((l, w, ws) in instance(5, 3.0)) {
        let grid = QuadratureGrid::default();
        let cov = CovarianceModel::new(l).unwrap();
        let (w, ws) = (DVector::from_vec(w), DVector::from_vec(ws));
        let a = population_zero_one_error(&joint_summary(&w, &ws, &cov).unwrap(), &grid);
        let b = population_zero_one_error(&joint_summary(&(&w * 7.3), &ws, &cov).unwrap(), &grid);
        prop_assert!((a - b).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quadrature_agrees_with_monte_carlo((l, w, ws) in instance(4, 3.0), seed in 0u64..1000) {
        let grid = QuadratureGrid::default();
        let cov = CovarianceModel::new(l).unwrap();
        let (w, ws) = (DVector::from_vec(w), DVector::from_vec(ws));
        let q = population_risks(&joint_summary(&w, &ws, &cov).unwrap(), &grid);
        let mc = monte_carlo_risks(&w, &ws, &cov, 200_000, seed).unwrap();
        // 4.5 SE per functional keeps the family-wise false alarm rate negligible
        prop_assert!(within_se(q.logistic, mc.estimate.logistic, mc.std_error.logistic, 4.5));
        prop_assert!(within_se(q.zero_one, mc.estimate.zero_one, mc.std_error.zero_one, 4.5));
        prop_assert!(within_se(q.calibration, mc.estimate.calibration, mc.std_error.calibration, 4.5));
    }
}
