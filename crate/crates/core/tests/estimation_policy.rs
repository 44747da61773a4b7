use fogctl_core::estimation::{delayed_predictor, kalman_predict, kalman_update};
use fogctl_core::model::SystemSpec;
use fogctl_core::policy::{act_full_delayed, act_full_perfect, sandwich_policy};
use fogctl_core::riccati::{backward_recursion_delayed, backward_recursion_perfect};
use fogctl_core::{
    DelayProfile, FilterState, FogError, LinearSystemModel, Mat, Observation, ReliabilityChain,
    TauInit, Vector,
};

fn s(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

fn v1(x: f64) -> Vector {
    Vector::from_element(1, x)
}

fn scalar(horizon: usize, a: f64, w: f64, c: f64, v: f64) -> LinearSystemModel {
    let spec = SystemSpec::time_invariant(horizon, s(a), s(1.0), s(1.0), s(1.0), s(1.0), s(w))
        .with_measurement(s(c), s(v));
    LinearSystemModel::new(spec).unwrap()
}

#[test]
fn predict_propagates_covariance() {
    let m = scalar(3, 2.0, 3.0, 1.0, 1.0);
    let st = FilterState::new(v1(1.0), s(1.0), 0);
    let next = kalman_predict(&st, &m, &v1(0.5), None).unwrap();
    assert_eq!(next.stage, 1);
    assert_eq!(next.mean[0], 2.5);
    assert_eq!(next.cov[(0, 0)], 7.0);
}

#[test]
fn predict_rejects_horizon() {
    let m = scalar(1, 2.0, 3.0, 1.0, 1.0);
    let st = FilterState::new(v1(0.0), s(1.0), 1);
    assert!(matches!(
        kalman_predict(&st, &m, &v1(0.0), None),
        Err(FogError::Stage { .. })
    ));
}

#[test]
fn update_halves_uncertainty() {
    let m = scalar(2, 1.0, 1.0, 1.0, 1.0);
    let st = FilterState::new(v1(0.0), s(1.0), 0);
    let up = kalman_update(&st, &m, &v1(2.0)).unwrap();
    assert!((up.mean[0] - 1.0).abs() < 1e-15);
    assert!((up.cov[(0, 0)] - 0.5).abs() < 1e-15);
    assert_eq!(up.last_update_stage, Some(0));
}

#[test]
fn exact_measurement_recovers_state() {
    let m = scalar(2, 1.0, 1.0, 1.0, 0.0);
    let st = FilterState::new(v1(-3.0), s(4.0), 0);
    let up = kalman_update(&st, &m, &v1(1.25)).unwrap();
    assert!((up.mean[0] - 1.25).abs() < 1e-14);
    assert!(up.cov[(0, 0)].abs() < 1e-14);
}

#[test]
fn update_checks_measurement_length() {
    let m = scalar(2, 1.0, 1.0, 1.0, 1.0);
    let st = FilterState::known(&v1(0.0));
    assert!(matches!(
        kalman_update(&st, &m, &Vector::zeros(2)),
        Err(FogError::Dimension(_))
    ));
}

#[test]
fn delayed_predictor_rolls_forward() {
    let m = scalar(4, 2.0, 1.0, 1.0, 1.0);
    let x = delayed_predictor(&v1(1.0), &v1(1.0), &m, 2, 2, false).unwrap();
    assert_eq!(x[0], 6.0);
    assert!(delayed_predictor(&v1(1.0), &v1(1.0), &m, 1, 2, false).is_err());
}

#[test]
fn perfect_law_is_gated() {
    let m = scalar(1, 1.0, 1.0, 1.0, 0.0);
    let g = backward_recursion_perfect(&m, 1.0, Observation::Full).unwrap();
    let on = act_full_perfect(&g, 0, &v1(2.0), true).unwrap();
    assert!(on.applied());
    assert!((on.u()[0] + 1.0).abs() < 1e-14);
    let off = act_full_perfect(&g, 0, &v1(2.0), false).unwrap();
    assert!(!off.applied());
    assert_eq!(off.u()[0], 0.0);
    assert!(act_full_perfect(&g, 1, &v1(2.0), true).is_err());
}

#[test]
fn delayed_law_idle_off_grid() {
    let m = scalar(4, 1.0, 1.0, 1.0, 0.0);
    let g =
        backward_recursion_delayed(&m, 0.9, DelayProfile::new(1, 1), Observation::Full).unwrap();
    let off = act_full_delayed(&g, &m, 1, None, true).unwrap();
    assert!(!off.applied());
    assert_eq!(off.u()[0], 0.0);
    let x = v1(1.0);
    let u = v1(0.0);
    let on = act_full_delayed(&g, &m, 2, Some((&x, &u)), true).unwrap();
    assert!(on.applied());
    assert!((on.u()[0] + g.v[2][(0, 0)]).abs() < 1e-14);
    assert!(act_full_delayed(&g, &m, 2, None, true).is_err());
}

#[test]
fn regime_mismatch_reported() {
    let m = scalar(2, 1.0, 1.0, 1.0, 0.0);
    let g = backward_recursion_perfect(&m, 0.5, Observation::Partial).unwrap();
    assert!(matches!(
        act_full_perfect(&g, 0, &v1(1.0), true),
        Err(FogError::RegimeMismatch { .. })
    ));
}

#[test]
fn sandwich_uses_one_minus_q() {
    let m = scalar(3, 1.0, 1.0, 1.0, 0.0);
    let chain = ReliabilityChain::new(0.9, 0.3, TauInit::ON).unwrap();
    let r = sandwich_policy(&m, &chain, DelayProfile::perfect(), Observation::Full).unwrap();
    assert!((r.gains.p_used - 0.7).abs() < 1e-15);
    let at = backward_recursion_perfect(&m, 0.7, Observation::Full).unwrap();
    assert_eq!(r.gains.v, at.v);

    let edge = ReliabilityChain::new(0.6, 0.4, TauInit::ON).unwrap();
    assert!(matches!(
        sandwich_policy(&m, &edge, DelayProfile::perfect(), Observation::Full),
        Err(FogError::SandwichHypotheses { .. })
    ));
}
