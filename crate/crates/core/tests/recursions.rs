use fogctl_core::estimation::PenaltyConfig;
use fogctl_core::model::{stationary_on_probability, SystemSpec};
use fogctl_core::oracle::brute_force_min_cost;
use fogctl_core::riccati::{
    backward_recursion, backward_recursion_delayed, backward_recursion_perfect, min_cost,
    min_cost_full_delayed, min_cost_full_perfect,
};
use fogctl_core::{
    DelayProfile, FogError, LinearSystemModel, Mat, Observation, ReliabilityChain, TauInit, Vector,
};

fn s(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

fn unit(horizon: usize) -> LinearSystemModel {
    LinearSystemModel::new(SystemSpec::time_invariant(
        horizon,
        s(1.0),
        s(1.0),
        s(1.0),
        s(1.0),
        s(1.0),
        s(1.0),
    ))
    .unwrap()
}

fn x1() -> Vector {
    Vector::from_element(1, 1.0)
}

#[test]
fn scalar_model_validates() {
    let m = unit(1);
    assert_eq!((m.horizon(), m.state_dim(), m.control_dim()), (1, 1, 1));
}

#[test]
fn singular_r_rejected() {
    let err = LinearSystemModel::new(SystemSpec::time_invariant(
        1,
        s(1.0),
        s(1.0),
        s(1.0),
        s(1.0),
        s(0.0),
        s(1.0),
    ))
    .unwrap_err();
    assert!(
        err.to_string().contains("R not positive definite at k=0"),
        "{err}"
    );
}

#[test]
fn misshapen_a_rejected() {
    let mut spec = SystemSpec::time_invariant(
        1,
        Mat::identity(2, 2),
        Mat::zeros(2, 1),
        Mat::identity(2, 2),
        Mat::identity(2, 2),
        s(1.0),
        Mat::identity(2, 2),
    );
    spec.a[0] = Mat::zeros(2, 1);
    assert!(matches!(
        LinearSystemModel::new(spec),
        Err(FogError::InvalidModel(_))
    ));
}

#[test]
fn stationary_probabilities() {
    let st = |p, q, tau0| {
        stationary_on_probability(&ReliabilityChain::new(p, q, tau0).unwrap()).unwrap()
    };
    assert!((st(0.5, 0.5, TauInit::ON) - 0.5).abs() < 1e-15);
    assert_eq!(st(1.0, 0.0, TauInit::ON), 1.0);
    assert!((st(0.9, 0.3, TauInit::ON) - 0.875).abs() < 1e-12);
}

#[test]
fn scalar_perfect_gains() {
    let g = backward_recursion_perfect(&unit(1), 1.0, Observation::Full).unwrap();
    assert!((g.v[0][(0, 0)] - 0.5).abs() < 1e-14);
    assert_eq!(g.l[0][(0, 0)], 2.0);
    assert!((g.lambda[0][(0, 0)] - 0.5).abs() < 1e-14);
    assert!((g.k[0][(0, 0)] - 1.5).abs() < 1e-14);

    let g0 = backward_recursion_perfect(&unit(1), 0.0, Observation::Full).unwrap();
    assert_eq!(g0.k[0], g0.l[0]);
    assert_eq!(g0.k[0][(0, 0)], 2.0);
}

#[test]
fn uncontrollable_plant_has_no_lambda() {
    let m = LinearSystemModel::new(SystemSpec::time_invariant(
        4,
        s(1.3),
        s(0.0),
        s(1.0),
        s(1.0),
        s(1.0),
        s(1.0),
    ))
    .unwrap();
    for p in [0.0, 0.4, 1.0] {
        let g = backward_recursion_perfect(&m, p, Observation::Full).unwrap();
        assert!(g.lambda.iter().all(|l| l[(0, 0)] == 0.0));
        assert!((0..4).all(|k| g.k[k] == g.l[k]));
    }
}

#[test]
fn unit_delay_reduces_to_perfect_k() {
    let m = unit(5);
    let d =
        backward_recursion_delayed(&m, 0.6, DelayProfile::new(0, 1), Observation::Full).unwrap();
    let p = backward_recursion_perfect(&m, 0.6, Observation::Full).unwrap();
    for k in 0..=5 {
        assert!((d.k[k][(0, 0)] - p.k[k][(0, 0)]).abs() < 1e-14);
    }
    let coll = d.p.as_ref().unwrap();
    let c_m = coll.len() - 1;
    for (c, l) in coll.iter().zip(&d.lambda).take(c_m.min(4) + 1) {
        assert_eq!(c, l);
    }
}

#[test]
fn delay_equal_to_horizon_is_open_loop() {
    let m = unit(2);
    let d =
        backward_recursion_delayed(&m, 0.8, DelayProfile::new(1, 1), Observation::Full).unwrap();
    assert_eq!(d.k[1], d.l[1]);
    let total = min_cost_full_delayed(&d, &m, &x1()).unwrap();
    let open = backward_recursion_perfect(&m, 0.0, Observation::Full).unwrap();
    // No control at stage 0 either: the endpoint starts OFF.
    let open_cost = min_cost_full_perfect(&open, &m, &x1(), TauInit::OFF).unwrap();
    assert!(
        (total.total - open_cost.total).abs() < 1e-12,
        "{total:?} {open_cost:?}"
    );
    assert_eq!(total.collateral_trace_sum, 0.0);
}

#[test]
fn three_stage_two_delay_structure_and_oracle() {
    let m = unit(3);
    let p = 0.7;
    let d = backward_recursion_delayed(&m, p, DelayProfile::new(1, 1), Observation::Full).unwrap();
    let k2 = &d.l[2] - &d.lambda[2] * p;
    assert!((d.k[2][(0, 0)] - k2[(0, 0)]).abs() < 1e-14);
    let coll = d.p.as_ref().unwrap();
    assert_eq!(coll[2], d.lambda[2]);
    assert!((coll[1][(0, 0)] - coll[2][(0, 0)]).abs() < 1e-14);
    assert_eq!(coll[0], d.lambda[0]);

    let chain = ReliabilityChain::symmetric(p, TauInit::ON).unwrap();
    let closed = min_cost_full_delayed(&d, &m, &x1()).unwrap().total;
    let oracle = brute_force_min_cost(
        &m,
        &chain,
        Some(DelayProfile::new(1, 1)),
        &x1(),
        TauInit::ON,
    )
    .unwrap();
    assert!((closed - oracle).abs() <= 1e-9 * oracle);
}

#[test]
fn scalar_closed_form_costs() {
    let m = unit(1);
    let g = backward_recursion_perfect(&m, 1.0, Observation::Full).unwrap();
    assert!(
        (min_cost_full_perfect(&g, &m, &x1(), TauInit::ON)
            .unwrap()
            .total
            - 2.5)
            .abs()
            < 1e-14
    );

    let m = unit(4);
    let g = backward_recursion_perfect(&m, 0.6, Observation::Full).unwrap();
    let on = min_cost_full_perfect(&g, &m, &x1(), TauInit::ON)
        .unwrap()
        .total;
    let off = min_cost_full_perfect(&g, &m, &x1(), TauInit::OFF)
        .unwrap()
        .total;
    assert!((off - on - g.lambda[0][(0, 0)]).abs() < 1e-12);
}

#[test]
fn quiet_system_costs_nothing() {
    let m = LinearSystemModel::new(SystemSpec::time_invariant(
        5,
        s(1.2),
        s(1.0),
        s(1.0),
        s(1.0),
        s(1.0),
        s(0.0),
    ))
    .unwrap();
    let zero = Vector::zeros(1);
    for delay in [DelayProfile::perfect(), DelayProfile::new(1, 1)] {
        let g = backward_recursion(&m, 0.5, Some(delay), Observation::Full).unwrap();
        let chain = ReliabilityChain::symmetric(0.5, TauInit::ON).unwrap();
        assert_eq!(
            min_cost(&g, &m, &chain, &zero, &PenaltyConfig::exact())
                .unwrap()
                .total,
            0.0
        );
    }
}

#[test]
fn exact_measurement_partial_equals_full() {
    let spec = SystemSpec::time_invariant(6, s(1.1), s(1.0), s(1.0), s(2.0), s(0.5), s(0.3))
        .with_measurement(s(1.0), s(0.0));
    let m = LinearSystemModel::new(spec).unwrap();
    for delay in [DelayProfile::perfect(), DelayProfile::new(1, 1)] {
        let chain = ReliabilityChain::symmetric(0.8, TauInit::ON).unwrap();
        let full = backward_recursion(&m, 0.8, Some(delay), Observation::Full).unwrap();
        let part = backward_recursion(&m, 0.8, Some(delay), Observation::Partial).unwrap();
        let a = min_cost(&full, &m, &chain, &x1(), &PenaltyConfig::exact()).unwrap();
        let b = min_cost(&part, &m, &chain, &x1(), &PenaltyConfig::exact()).unwrap();
        assert_eq!(b.estimation_penalty, 0.0);
        assert!((a.total - b.total).abs() < 1e-12);
    }
}

#[test]
fn noisy_measurement_adds_nonnegative_penalty() {
    let spec = SystemSpec::time_invariant(6, s(1.1), s(1.0), s(1.0), s(2.0), s(0.5), s(0.3))
        .with_measurement(s(1.0), s(0.4));
    let m = LinearSystemModel::new(spec).unwrap();
    for delay in [DelayProfile::perfect(), DelayProfile::new(1, 1)] {
        let chain = ReliabilityChain::symmetric(0.8, TauInit::ON).unwrap();
        let g = backward_recursion(&m, 0.8, Some(delay), Observation::Partial).unwrap();
        let c = min_cost(&g, &m, &chain, &x1(), &PenaltyConfig::exact()).unwrap();
        assert!(c.estimation_penalty > 0.0);
    }
}

#[test]
fn asymmetric_chain_has_no_closed_form() {
    let m = unit(3);
    let g = backward_recursion_perfect(&m, 0.9, Observation::Full).unwrap();
    let chain = ReliabilityChain::new(0.9, 0.3, TauInit::ON).unwrap();
    assert!(matches!(
        min_cost(&g, &m, &chain, &x1(), &PenaltyConfig::exact()),
        Err(FogError::AsymmetricChain { .. })
    ));
}
