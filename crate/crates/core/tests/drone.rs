use fogctl_core::drone::{
    build_system, controller_mode, input_matrix, make_waypoints, raw_kinematics_step, state_matrix,
};
use fogctl_core::simulator::{self, SimulationConfig};
use fogctl_core::{
    DelayProfile, DriftMode, DroneScenario, ReliabilityChain, TauInit, Vector, WaypointPlan,
};

fn close(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
}

#[test]
fn quarter_turn_circle() {
    let plan = WaypointPlan {
        start: [2.0, 0.0],
        center: [0.0, 0.0],
        radius: 1.0,
        approach_stages: 0,
        circle_stages: 4,
        return_stages: 0,
        max_speed: None,
    };
    let wp = make_waypoints(&plan, 1.0).unwrap();
    let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]];
    assert_eq!(wp.len(), expected.len());
    for (a, b) in wp.iter().zip(expected) {
        assert!(close(*a, b), "{a:?} vs {b:?}");
    }
}

#[test]
fn default_plan_shape() {
    let sc = DroneScenario::default();
    let wp = sc.waypoints().unwrap();
    assert_eq!(wp.len(), 201);
    assert!(close(wp[0], wp[200]));
    assert!(close(
        wp[50],
        [10.0 - 4.0 / 2f64.sqrt(), 10.0 - 4.0 / 2f64.sqrt()]
    ));
}

#[test]
fn speed_bound_enforced() {
    let plan = WaypointPlan {
        max_speed: Some(0.01),
        ..WaypointPlan::default()
    };
    assert!(make_waypoints(&plan, 1.0).is_err());
}

#[test]
fn hover_has_no_drift() {
    let sc = DroneScenario {
        plan: WaypointPlan {
            start: [3.0, 3.0],
            center: [3.0, 3.0],
            radius: 0.0,
            approach_stages: 5,
            circle_stages: 0,
            return_stages: 5,
            max_speed: None,
        },
        ..DroneScenario::default()
    };
    let m = build_system(&sc).unwrap();
    assert_eq!(m.horizon(), 10);
    for k in 0..10 {
        assert!(m.drift(k).unwrap().iter().all(|d| *d == 0.0));
    }
}

#[test]
fn system_matrices() {
    let sc = DroneScenario {
        delta_t: 0.5,
        ..DroneScenario::default()
    };
    let m = build_system(&sc).unwrap();
    assert_eq!(m.a(0), &state_matrix(0.5));
    assert_eq!(m.a(0)[(0, 2)], 0.5);
    assert_eq!(m.b(0), &input_matrix(0.5));
    let w = m.w(0);
    assert!((w[(0, 0)] - 0.01).abs() < 1e-15);
    assert!((w[(0, 2)] - 0.005).abs() < 1e-15);
    assert!((w[(3, 3)] - 0.01).abs() < 1e-15);
    assert_eq!(m.r(0)[(1, 1)], 0.1);
}

#[test]
fn raw_step_kinematics() {
    let x = Vector::from_column_slice(&[1.0, 2.0, 0.5, -0.5]);
    let u = Vector::from_column_slice(&[0.25, 0.25]);
    let w = Vector::zeros(4);
    let next = raw_kinematics_step(&x, &u, &w, 2.0);
    assert_eq!(next.as_slice(), &[2.5, 1.5, 0.75, -0.25]);
}

#[test]
fn rejects_non_psd_disturbance() {
    let sc = DroneScenario {
        rho: 0.02,
        ..DroneScenario::default()
    };
    assert!(build_system(&sc).is_err());
}

#[test]
fn default_mode_and_drift_compensation() {
    assert_eq!(DriftMode::default(), DriftMode::Uncompensated);
    let sc = DroneScenario::default();
    let m = build_system(&sc).unwrap();
    let chain = ReliabilityChain::symmetric(1.0, TauInit::ON).unwrap();
    let cfg = SimulationConfig::new(400, 17).with_tracking(sc.tracking_layout());
    let rms = |mode| {
        let r = controller_mode(&m, 1.0, DelayProfile::perfect(), mode).unwrap();
        let t = simulator::run(&m, &chain, &r, &sc.initial_state(), &cfg)
            .unwrap()
            .tracking
            .unwrap();
        (t.rms_position_error, t.rms_standard_error)
    };
    let (plain, se_p) = rms(DriftMode::Uncompensated);
    let (affine, se_a) = rms(DriftMode::AffineCompensated);
    assert!(
        affine <= plain + 3.0 * se_p.hypot(se_a),
        "{affine} vs {plain}"
    );
}
