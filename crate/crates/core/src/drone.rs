//! Planar UV trajectory tracking in error coordinates.
//!
//! Raw kinematics, per axis: `x' = x + Δt(v + u) + w^x`, `v' = v + u + w^v`.
//! With `e_k = x_k - x̄_k` this is a linear plant in `(e, v)` whose drift is
//! `x̄_k - x̄_{k+1}` on the error block.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{FogError, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{DelayProfile, LinearSystemModel, Observation, SystemSpec};
use crate::policy::{ControllerRegime, DriftMode};
use crate::simulator::TrackingLayout;

pub type Point = [f64; 2];

/// Approach a target, circle it counterclockwise, fly back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointPlan {
    pub start: Point,
    pub center: Point,
    pub radius: f64,
    pub approach_stages: usize,
    pub circle_stages: usize,
    pub return_stages: usize,
    /// Optional bound on waypoint spacing divided by `Δt`.
    #[serde(default)]
    pub max_speed: Option<f64>,
}

impl Default for WaypointPlan {
    fn default() -> Self {
        WaypointPlan {
            start: [0.0, 0.0],
            center: [10.0, 10.0],
            radius: 4.0,
            approach_stages: 50,
            circle_stages: 100,
            return_stages: 50,
            max_speed: None,
        }
    }
}

impl WaypointPlan {
    pub fn horizon(&self) -> usize {
        self.approach_stages + self.circle_stages + self.return_stages
    }

    /// Point of the circle nearest to the start.
    pub fn entry_point(&self) -> Point {
        let d = [
            self.start[0] - self.center[0],
            self.start[1] - self.center[1],
        ];
        let norm = d[0].hypot(d[1]);
        if norm == 0.0 {
            [self.center[0] + self.radius, self.center[1]]
        } else {
            [
                self.center[0] + self.radius * d[0] / norm,
                self.center[1] + self.radius * d[1] / norm,
            ]
        }
    }
}

fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

/// `N + 1` waypoints: linear approach to the entry point, uniform angular
/// steps around the circle, linear return ending at the start.
pub fn make_waypoints(plan: &WaypointPlan, delta_t: f64) -> Result<Vec<Point>> {
    if plan.horizon() == 0 {
        return Err(FogError::InvalidScenario("plan has no stages".into()));
    }
    if plan.circle_stages > 0 && plan.radius <= 0.0 {
        return Err(FogError::InvalidScenario(
            "circle phase needs a positive radius".into(),
        ));
    }
    if delta_t.is_nan() || delta_t <= 0.0 {
        return Err(FogError::InvalidScenario("delta_t must be positive".into()));
    }
    let entry = plan.entry_point();
    let mut out = Vec::with_capacity(plan.horizon() + 1);
    for i in 0..plan.approach_stages {
        out.push(lerp(
            plan.start,
            entry,
            i as f64 / plan.approach_stages as f64,
        ));
    }
    let theta0 = (entry[1] - plan.center[1]).atan2(entry[0] - plan.center[0]);
    for i in 0..plan.circle_stages {
        let th = theta0 + TAU * i as f64 / plan.circle_stages as f64;
        out.push([
            plan.center[0] + plan.radius * th.cos(),
            plan.center[1] + plan.radius * th.sin(),
        ]);
    }
    if plan.return_stages == 0 {
        out.push(entry);
    } else {
        for i in 0..=plan.return_stages {
            out.push(lerp(
                entry,
                plan.start,
                i as f64 / plan.return_stages as f64,
            ));
        }
    }
    if let Some(vmax) = plan.max_speed {
        for (k, w) in out.windows(2).enumerate() {
            let speed = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) / delta_t;
            if speed > vmax + 1e-12 {
                return Err(FogError::InvalidScenario(format!(
                    "waypoint speed {speed:.3} exceeds bound {vmax} at stage {k}"
                )));
            }
        }
    }
    Ok(out)
}

/// Parameters of the tracking study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DroneScenario {
    pub delta_t: f64,
    pub alpha: f64,
    pub sigma_x: f64,
    pub sigma_v: f64,
    pub rho: f64,
    /// Defaults to the plan's start.
    pub start_position: Option<Point>,
    pub start_velocity: Point,
    pub plan: WaypointPlan,
}

impl Default for DroneScenario {
    fn default() -> Self {
        DroneScenario {
            delta_t: 1.0,
            alpha: 0.1,
            sigma_x: 0.1,
            sigma_v: 0.1,
            rho: 0.1 * 0.1 / 2.0,
            start_position: None,
            start_velocity: [0.0, 0.0],
            plan: WaypointPlan::default(),
        }
    }
}

impl DroneScenario {
    pub fn validate(&self) -> Result<()> {
        if self.delta_t.is_nan() || self.delta_t <= 0.0 {
            return Err(FogError::InvalidScenario("delta_t must be positive".into()));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(FogError::InvalidScenario(
                "alpha must be nonnegative".into(),
            ));
        }
        if !(self.sigma_x >= 0.0 && self.sigma_v >= 0.0) {
            return Err(FogError::InvalidScenario(
                "noise deviations must be nonnegative".into(),
            ));
        }
        if !self.rho.is_finite() || self.rho.abs() > self.sigma_x * self.sigma_v {
            return Err(FogError::InvalidScenario(format!(
                "|rho| = {} exceeds sigma_x * sigma_v = {}: disturbance covariance not PSD",
                self.rho.abs(),
                self.sigma_x * self.sigma_v
            )));
        }
        Ok(())
    }

    pub fn waypoints(&self) -> Result<Vec<Point>> {
        make_waypoints(&self.plan, self.delta_t)
    }

    /// Initial error-coordinate state `(x_0 - x̄_0, v_0)`.
    pub fn initial_state(&self) -> Vector {
        let p = self.start_position.unwrap_or(self.plan.start);
        let w0 = self.plan.start;
        Vector::from_column_slice(&[
            p[0] - w0[0],
            p[1] - w0[1],
            self.start_velocity[0],
            self.start_velocity[1],
        ])
    }

    /// 4×4 disturbance covariance `[[σx²I, ρI], [ρI, σv²I]]`.
    pub fn disturbance_covariance(&self) -> Mat {
        let mut w = Mat::zeros(4, 4);
        for i in 0..2 {
            w[(i, i)] = self.sigma_x * self.sigma_x;
            w[(i + 2, i + 2)] = self.sigma_v * self.sigma_v;
            w[(i, i + 2)] = self.rho;
            w[(i + 2, i)] = self.rho;
        }
        w
    }

    /// Error block first, then velocity; energy weight `α`.
    pub fn tracking_layout(&self) -> TrackingLayout {
        TrackingLayout {
            error_dims: 2,
            velocity_offset: 2,
            velocity_dims: 2,
            alpha: self.alpha,
        }
    }
}

pub fn state_matrix(delta_t: f64) -> Mat {
    let mut a = Mat::identity(4, 4);
    a[(0, 2)] = delta_t;
    a[(1, 3)] = delta_t;
    a
}

pub fn input_matrix(delta_t: f64) -> Mat {
    let mut b = Mat::zeros(4, 2);
    for i in 0..2 {
        b[(i, i)] = delta_t;
        b[(i + 2, i)] = 1.0;
    }
    b
}

/// Error-coordinate plant with `Q = diag(I, αI)` at every stage including
/// the terminal one, `R = αI`, and the waypoint drift.
pub fn build_system(scenario: &DroneScenario) -> Result<LinearSystemModel> {
    scenario.validate()?;
    let wp = scenario.waypoints()?;
    let horizon = wp.len() - 1;
    let mut q = Mat::identity(4, 4);
    q[(2, 2)] = scenario.alpha;
    q[(3, 3)] = scenario.alpha;
    let r = Mat::identity(2, 2) * scenario.alpha;
    let drift = wp
        .windows(2)
        .map(|w| Vector::from_column_slice(&[w[0][0] - w[1][0], w[0][1] - w[1][1], 0.0, 0.0]))
        .collect();
    let spec = SystemSpec::time_invariant(
        horizon,
        state_matrix(scenario.delta_t),
        input_matrix(scenario.delta_t),
        q.clone(),
        q,
        r,
        scenario.disturbance_covariance(),
    )
    .with_drift(drift);
    LinearSystemModel::new(spec)
}

/// Controller for the scenario. The default uncompensated mode applies the
/// zero-mean gains to the drifted error state.
pub fn controller_mode(
    model: &LinearSystemModel,
    p: f64,
    delay: DelayProfile,
    mode: DriftMode,
) -> Result<ControllerRegime> {
    ControllerRegime::optimal(model, p, delay, Observation::Full)?.with_drift_mode(model, mode)
}

/// One step of the raw kinematics on `(position, velocity)`.
pub fn raw_kinematics_step(state: &Vector, u: &Vector, w: &Vector, delta_t: f64) -> Vector {
    let mut next = state.clone();
    for i in 0..2 {
        next[i] = state[i] + delta_t * (state[i + 2] + u[i]) + w[i];
        next[i + 2] = state[i + 2] + u[i] + w[i + 2];
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    #[test]
    fn quarter_turn_circle() {
        let plan = WaypointPlan {
            start: [2.0, 0.0],
            center: [0.0, 0.0],
            radius: 1.0,
            approach_stages: 0,
            circle_stages: 4,
            return_stages: 1,
            max_speed: None,
        };
        let wp = make_waypoints(&plan, 1.0).unwrap();
        let expect = [
            [1.0, 0.0],
            [0.0, 1.0],
            [-1.0, 0.0],
            [0.0, -1.0],
            [1.0, 0.0],
            [2.0, 0.0],
        ];
        assert_eq!(wp.len(), expect.len());
        for (a, b) in wp.iter().zip(expect) {
            assert!(
                (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12,
                "{a:?} vs {b:?}"
            );
        }
    }

    #[test]
    fn single_stage_approach_is_a_direct_hop() {
        let plan = WaypointPlan {
            start: [0.0, 0.0],
            center: [2.0, 0.0],
            radius: 1.0,
            approach_stages: 1,
            circle_stages: 0,
            return_stages: 0,
            max_speed: None,
        };
        let wp = make_waypoints(&plan, 1.0).unwrap();
        assert_eq!(wp, vec![[0.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn default_plan_sits_on_the_circle() {
        let plan = WaypointPlan::default();
        let wp = make_waypoints(&plan, 1.0).unwrap();
        assert_eq!(wp.len(), 201);
        for w in &wp[50..=150] {
            let r = (w[0] - 10.0).hypot(w[1] - 10.0);
            assert!((r - 4.0).abs() < 1e-9);
        }
        assert_eq!(wp[200], plan.start);
    }

    #[test]
    fn zero_radius_circle_rejected() {
        let plan = WaypointPlan {
            radius: 0.0,
            ..WaypointPlan::default()
        };
        assert!(make_waypoints(&plan, 1.0).is_err());
        let plan = WaypointPlan {
            max_speed: Some(0.01),
            ..WaypointPlan::default()
        };
        assert!(make_waypoints(&plan, 1.0).is_err());
    }

    #[test]
    fn system_structure() {
        let sc = DroneScenario::default();
        let model = build_system(&sc).unwrap();
        assert_eq!(model.horizon(), 200);
        let a = model.a(0);
        assert_eq!(a[(0, 2)], 1.0);
        assert_eq!(a[(1, 3)], 1.0);
        assert_eq!(a[(0, 1)], 0.0);
        let w = model.w(0);
        assert!((w[(0, 0)] - 0.01).abs() < 1e-15);
        assert!((w[(0, 2)] - 0.005).abs() < 1e-15);
        assert!((w[(2, 2)] - 0.01).abs() < 1e-15);
        assert_eq!(model.q_terminal(), model.q(0));
        assert_eq!(model.r(0)[(0, 0)], 0.1);
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
                return_stages: 0,
                max_speed: None,
            },
            ..DroneScenario::default()
        };
        let model = build_system(&sc).unwrap();
        for k in 0..model.horizon() {
            assert_eq!(model.drift(k).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn correlation_bound() {
        let mut sc = DroneScenario::default();
        sc.rho = sc.sigma_x * sc.sigma_v;
        assert!(build_system(&sc).is_ok());
        assert!(linalg::is_psd(&sc.disturbance_covariance(), 1e-12));
        sc.rho *= 1.0 + 1e-9;
        assert!(matches!(
            build_system(&sc),
            Err(FogError::InvalidScenario(_))
        ));
    }
}
