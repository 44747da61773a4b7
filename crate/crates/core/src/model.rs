//! Validated value types for the plant, the endpoint reliability chain, the
//! round-trip delay and the controller-side bookkeeping.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{FogError, Result};
use crate::linalg::{self, Mat, Vector};

/// Raw per-stage matrices of a linear plant, prior to validation.
///
/// `q` holds `horizon + 1` entries (the last is the terminal weight); every
/// other sequence holds `horizon` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub horizon: usize,
    pub state_dim: usize,
    pub control_dim: usize,
    pub obs_dim: usize,
    pub a: Vec<Mat>,
    pub b: Vec<Mat>,
    pub c: Vec<Mat>,
    pub q: Vec<Mat>,
    pub r: Vec<Mat>,
    pub w: Vec<Mat>,
    pub v_noise: Vec<Mat>,
    pub drift: Option<Vec<Vector>>,
}

impl SystemSpec {
    /// Replicates constant matrices over the horizon. `c`/`v_noise` default to
    /// exact state observation.
    #[allow(clippy::too_many_arguments)]
    pub fn time_invariant(
        horizon: usize,
        a: Mat,
        b: Mat,
        q: Mat,
        q_terminal: Mat,
        r: Mat,
        w: Mat,
    ) -> Self {
        let n = a.nrows();
        let s = b.ncols();
        let mut qs = vec![q; horizon];
        qs.push(q_terminal);
        SystemSpec {
            horizon,
            state_dim: n,
            control_dim: s,
            obs_dim: n,
            a: vec![a; horizon],
            b: vec![b; horizon],
            c: vec![Mat::identity(n, n); horizon],
            q: qs,
            r: vec![r; horizon],
            w: vec![w; horizon],
            v_noise: vec![Mat::zeros(n, n); horizon],
            drift: None,
        }
    }

    /// Replaces the measurement channel with a constant `c` and noise `v`.
    pub fn with_measurement(mut self, c: Mat, v: Mat) -> Self {
        self.obs_dim = c.nrows();
        self.c = vec![c; self.horizon];
        self.v_noise = vec![v; self.horizon];
        self
    }

    pub fn with_drift(mut self, drift: Vec<Vector>) -> Self {
        self.drift = Some(drift);
        self
    }
}

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    HorizonZero,
    ZeroDimension(&'static str),
    SequenceLength {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    Shape {
        name: &'static str,
        k: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    NotPositiveDefinite {
        name: &'static str,
        k: usize,
    },
    NotPsd {
        name: &'static str,
        k: usize,
    },
    NonFinite {
        name: &'static str,
        k: usize,
    },
}

impl Violation {
    /// Stage the violation refers to, if any.
    pub fn stage(&self) -> Option<usize> {
        match self {
            Violation::Shape { k, .. }
            | Violation::NotPositiveDefinite { k, .. }
            | Violation::NotPsd { k, .. }
            | Violation::NonFinite { k, .. } => Some(*k),
            _ => None,
        }
    }

    /// Same violation moved to stage `stage`.
    pub fn at_stage(&self, stage: usize) -> Violation {
        let mut v = self.clone();
        match &mut v {
            Violation::Shape { k, .. }
            | Violation::NotPositiveDefinite { k, .. }
            | Violation::NotPsd { k, .. }
            | Violation::NonFinite { k, .. } => *k = stage,
            _ => {}
        }
        v
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::HorizonZero => write!(f, "horizon N must be at least 1"),
            Violation::ZeroDimension(what) => write!(f, "{what} must be positive"),
            Violation::SequenceLength {
                name,
                expected,
                got,
            } => write!(f, "{name} has {got} stages, expected {expected}"),
            Violation::Shape {
                name,
                k,
                expected,
                got,
            } => write!(
                f,
                "{name} at k={k} has shape {}x{}, expected {}x{}",
                got.0, got.1, expected.0, expected.1
            ),
            Violation::NotPositiveDefinite { name, k } => {
                write!(f, "{name} not positive definite at k={k}")
            }
            Violation::NotPsd { name, k } => {
                write!(f, "{name} not positive semidefinite at k={k}")
            }
            Violation::NonFinite { name, k } => write!(f, "{name} has non-finite entries at k={k}"),
        }
    }
}

/// A validated finite-horizon linear plant with quadratic weights.
///
/// Immutable once built; weight and covariance inputs are symmetrized on
/// ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystemModel {
    spec: SystemSpec,
}

/// Validates `spec`, returning the model or every violated invariant.
pub fn validate_model(spec: SystemSpec) -> Result<LinearSystemModel> {
    LinearSystemModel::new(spec)
}

impl LinearSystemModel {
    pub fn new(mut spec: SystemSpec) -> Result<Self> {
        let mut bad = Vec::new();
        let (n, s, m, horizon) = (spec.state_dim, spec.control_dim, spec.obs_dim, spec.horizon);
        if horizon == 0 {
            bad.push(Violation::HorizonZero);
        }
        for (name, d) in [("state_dim", n), ("control_dim", s), ("obs_dim", m)] {
            if d == 0 {
                bad.push(Violation::ZeroDimension(name));
            }
        }
        if !bad.is_empty() {
            return Err(FogError::InvalidModel(bad));
        }

        check_seq(&mut bad, "A", &spec.a, horizon, (n, n));
        check_seq(&mut bad, "B", &spec.b, horizon, (n, s));
        check_seq(&mut bad, "C", &spec.c, horizon, (m, n));
        check_seq(&mut bad, "Q", &spec.q, horizon + 1, (n, n));
        check_seq(&mut bad, "R", &spec.r, horizon, (s, s));
        check_seq(&mut bad, "W", &spec.w, horizon, (n, n));
        check_seq(&mut bad, "V_noise", &spec.v_noise, horizon, (m, m));
        if let Some(drift) = &spec.drift {
            if drift.len() != horizon {
                bad.push(Violation::SequenceLength {
                    name: "drift",
                    expected: horizon,
                    got: drift.len(),
                });
            }
            for (k, d) in drift.iter().enumerate() {
                if d.len() != n {
                    bad.push(Violation::Shape {
                        name: "drift",
                        k,
                        expected: (n, 1),
                        got: (d.len(), 1),
                    });
                } else if d.iter().any(|x| !x.is_finite()) {
                    bad.push(Violation::NonFinite { name: "drift", k });
                }
            }
        }
        if !bad.is_empty() {
            return Err(FogError::InvalidModel(bad));
        }

        symmetrize_seq("Q", &mut spec.q);
        symmetrize_seq("R", &mut spec.r);
        symmetrize_seq("W", &mut spec.w);
        symmetrize_seq("V_noise", &mut spec.v_noise);

        for (k, q) in spec.q.iter().enumerate() {
            if !linalg::is_psd(q, linalg::PD_TOL) {
                bad.push(Violation::NotPsd { name: "Q", k });
            }
        }
        for (k, r) in spec.r.iter().enumerate() {
            if !linalg::is_pd(r) {
                bad.push(Violation::NotPositiveDefinite { name: "R", k });
            }
        }
        for (k, w) in spec.w.iter().enumerate() {
            if !linalg::is_psd(w, linalg::PD_TOL) {
                bad.push(Violation::NotPsd { name: "W", k });
            }
        }
        for (k, v) in spec.v_noise.iter().enumerate() {
            if !linalg::is_psd(v, linalg::PD_TOL) {
                bad.push(Violation::NotPsd { name: "V_noise", k });
            }
        }
        if bad.is_empty() {
            Ok(LinearSystemModel { spec })
        } else {
            Err(FogError::InvalidModel(bad))
        }
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }
    pub fn state_dim(&self) -> usize {
        self.spec.state_dim
    }
    pub fn control_dim(&self) -> usize {
        self.spec.control_dim
    }
    pub fn obs_dim(&self) -> usize {
        self.spec.obs_dim
    }
    pub fn a(&self, k: usize) -> &Mat {
        &self.spec.a[k]
    }
    pub fn b(&self, k: usize) -> &Mat {
        &self.spec.b[k]
    }
    pub fn c(&self, k: usize) -> &Mat {
        &self.spec.c[k]
    }
    /// Weight for stage `k`, `k = horizon` giving the terminal weight.
    pub fn q(&self, k: usize) -> &Mat {
        &self.spec.q[k]
    }
    pub fn q_terminal(&self) -> &Mat {
        &self.spec.q[self.spec.horizon]
    }
    pub fn r(&self, k: usize) -> &Mat {
        &self.spec.r[k]
    }
    pub fn w(&self, k: usize) -> &Mat {
        &self.spec.w[k]
    }
    pub fn v_noise(&self, k: usize) -> &Mat {
        &self.spec.v_noise[k]
    }
    pub fn drift(&self, k: usize) -> Option<&Vector> {
        self.spec.drift.as_ref().map(|d| &d[k])
    }
    /// True if a drift sequence is present with at least one nonzero entry.
    pub fn has_drift(&self) -> bool {
        self.spec
            .drift
            .as_ref()
            .is_some_and(|d| d.iter().any(|v| v.iter().any(|x| *x != 0.0)))
    }
    /// True when every stage measures the full state without noise.
    pub fn is_exactly_observed(&self) -> bool {
        let n = self.state_dim();
        self.obs_dim() == n
            && self.spec.c.iter().all(|c| *c == Mat::identity(n, n))
            && self.spec.v_noise.iter().all(linalg::is_zero)
    }
    pub fn all_disturbances_zero(&self) -> bool {
        self.spec.w.iter().all(linalg::is_zero)
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }
    pub fn into_spec(self) -> SystemSpec {
        self.spec
    }

    /// One step of the plant: `A_k x + B_k u + drift_k + w`.
    pub fn step(&self, k: usize, x: &Vector, u: &Vector, w: &Vector) -> Vector {
        let mut next = self.a(k) * x + self.b(k) * u + w;
        if let Some(d) = self.drift(k) {
            next += d;
        }
        next
    }

    pub fn stage_cost(&self, k: usize, x: &Vector, u: &Vector) -> f64 {
        linalg::quad_form(self.q(k), x) + linalg::quad_form(self.r(k), u)
    }
}

fn check_seq(
    bad: &mut Vec<Violation>,
    name: &'static str,
    seq: &[Mat],
    expected_len: usize,
    shape: (usize, usize),
) {
    if seq.len() != expected_len {
        bad.push(Violation::SequenceLength {
            name,
            expected: expected_len,
            got: seq.len(),
        });
    }
    for (k, m) in seq.iter().enumerate() {
        if m.shape() != shape {
            bad.push(Violation::Shape {
                name,
                k,
                expected: shape,
                got: m.shape(),
            });
        } else if m.iter().any(|x| !x.is_finite()) {
            bad.push(Violation::NonFinite { name, k });
        }
    }
}

fn symmetrize_seq(name: &str, seq: &mut [Mat]) {
    for (k, m) in seq.iter_mut().enumerate() {
        let asym = linalg::asymmetry(m);
        if asym > 1e-9 {
            log::warn!("{name} at k={k} is asymmetric by {asym:.3e}; symmetrizing");
        }
        *m = linalg::symmetrize(m);
    }
}

/// Initial state of the endpoint chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauInit {
    /// A point value, 1 for ON and 0 for OFF.
    State(u8),
    /// A distribution over {OFF, ON}.
    Distribution { on_probability: f64 },
}

impl TauInit {
    pub const ON: TauInit = TauInit::State(1);
    pub const OFF: TauInit = TauInit::State(0);

    pub fn on_probability(&self) -> f64 {
        match *self {
            TauInit::State(s) => f64::from(u8::from(s != 0)),
            TauInit::Distribution { on_probability } => on_probability,
        }
    }
}

impl Default for TauInit {
    fn default() -> Self {
        TauInit::ON
    }
}

/// Two-state Markov ON/OFF process of the fog endpoint.
///
/// `p = P[ON -> ON]`, `q = P[OFF -> OFF]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityChain {
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub tau0: TauInit,
}

impl ReliabilityChain {
    pub fn new(p: f64, q: f64, tau0: TauInit) -> Result<Self> {
        let chain = ReliabilityChain { p, q, tau0 };
        chain.validate()?;
        Ok(chain)
    }

    /// The chain with `q = 1 - p`, whose next state does not depend on the
    /// current one.
    pub fn symmetric(p: f64, tau0: TauInit) -> Result<Self> {
        Self::new(p, 1.0 - p, tau0)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !unit(self.p) || !unit(self.q) {
            return Err(FogError::InvalidChain(format!(
                "p and q must lie in [0, 1], got p = {}, q = {}",
                self.p, self.q
            )));
        }
        match self.tau0 {
            TauInit::State(s) if s > 1 => Err(FogError::InvalidChain(format!(
                "tau0 must be 0 or 1, got {s}"
            ))),
            TauInit::Distribution { on_probability } if !unit(on_probability) => Err(
                FogError::InvalidChain(format!("tau0 probability {on_probability} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (self.p - (1.0 - self.q)).abs() <= 1e-12
    }

    /// Probability that the next state is ON given the current one.
    pub fn next_on_probability(&self, on: bool) -> f64 {
        if on {
            self.p
        } else {
            1.0 - self.q
        }
    }

    /// P[tau_{k+steps} = ON] given P[tau_k = ON] = `on_prob`.
    pub fn on_probability_after(&self, on_prob: f64, steps: usize) -> f64 {
        let mut pi = on_prob;
        for _ in 0..steps {
            pi = pi * self.p + (1.0 - pi) * (1.0 - self.q);
        }
        pi
    }

    /// Transition probability P[tau_{k+steps} = to | tau_k = from].
    pub fn transition_probability(&self, from: bool, to: bool, steps: usize) -> f64 {
        let on = self.on_probability_after(f64::from(u8::from(from)), steps);
        if to {
            on
        } else {
            1.0 - on
        }
    }

    /// Same chain with a different initial state.
    pub fn with_tau0(mut self, tau0: TauInit) -> Self {
        self.tau0 = tau0;
        self
    }
}

/// Long-run fraction of ON stages, `(1-q)/((1-p)+(1-q))`.
pub fn stationary_on_probability(chain: &ReliabilityChain) -> Result<f64> {
    chain.validate()?;
    let denom = (1.0 - chain.p) + (1.0 - chain.q);
    if denom <= 0.0 {
        return Err(FogError::DegenerateChain);
    }
    Ok((1.0 - chain.q) / denom)
}

/// Forward and backward delay in stages; compute time is folded into the
/// backward leg.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DelayProfile {
    pub forward: usize,
    pub backward: usize,
}

/// Quantities derived from a delay profile and a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DelayTerms {
    /// `N mod M`, or `M` when `M` divides `N`.
    pub a: usize,
    /// `(N - a) / M`: number of controls that reach the plant.
    pub c: usize,
}

impl DelayTerms {
    /// `cM`, the last stage at which a control can arrive.
    pub fn last_control_stage(&self, total: usize) -> usize {
        self.c * total
    }
}

impl DelayProfile {
    pub fn new(forward: usize, backward: usize) -> Self {
        DelayProfile { forward, backward }
    }

    pub fn perfect() -> Self {
        DelayProfile::default()
    }

    /// Splits a round trip into `forward = ceil(M/2)` and the remainder.
    pub fn split(total: usize) -> Self {
        let forward = total.div_ceil(2);
        DelayProfile::new(forward, total - forward)
    }

    pub fn total(&self) -> usize {
        self.forward + self.backward
    }

    pub fn is_perfect(&self) -> bool {
        self.total() == 0
    }

    /// `None` for perfect match.
    pub fn terms(&self, horizon: usize) -> Option<DelayTerms> {
        let m = self.total();
        if m == 0 {
            return None;
        }
        let a = match horizon % m {
            0 => m,
            r => r,
        };
        Some(DelayTerms {
            a,
            c: (horizon.saturating_sub(a)) / m,
        })
    }

    pub fn on_grid(&self, k: usize) -> bool {
        let m = self.total();
        m == 0 || k.is_multiple_of(m)
    }

    /// True if a control can be applied at stage `k`.
    pub fn control_stage(&self, k: usize) -> bool {
        let m = self.total();
        m == 0 || (k >= m && k.is_multiple_of(m))
    }

    pub fn check_horizon(&self, horizon: usize) -> Result<()> {
        if horizon < self.total() {
            return Err(FogError::HorizonShorterThanDelay {
                horizon,
                delay: self.total(),
            });
        }
        Ok(())
    }
}

/// Full or partial state observation at the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Observation {
    #[default]
    Full,
    Partial,
}

/// Controller-side history: observations kept only for ON stages, plus every
/// applied control.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InformationSet {
    observations: Vec<(usize, Vector)>,
    controls: Vec<(usize, Vector)>,
}

impl InformationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `z` from stage `stage` if the endpoint was ON. Returns whether
    /// the observation was stored.
    pub fn observe(&mut self, stage: usize, z: Vector, on: bool) -> Result<bool> {
        if !on {
            return Ok(false);
        }
        if self.observations.last().is_some_and(|(s, _)| *s >= stage) {
            return Err(FogError::Stage {
                stage,
                why: "observation stages must be strictly increasing".into(),
            });
        }
        self.observations.push((stage, z));
        Ok(true)
    }

    pub fn record_control(&mut self, stage: usize, u: Vector) -> Result<()> {
        if self.controls.last().is_some_and(|(s, _)| *s >= stage) {
            return Err(FogError::Stage {
                stage,
                why: "control stages must be strictly increasing".into(),
            });
        }
        self.controls.push((stage, u));
        Ok(())
    }

    pub fn observations(&self) -> &[(usize, Vector)] {
        &self.observations
    }

    pub fn controls(&self) -> &[(usize, Vector)] {
        &self.controls
    }

    pub fn observation_at(&self, stage: usize) -> Option<&Vector> {
        self.observations
            .binary_search_by_key(&stage, |(s, _)| *s)
            .ok()
            .map(|i| &self.observations[i].1)
    }

    pub fn control_at(&self, stage: usize) -> Option<&Vector> {
        self.controls
            .binary_search_by_key(&stage, |(s, _)| *s)
            .ok()
            .map(|i| &self.controls[i].1)
    }

    /// Observations the controller can hold when generating the control for
    /// stage `k` under round-trip delay `m`.
    pub fn visible_at(&self, k: usize, m: usize) -> impl Iterator<Item = &(usize, Vector)> {
        self.observations
            .iter()
            .take_while(move |(s, _)| s + m <= k)
    }
}

/// Output of a policy at one stage. `applied == false` implies `u == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    u: Vector,
    applied: bool,
}

impl PolicyDecision {
    pub fn idle(control_dim: usize) -> Self {
        PolicyDecision {
            u: Vector::zeros(control_dim),
            applied: false,
        }
    }

    pub fn apply(u: Vector) -> Self {
        PolicyDecision { u, applied: true }
    }

    pub fn u(&self) -> &Vector {
        &self.u
    }

    pub fn applied(&self) -> bool {
        self.applied
    }

    pub fn into_control(self) -> Vector {
        self.u
    }
}

/// Closed-form minimum cost split into its additive pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub initial_state_term: f64,
    pub disturbance_trace_sum: f64,
    pub collateral_trace_sum: f64,
    pub estimation_penalty: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(
        initial_state_term: f64,
        disturbance_trace_sum: f64,
        collateral_trace_sum: f64,
        estimation_penalty: f64,
    ) -> Self {
        CostBreakdown {
            initial_state_term,
            disturbance_trace_sum,
            collateral_trace_sum,
            estimation_penalty,
            total: initial_state_term
                + disturbance_trace_sum
                + collateral_trace_sum
                + estimation_penalty,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Mat {
        Mat::from_element(1, 1, x)
    }

    fn unit_spec(horizon: usize) -> SystemSpec {
        SystemSpec::time_invariant(
            horizon,
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
        )
    }

    #[test]
    fn scalar_identity_is_valid() {
        assert!(validate_model(unit_spec(1)).is_ok());
    }

    #[test]
    fn singular_r_is_rejected() {
        let mut spec = unit_spec(1);
        spec.r[0] = scalar(0.0);
        let err = validate_model(spec).unwrap_err();
        assert!(
            err.to_string().contains("R not positive definite at k=0"),
            "{err}"
        );
    }

    #[test]
    fn bad_shape_is_rejected() {
        let mut spec = SystemSpec::time_invariant(
            1,
            Mat::identity(2, 2),
            Mat::identity(2, 1),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            scalar(1.0),
            Mat::identity(2, 2),
        );
        spec.a[0] = Mat::zeros(2, 1);
        match validate_model(spec).unwrap_err() {
            FogError::InvalidModel(v) => {
                assert!(matches!(
                    v[0],
                    Violation::Shape {
                        name: "A",
                        k: 0,
                        ..
                    }
                ))
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn every_violation_is_reported() {
        let mut spec = unit_spec(2);
        spec.r[1] = scalar(-1.0);
        spec.w[0] = scalar(-1.0);
        spec.horizon = 2;
        match validate_model(spec).unwrap_err() {
            FogError::InvalidModel(v) => assert_eq!(v.len(), 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let spec = unit_spec(0);
        assert!(matches!(
            validate_model(spec),
            Err(FogError::InvalidModel(v)) if v == vec![Violation::HorizonZero]
        ));
    }

    #[test]
    fn asymmetric_weights_are_symmetrized() {
        let mut spec = SystemSpec::time_invariant(
            1,
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::from_row_slice(2, 2, &[2.0, 0.2, 0.0, 2.0]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::zeros(2, 2),
        );
        spec.q[1] = Mat::identity(2, 2);
        let model = validate_model(spec).unwrap();
        assert_eq!(model.q(0)[(0, 1)], 0.1);
        assert_eq!(model.q(0)[(1, 0)], 0.1);
    }

    #[test]
    fn stationary_probability_examples() {
        let c = ReliabilityChain::new(0.5, 0.5, TauInit::ON).unwrap();
        assert_eq!(stationary_on_probability(&c).unwrap(), 0.5);
        let c = ReliabilityChain::new(1.0, 0.0, TauInit::ON).unwrap();
        assert_eq!(stationary_on_probability(&c).unwrap(), 1.0);
        let c = ReliabilityChain::new(0.9, 0.3, TauInit::ON).unwrap();
        assert!((stationary_on_probability(&c).unwrap() - 0.875).abs() < 1e-15);
        let c = ReliabilityChain::new(1.0, 1.0, TauInit::ON).unwrap();
        assert!(matches!(
            stationary_on_probability(&c),
            Err(FogError::DegenerateChain)
        ));
    }

    #[test]
    fn chain_rejects_out_of_range() {
        assert!(ReliabilityChain::new(1.2, 0.0, TauInit::ON).is_err());
        assert!(ReliabilityChain::new(0.5, 0.5, TauInit::State(2)).is_err());
    }

    #[test]
    fn symmetric_chain_forgets_its_state() {
        let c = ReliabilityChain::symmetric(0.3, TauInit::ON).unwrap();
        assert!(c.is_symmetric());
        for steps in 1..5 {
            assert!((c.transition_probability(true, true, steps) - 0.3).abs() < 1e-15);
            assert!((c.transition_probability(false, true, steps) - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn delay_terms_examples() {
        let d = DelayProfile::new(1, 1);
        assert_eq!(d.terms(2), Some(DelayTerms { a: 2, c: 0 }));
        assert_eq!(d.terms(3), Some(DelayTerms { a: 1, c: 1 }));
        assert_eq!(DelayProfile::perfect().terms(3), None);
        assert!(d.check_horizon(1).is_err());
    }

    #[test]
    fn delay_split_defaults() {
        assert_eq!(DelayProfile::split(3), DelayProfile::new(2, 1));
        assert_eq!(DelayProfile::split(1), DelayProfile::new(1, 0));
        assert_eq!(DelayProfile::split(0), DelayProfile::perfect());
    }

    #[test]
    fn information_set_keeps_on_stages_only() {
        let mut h = InformationSet::new();
        assert!(!h.observe(0, Vector::zeros(1), false).unwrap());
        assert!(h.observe(1, Vector::from_element(1, 2.0), true).unwrap());
        assert!(h.observe(1, Vector::zeros(1), true).is_err());
        assert_eq!(h.observations().len(), 1);
        assert_eq!(h.observation_at(1).unwrap()[0], 2.0);
        assert_eq!(h.visible_at(3, 2).count(), 1);
        assert_eq!(h.visible_at(2, 2).count(), 0);
    }

    #[test]
    fn idle_decision_is_zero() {
        let d = PolicyDecision::idle(3);
        assert!(!d.applied());
        assert_eq!(d.u().norm(), 0.0);
    }

    #[test]
    fn breakdown_total_is_sum() {
        let c = CostBreakdown::new(1.0, 2.0, 0.5, 0.25);
        assert_eq!(c.total, 3.75);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn delay_terms_partition_horizon(horizon in 1usize..200, m in 1usize..20) {
                let d = DelayProfile::new(m / 2, m - m / 2);
                let t = d.terms(horizon).unwrap();
                prop_assert_eq!(t.a + t.c * m, horizon);
                prop_assert!(t.a >= 1 && t.a <= m);
                if horizon % m == 0 {
                    prop_assert_eq!(t.a, m);
                }
            }
        }
    }
}
