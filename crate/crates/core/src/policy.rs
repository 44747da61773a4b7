//! The optimal feedback laws and the symmetric-gains policy used on
//! asymmetric chains.
//!
//! Every law has the same shape: on a control stage whose gating endpoint is
//! ON, `u = -V_k x̂` with `x̂` the controller's best estimate of `x_k`;
//! everywhere else the decision is idle and `u = 0`.

use serde::Serialize;

use crate::error::{FogError, Result};
use crate::estimation::{delayed_predictor, FilterState};
use crate::linalg::{self, Mat, Vector};
use crate::model::{
    DelayProfile, LinearSystemModel, Observation, PolicyDecision, ReliabilityChain,
};
use crate::riccati::{backward_recursion, GainSchedule, Regime};

/// How the controller treats the known drift of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMode {
    /// Gains applied to the drifted state as if the drift were noise.
    #[default]
    Uncompensated,
    /// Drift propagated through estimates plus an affine feedforward term.
    AffineCompensated,
}

/// A complete controller: gains plus the information pattern they run under.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerRegime {
    pub observation: Observation,
    pub delay: DelayProfile,
    pub gains: GainSchedule,
    pub drift_mode: DriftMode,
    /// `(R + BᵀKB)⁻¹Bᵀh_k` per stage, subtracted from `-V x̂` when drift is
    /// compensated.
    #[serde(skip)]
    pub feedforward: Option<Vec<Vector>>,
}

impl ControllerRegime {
    /// Optimal gains for a symmetric chain with ON-persistence `p`.
    pub fn optimal(
        model: &LinearSystemModel,
        p: f64,
        delay: DelayProfile,
        observation: Observation,
    ) -> Result<Self> {
        let gains = backward_recursion(model, p, Some(delay), observation)?;
        Ok(ControllerRegime {
            observation,
            delay,
            gains,
            drift_mode: DriftMode::Uncompensated,
            feedforward: None,
        })
    }

    /// Wraps an existing schedule.
    pub fn from_schedule(gains: GainSchedule) -> Self {
        ControllerRegime {
            observation: gains.regime.observation(),
            delay: gains.delay.unwrap_or_default(),
            gains,
            drift_mode: DriftMode::Uncompensated,
            feedforward: None,
        }
    }

    /// The policy that never acts.
    pub fn zero(
        model: &LinearSystemModel,
        delay: DelayProfile,
        observation: Observation,
    ) -> Result<Self> {
        let mut regime = Self::optimal(model, 0.0, delay, observation)?;
        for v in regime.gains.v.iter_mut() {
            v.fill(0.0);
        }
        Ok(regime)
    }

    /// Switches drift handling; the affine mode precomputes the feedforward.
    pub fn with_drift_mode(mut self, model: &LinearSystemModel, mode: DriftMode) -> Result<Self> {
        self.drift_mode = mode;
        self.feedforward = match mode {
            DriftMode::Uncompensated => None,
            DriftMode::AffineCompensated => {
                Some(drift_feedforward(model, &self.gains, self.delay)?)
            }
        };
        Ok(self)
    }

    pub fn regime(&self) -> Regime {
        self.gains.regime
    }

    pub fn compensates_drift(&self) -> bool {
        self.drift_mode == DriftMode::AffineCompensated
    }

    /// Index into the endpoint chain whose state gates the decision at `k`.
    pub fn gate_index(&self, k: usize) -> Option<usize> {
        if !self.delay.control_stage(k) {
            return None;
        }
        Some(k - self.delay.backward)
    }

    /// Decision at stage `k` given the controller's estimate of `x_k`.
    pub fn decide(&self, k: usize, estimate: &Vector, gate_on: bool) -> Result<PolicyDecision> {
        let mut d = gated_law(&self.gains, k, estimate, gate_on, self.delay)?;
        if d.applied() {
            if let Some(ff) = &self.feedforward {
                let u = d.into_control() - &ff[k];
                d = PolicyDecision::apply(u);
            }
        }
        Ok(d)
    }
}

fn check_stage(gains: &GainSchedule, k: usize) -> Result<()> {
    if k >= gains.horizon() {
        return Err(FogError::Stage {
            stage: k,
            why: format!("no control at or after the horizon N = {}", gains.horizon()),
        });
    }
    Ok(())
}

fn gated_law(
    gains: &GainSchedule,
    k: usize,
    estimate: &Vector,
    gate_on: bool,
    delay: DelayProfile,
) -> Result<PolicyDecision> {
    check_stage(gains, k)?;
    let s = gains.v[k].nrows();
    if !gate_on || !delay.control_stage(k) {
        return Ok(PolicyDecision::idle(s));
    }
    if estimate.len() != gains.v[k].ncols() {
        return Err(FogError::Dimension(
            "estimate length differs from state dimension".into(),
        ));
    }
    Ok(PolicyDecision::apply(-(&gains.v[k] * estimate)))
}

fn expect_regime(gains: &GainSchedule, regime: Regime) -> Result<()> {
    if gains.regime != regime {
        return Err(FogError::RegimeMismatch {
            expected: regime.name().into(),
            got: gains.regime.name().into(),
        });
    }
    Ok(())
}

/// `u = -V_k x_k` when the endpoint is ON.
pub fn act_full_perfect(
    gains: &GainSchedule,
    k: usize,
    x: &Vector,
    tau_on: bool,
) -> Result<PolicyDecision> {
    expect_regime(gains, Regime::FullPerfect)?;
    gated_law(gains, k, x, tau_on, DelayProfile::perfect())
}

/// `u = -V_k x̂_{k|k}` when ON; `filter` must sit at stage `k`.
pub fn act_partial_perfect(
    gains: &GainSchedule,
    k: usize,
    filter: &FilterState,
    tau_on: bool,
) -> Result<PolicyDecision> {
    expect_regime(gains, Regime::PartialPerfect)?;
    if filter.stage != k {
        return Err(FogError::Stage {
            stage: k,
            why: format!("filter is at stage {}", filter.stage),
        });
    }
    gated_law(gains, k, &filter.mean, tau_on, DelayProfile::perfect())
}

/// Delayed law with exact but stale state: zero off the grid, otherwise
/// `-V_k E[x_k | x_{k-M}, u_{k-M}]` gated by `τ_{k-M_B}`.
pub fn act_full_delayed(
    gains: &GainSchedule,
    model: &LinearSystemModel,
    k: usize,
    lambda: Option<(&Vector, &Vector)>,
    gate_on: bool,
) -> Result<PolicyDecision> {
    expect_regime(gains, Regime::FullDelayed)?;
    check_stage(gains, k)?;
    let delay = gains.delay.expect("delayed schedule carries its delay");
    if !delay.control_stage(k) || !gate_on {
        return Ok(PolicyDecision::idle(model.control_dim()));
    }
    let (x_past, u_past) = lambda.ok_or_else(|| FogError::Stage {
        stage: k,
        why: "control stage without the delayed information (x_{k-M}, u_{k-M})".into(),
    })?;
    let xhat = delayed_predictor(x_past, u_past, model, k, delay.total(), false)?;
    gated_law(gains, k, &xhat, true, delay)
}

/// Delayed law on the controller-side filter, which must already be
/// predicted forward to stage `k`.
pub fn act_partial_delayed(
    gains: &GainSchedule,
    k: usize,
    filter: &FilterState,
    gate_on: bool,
) -> Result<PolicyDecision> {
    expect_regime(gains, Regime::PartialDelayed)?;
    check_stage(gains, k)?;
    let delay = gains.delay.expect("delayed schedule carries its delay");
    if !delay.control_stage(k) || !gate_on {
        return Ok(PolicyDecision::idle(gains.v[k].nrows()));
    }
    if filter.stage != k {
        return Err(FogError::Stage {
            stage: k,
            why: format!("filter clock at {} not aligned", filter.stage),
        });
    }
    gated_law(gains, k, &filter.mean, true, delay)
}

/// Symmetric-optimal gains at `p' = 1 - q`, to be run on the asymmetric
/// chain. Its cost is bracketed by the two symmetric optima.
pub fn sandwich_policy(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    delay: DelayProfile,
    observation: Observation,
) -> Result<ControllerRegime> {
    chain.validate()?;
    if chain.p <= 1.0 - chain.q + 1e-12 {
        return Err(FogError::SandwichHypotheses {
            p: chain.p,
            q: chain.q,
        });
    }
    ControllerRegime::optimal(model, 1.0 - chain.q, delay, observation)
}

/// Affine correction for a known drift `d_k`.
///
/// With value `xᵀK_kx + 2s_kᵀx + const`, the optimal control is
/// `-V_kx - (R + BᵀK_{k+1}B)⁻¹Bᵀh_k` where `h_k = K_{k+1}d_k + s_{k+1}`;
/// `s` runs backward from `s_N = 0` with `s_k = (A - pBV)ᵀh_k` on control
/// stages and `Aᵀh_k` elsewhere.
pub fn drift_feedforward(
    model: &LinearSystemModel,
    gains: &GainSchedule,
    delay: DelayProfile,
) -> Result<Vec<Vector>> {
    let horizon = model.horizon();
    let n = model.state_dim();
    let mut s_next = Vector::zeros(n);
    let mut out = vec![Vector::zeros(model.control_dim()); horizon];
    for k in (0..horizon).rev() {
        let mut h = s_next.clone();
        if let Some(d) = model.drift(k) {
            h += &gains.k[k + 1] * d;
        }
        let a = model.a(k);
        let b = model.b(k);
        let gram: Mat = model.r(k) + b.transpose() * &gains.k[k + 1] * b;
        let bh = Mat::from_column_slice(b.ncols(), 1, (b.transpose() * &h).as_slice());
        let ff = linalg::spd_solve(&gram, &bh).ok_or_else(|| FogError::LinearSolve {
            stage: k,
            what: "R + BᵀKB in drift feedforward".into(),
        })?;
        out[k] = Vector::from_column_slice(ff.as_slice());
        s_next = if delay.control_stage(k) {
            let closed = a - b * &gains.v[k] * gains.p_used;
            closed.transpose() * h
        } else {
            a.transpose() * h
        };
    }
    Ok(out)
}
