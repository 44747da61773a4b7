//! Backward recursions and closed-form minimum costs for symmetric endpoint
//! chains, with and without round-trip delay.

use serde::Serialize;

use crate::error::{FogError, Result};
use crate::estimation::{
    expected_estimation_penalty, zero_penalty, EstimationPenalty, PenaltyConfig, PenaltyKind,
};
use crate::linalg::{self, serde_rows, Mat, Vector};
use crate::model::{
    CostBreakdown, DelayProfile, LinearSystemModel, Observation, ReliabilityChain, TauInit,
};

/// Which closed form a schedule belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    FullPerfect,
    PartialPerfect,
    FullDelayed,
    PartialDelayed,
}

impl Regime {
    pub fn new(observation: Observation, delayed: bool) -> Self {
        match (observation, delayed) {
            (Observation::Full, false) => Regime::FullPerfect,
            (Observation::Partial, false) => Regime::PartialPerfect,
            (Observation::Full, true) => Regime::FullDelayed,
            (Observation::Partial, true) => Regime::PartialDelayed,
        }
    }

    pub fn observation(&self) -> Observation {
        match self {
            Regime::FullPerfect | Regime::FullDelayed => Observation::Full,
            _ => Observation::Partial,
        }
    }

    pub fn is_delayed(&self) -> bool {
        matches!(self, Regime::FullDelayed | Regime::PartialDelayed)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::FullPerfect => "full-perfect",
            Regime::PartialPerfect => "partial-perfect",
            Regime::FullDelayed => "full-delayed",
            Regime::PartialDelayed => "partial-delayed",
        }
    }
}

/// Output of a backward recursion.
///
/// `k` has `N + 1` entries; `l`, `lambda` and `v` have `N`. `p` (the
/// collateral matrices) is present only for delayed schedules and holds
/// entries `0..=cM`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainSchedule {
    pub regime: Regime,
    pub p_used: f64,
    pub delay: Option<DelayProfile>,
    #[serde(rename = "K", serialize_with = "serde_rows::seq")]
    pub k: Vec<Mat>,
    #[serde(rename = "L", serialize_with = "serde_rows::seq")]
    pub l: Vec<Mat>,
    #[serde(rename = "Lambda", serialize_with = "serde_rows::seq")]
    pub lambda: Vec<Mat>,
    #[serde(rename = "V", serialize_with = "serde_rows::seq")]
    pub v: Vec<Mat>,
    #[serde(rename = "P", serialize_with = "serde_rows::opt_seq")]
    pub p: Option<Vec<Mat>>,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.v.len()
    }

    /// Round-trip delay `M` (0 for perfect match).
    pub fn round_trip(&self) -> usize {
        self.delay.map_or(0, |d| d.total())
    }

    fn expect(&self, regime: Regime) -> Result<()> {
        if self.regime != regime {
            return Err(FogError::RegimeMismatch {
                expected: regime.name().into(),
                got: self.regime.name().into(),
            });
        }
        Ok(())
    }
}

struct StageGains {
    v: Mat,
    l: Mat,
    lambda: Mat,
}

/// `V = (R + BᵀKB)⁻¹BᵀKA`, `L = Q + AᵀKA`, `Λ = AᵀKBV` for one stage.
fn stage_gains(model: &LinearSystemModel, k: usize, k_next: &Mat) -> Result<StageGains> {
    let a = model.a(k);
    let b = model.b(k);
    let kb = k_next * b;
    let gram = model.r(k) + b.transpose() * &kb;
    let rhs = kb.transpose() * a;
    let v = linalg::spd_solve(&gram, &rhs).ok_or_else(|| FogError::LinearSolve {
        stage: k,
        what: "R + BᵀKB is not positive definite".into(),
    })?;
    let l = linalg::symmetrize(&(model.q(k) + a.transpose() * k_next * a));
    let lambda = linalg::symmetrize(&(a.transpose() * &kb * &v));
    Ok(StageGains { v, l, lambda })
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FogError::InvalidChain(format!("p = {p} outside [0, 1]")));
    }
    Ok(())
}

/// Recursion for perfect match: `K_k = L_k - pΛ_k` at every stage.
pub fn backward_recursion_perfect(
    model: &LinearSystemModel,
    p: f64,
    observation: Observation,
) -> Result<GainSchedule> {
    check_probability(p)?;
    let horizon = model.horizon();
    let mut k = vec![Mat::zeros(0, 0); horizon + 1];
    let mut l = Vec::with_capacity(horizon);
    let mut lambda = Vec::with_capacity(horizon);
    let mut v = Vec::with_capacity(horizon);
    k[horizon] = model.q_terminal().clone();
    for stage in (0..horizon).rev() {
        let g = stage_gains(model, stage, &k[stage + 1])?;
        k[stage] = linalg::symmetrize(&(&g.l - &g.lambda * p));
        l.push(g.l);
        lambda.push(g.lambda);
        v.push(g.v);
    }
    l.reverse();
    lambda.reverse();
    v.reverse();
    Ok(GainSchedule {
        regime: Regime::new(observation, false),
        p_used: p,
        delay: None,
        k,
        l,
        lambda,
        v,
        p: None,
    })
}

/// Recursion for round-trip delay `M >= 1`: `K` absorbs `-pΛ` only on the
/// control grid `k ≡ 0 (mod M)`; the collateral matrices `P` run backward
/// from `P_{cM} = Λ_{cM}`.
pub fn backward_recursion_delayed(
    model: &LinearSystemModel,
    p: f64,
    delay: DelayProfile,
    observation: Observation,
) -> Result<GainSchedule> {
    check_probability(p)?;
    let m = delay.total();
    if m == 0 {
        return Err(FogError::Unsupported(
            "delayed recursion needs M >= 1; use the perfect-match recursion".into(),
        ));
    }
    let horizon = model.horizon();
    delay.check_horizon(horizon)?;
    let terms = delay.terms(horizon).expect("M >= 1");
    let last = terms.last_control_stage(m);

    let mut k = vec![Mat::zeros(0, 0); horizon + 1];
    let mut l = Vec::with_capacity(horizon);
    let mut lambda = Vec::with_capacity(horizon);
    let mut v = Vec::with_capacity(horizon);
    k[horizon] = model.q_terminal().clone();
    for stage in (0..horizon).rev() {
        let g = stage_gains(model, stage, &k[stage + 1])?;
        k[stage] = if stage % m == 0 {
            linalg::symmetrize(&(&g.l - &g.lambda * p))
        } else {
            g.l.clone()
        };
        l.push(g.l);
        lambda.push(g.lambda);
        v.push(g.v);
    }
    l.reverse();
    lambda.reverse();
    v.reverse();

    let mut collateral = vec![Mat::zeros(0, 0); last + 1];
    collateral[last] = lambda[last].clone();
    for stage in (0..last).rev() {
        collateral[stage] = if stage % m == 0 {
            lambda[stage].clone()
        } else {
            let a = model.a(stage);
            linalg::symmetrize(&(a.transpose() * &collateral[stage + 1] * a))
        };
    }

    Ok(GainSchedule {
        regime: Regime::new(observation, true),
        p_used: p,
        delay: Some(delay),
        k,
        l,
        lambda,
        v,
        p: Some(collateral),
    })
}

/// Dispatches on the delay: perfect match for `None` or `M = 0`.
pub fn backward_recursion(
    model: &LinearSystemModel,
    p: f64,
    delay: Option<DelayProfile>,
    observation: Observation,
) -> Result<GainSchedule> {
    match delay {
        Some(d) if !d.is_perfect() => backward_recursion_delayed(model, p, d, observation),
        _ => backward_recursion_perfect(model, p, observation),
    }
}

fn disturbance_trace_sum(schedule: &GainSchedule, model: &LinearSystemModel) -> f64 {
    (0..model.horizon())
        .map(|k| linalg::trace_product(&schedule.k[k + 1], model.w(k)))
        .sum()
}

fn collateral_trace_sum(schedule: &GainSchedule, model: &LinearSystemModel) -> f64 {
    let Some(p_mats) = &schedule.p else {
        return 0.0;
    };
    let last = p_mats.len() - 1;
    let sum: f64 = (0..last)
        .map(|k| linalg::trace_product(&p_mats[k + 1], model.w(k)))
        .sum();
    schedule.p_used * sum
}

fn check_horizon(schedule: &GainSchedule, model: &LinearSystemModel) -> Result<()> {
    if schedule.horizon() != model.horizon() || x_dim_mismatch(schedule, model) {
        return Err(FogError::Dimension(
            "schedule and model disagree on horizon or state dimension".into(),
        ));
    }
    Ok(())
}

fn x_dim_mismatch(schedule: &GainSchedule, model: &LinearSystemModel) -> bool {
    schedule.k[0].nrows() != model.state_dim()
}

fn check_x0(model: &LinearSystemModel, x0: &Vector) -> Result<()> {
    if x0.len() != model.state_dim() {
        return Err(FogError::Dimension(format!(
            "x0 has {} entries, expected {}",
            x0.len(),
            model.state_dim()
        )));
    }
    Ok(())
}

/// Minimum cost with exact state and no delay:
/// `x0ᵀ(L_0 - Λ_0·P[τ0 = ON])x0 + Σ tr(K_{k+1} W_k)`.
pub fn min_cost_full_perfect(
    schedule: &GainSchedule,
    model: &LinearSystemModel,
    x0: &Vector,
    tau0: TauInit,
) -> Result<CostBreakdown> {
    schedule.expect(Regime::FullPerfect)?;
    perfect_breakdown(schedule, model, x0, tau0, 0.0)
}

fn perfect_breakdown(
    schedule: &GainSchedule,
    model: &LinearSystemModel,
    x0: &Vector,
    tau0: TauInit,
    penalty: f64,
) -> Result<CostBreakdown> {
    check_horizon(schedule, model)?;
    check_x0(model, x0)?;
    let initial = linalg::quad_form(&schedule.l[0], x0)
        - tau0.on_probability() * linalg::quad_form(&schedule.lambda[0], x0);
    Ok(CostBreakdown::new(
        initial,
        disturbance_trace_sum(schedule, model),
        0.0,
        penalty,
    ))
}

fn delayed_breakdown(
    schedule: &GainSchedule,
    model: &LinearSystemModel,
    x0: &Vector,
    penalty: f64,
) -> Result<CostBreakdown> {
    check_horizon(schedule, model)?;
    check_x0(model, x0)?;
    Ok(CostBreakdown::new(
        linalg::quad_form(&schedule.l[0], x0),
        disturbance_trace_sum(schedule, model),
        collateral_trace_sum(schedule, model),
        penalty,
    ))
}

/// Minimum cost with exact but delayed state:
/// `x0ᵀL_0x0 + Σ tr(K_{k+1}W_k) + p Σ_{k<cM} tr(P_{k+1}W_k)`.
/// Does not depend on the initial endpoint state.
pub fn min_cost_full_delayed(
    schedule: &GainSchedule,
    model: &LinearSystemModel,
    x0: &Vector,
) -> Result<CostBreakdown> {
    schedule.expect(Regime::FullDelayed)?;
    delayed_breakdown(schedule, model, x0, 0.0)
}

fn check_penalty(
    penalty: &EstimationPenalty,
    kind: PenaltyKind,
    expected_len: usize,
) -> Result<()> {
    if penalty.kind != kind || penalty.per_stage.len() != expected_len {
        return Err(FogError::Dimension(format!(
            "penalty horizon mismatch: expected {expected_len} {kind:?} terms, got {} {:?}",
            penalty.per_stage.len(),
            penalty.kind
        )));
    }
    Ok(())
}

/// Perfect-match minimum cost with noisy observations: the full-observation
/// value plus the expected estimation penalty.
pub fn min_cost_partial_perfect(
    schedule: &GainSchedule,
    model: &LinearSystemModel,
    x0: &Vector,
    tau0: TauInit,
    penalty: &EstimationPenalty,
) -> Result<CostBreakdown> {
    schedule.expect(Regime::PartialPerfect)?;
    check_penalty(penalty, PenaltyKind::Perfect, model.horizon())?;
    perfect_breakdown(schedule, model, x0, tau0, penalty.total)
}

/// Delayed minimum cost with noisy observations: the full-delayed value plus
/// the estimation penalty over the control grid.
pub fn min_cost_partial_delayed(
    schedule: &GainSchedule,
    model: &LinearSystemModel,
    x0: &Vector,
    penalty: &EstimationPenalty,
) -> Result<CostBreakdown> {
    schedule.expect(Regime::PartialDelayed)?;
    let delay = schedule.delay.expect("delayed schedule carries its delay");
    let terms = delay.terms(model.horizon()).expect("M >= 1");
    check_penalty(penalty, PenaltyKind::Delayed, terms.c)?;
    delayed_breakdown(schedule, model, x0, penalty.total)
}

/// Closed-form minimum cost for whichever regime `schedule` belongs to.
///
/// `chain` must be symmetric with `p` equal to the schedule's `p_used`; its
/// initial state enters the perfect-match forms and the estimation penalty.
pub fn min_cost(
    schedule: &GainSchedule,
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    x0: &Vector,
    penalty: &PenaltyConfig,
) -> Result<CostBreakdown> {
    if !chain.is_symmetric() {
        return Err(FogError::AsymmetricChain {
            p: chain.p,
            q: chain.q,
        });
    }
    if (chain.p - schedule.p_used).abs() > 1e-12 {
        return Err(FogError::InvalidChain(format!(
            "schedule built for p = {}, chain has p = {}",
            schedule.p_used, chain.p
        )));
    }
    let partial_penalty = || -> Result<EstimationPenalty> {
        if model.is_exactly_observed() {
            zero_penalty(model, schedule)
        } else {
            expected_estimation_penalty(model, chain, schedule, penalty)
        }
    };
    match schedule.regime {
        Regime::FullPerfect => min_cost_full_perfect(schedule, model, x0, chain.tau0),
        Regime::FullDelayed => min_cost_full_delayed(schedule, model, x0),
        Regime::PartialPerfect => {
            min_cost_partial_perfect(schedule, model, x0, chain.tau0, &partial_penalty()?)
        }
        Regime::PartialDelayed => {
            min_cost_partial_delayed(schedule, model, x0, &partial_penalty()?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemSpec;

    fn s(x: f64) -> Mat {
        Mat::from_element(1, 1, x)
    }

    fn scalar_model(horizon: usize, a: f64, w: f64) -> LinearSystemModel {
        LinearSystemModel::new(SystemSpec::time_invariant(
            horizon,
            s(a),
            s(1.0),
            s(1.0),
            s(1.0),
            s(1.0),
            s(w),
        ))
        .unwrap()
    }

    #[test]
    fn scalar_perfect_example() {
        let model = scalar_model(1, 1.0, 1.0);
        let g = backward_recursion_perfect(&model, 1.0, Observation::Full).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-14;
        assert!(close(g.v[0][(0, 0)], 0.5));
        assert!(close(g.l[0][(0, 0)], 2.0));
        assert!(close(g.lambda[0][(0, 0)], 0.5));
        assert!(close(g.k[0][(0, 0)], 1.5));
        assert_eq!(g.k[1], *model.q_terminal());

        let x0 = Vector::from_element(1, 1.0);
        let cost = min_cost_full_perfect(&g, &model, &x0, TauInit::ON).unwrap();
        assert!((cost.total - 2.5).abs() < 1e-14);
        let off = min_cost_full_perfect(&g, &model, &x0, TauInit::OFF).unwrap();
        assert!((off.total - cost.total - 0.5).abs() < 1e-14);
    }

    #[test]
    fn p_zero_never_subtracts() {
        let model = scalar_model(1, 1.0, 1.0);
        let g = backward_recursion_perfect(&model, 0.0, Observation::Full).unwrap();
        assert_eq!(g.k[0][(0, 0)], 2.0);
    }

    #[test]
    fn uncontrollable_plant_has_no_lambda() {
        let mut spec =
            SystemSpec::time_invariant(4, s(1.1), s(0.0), s(1.0), s(2.0), s(1.0), s(1.0));
        spec.b = vec![s(0.0); 4];
        let model = LinearSystemModel::new(spec).unwrap();
        for p in [0.0, 0.4, 1.0] {
            let g = backward_recursion_perfect(&model, p, Observation::Full).unwrap();
            for k in 0..4 {
                assert_eq!(g.lambda[k][(0, 0)], 0.0);
                assert_eq!(g.k[k], g.l[k]);
            }
        }
    }

    #[test]
    fn zero_state_zero_noise_costs_nothing() {
        let model = scalar_model(3, 1.3, 0.0);
        let x0 = Vector::zeros(1);
        let g = backward_recursion_perfect(&model, 0.7, Observation::Full).unwrap();
        assert_eq!(
            min_cost_full_perfect(&g, &model, &x0, TauInit::ON)
                .unwrap()
                .total,
            0.0
        );
        let g = backward_recursion_delayed(&model, 0.7, DelayProfile::new(1, 1), Observation::Full)
            .unwrap();
        assert_eq!(min_cost_full_delayed(&g, &model, &x0).unwrap().total, 0.0);
    }

    #[test]
    fn unit_delay_matches_perfect_recursion() {
        let model = scalar_model(5, 1.2, 0.5);
        let perfect = backward_recursion_perfect(&model, 0.6, Observation::Full).unwrap();
        let delayed =
            backward_recursion_delayed(&model, 0.6, DelayProfile::new(0, 1), Observation::Full)
                .unwrap();
        assert_eq!(perfect.k, delayed.k);
        let p = delayed.p.as_ref().unwrap();
        assert_eq!(p.len(), 5);
        for (k, pk) in p.iter().enumerate() {
            assert_eq!(*pk, delayed.lambda[k]);
        }
    }

    #[test]
    fn horizon_equal_to_delay_is_open_loop() {
        // N = 2, M = 2: a = 2, c = 0, no control ever arrives.
        let model = scalar_model(2, 1.0, 1.0);
        let g = backward_recursion_delayed(&model, 0.8, DelayProfile::new(1, 1), Observation::Full)
            .unwrap();
        assert_eq!(g.k[1], g.l[1]);
        let open = backward_recursion_perfect(&model, 0.0, Observation::Full).unwrap();
        let x0 = Vector::from_element(1, 1.0);
        let closed = min_cost_full_delayed(&g, &model, &x0).unwrap();
        let open_cost = min_cost_full_perfect(&open, &model, &x0, TauInit::OFF).unwrap();
        assert_eq!(closed.collateral_trace_sum, 0.0);
        assert!((closed.total - open_cost.total).abs() < 1e-12);
        // Hand evaluation: L_1 = 2, L_0 = 3, cost = 3 + tr(K_2) + tr(K_1) = 3 + 1 + 2.
        assert!((closed.total - 6.0).abs() < 1e-12);
    }

    #[test]
    fn three_stage_two_delay_example() {
        // N = 3, M = 2: a = 1, c = 1, cM = 2.
        let model = scalar_model(3, 1.0, 1.0);
        let p = 0.7;
        let g = backward_recursion_delayed(&model, p, DelayProfile::new(1, 1), Observation::Full)
            .unwrap();
        // Stage 2: K_3 = 1, V_2 = 0.5, L_2 = 2, Λ_2 = 0.5, K_2 = 2 - 0.5p.
        assert!((g.k[2][(0, 0)] - (2.0 - 0.5 * p)).abs() < 1e-15);
        // Stage 1 is off-grid: K_1 = L_1 = 1 + K_2.
        assert_eq!(g.k[1], g.l[1]);
        assert!((g.l[1][(0, 0)] - (3.0 - 0.5 * p)).abs() < 1e-15);
        let pm = g.p.as_ref().unwrap();
        assert_eq!(pm.len(), 3);
        assert_eq!(pm[2], g.lambda[2]);
        assert_eq!(pm[1], pm[2]); // A = 1
        assert_eq!(pm[0], g.lambda[0]);
        let cost = min_cost_full_delayed(&g, &model, &Vector::from_element(1, 1.0)).unwrap();
        // Collateral: p (tr P_1 + tr P_2) = p (0.5 + 0.5).
        assert!((cost.collateral_trace_sum - p).abs() < 1e-15);
    }

    #[test]
    fn delayed_requires_horizon_at_least_delay() {
        let model = scalar_model(2, 1.0, 1.0);
        let err =
            backward_recursion_delayed(&model, 0.5, DelayProfile::new(2, 1), Observation::Full)
                .unwrap_err();
        assert!(err
            .to_string()
            .contains("horizon shorter than round-trip delay"));
    }

    #[test]
    fn regime_mismatch_is_an_error() {
        let model = scalar_model(2, 1.0, 1.0);
        let g = backward_recursion_perfect(&model, 0.5, Observation::Full).unwrap();
        assert!(matches!(
            min_cost_full_delayed(&g, &model, &Vector::zeros(1)),
            Err(FogError::RegimeMismatch { .. })
        ));
    }

    #[test]
    fn p_zero_delayed_has_no_collateral() {
        let model = scalar_model(6, 1.1, 0.3);
        let g = backward_recursion_delayed(&model, 0.0, DelayProfile::new(1, 1), Observation::Full)
            .unwrap();
        let x0 = Vector::from_element(1, 0.5);
        let c = min_cost_full_delayed(&g, &model, &x0).unwrap();
        assert_eq!(c.collateral_trace_sum, 0.0);
        let open = backward_recursion_perfect(&model, 0.0, Observation::Full).unwrap();
        let o = min_cost_full_perfect(&open, &model, &x0, TauInit::OFF).unwrap();
        assert!((c.total - o.total).abs() < 1e-12);
    }
}
