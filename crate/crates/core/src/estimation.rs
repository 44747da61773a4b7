//! Conditional-mean machinery: an intermittent-observation Kalman filter, the
//! delay-compensating predictor, and the expected estimation penalty that the
//! noisy-observation closed forms add on top of the exact-state cost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FogError, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{LinearSystemModel, ReliabilityChain};
use crate::riccati::{GainSchedule, Regime};
use crate::rng::{self, Stream};

/// Mean and error covariance of the state estimate at `stage`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub mean: Vector,
    pub cov: Mat,
    pub stage: usize,
    pub last_update_stage: Option<usize>,
}

impl FilterState {
    /// Filter started from an exactly known state.
    pub fn known(x0: &Vector) -> Self {
        let n = x0.len();
        FilterState {
            mean: x0.clone(),
            cov: Mat::zeros(n, n),
            stage: 0,
            last_update_stage: None,
        }
    }

    pub fn new(mean: Vector, cov: Mat, stage: usize) -> Self {
        FilterState {
            mean,
            cov,
            stage,
            last_update_stage: None,
        }
    }
}

/// Time update: `x̂ ← A x̂ + B u + drift`, `Σ ← AΣAᵀ + W`.
pub fn kalman_predict(
    state: &FilterState,
    model: &LinearSystemModel,
    applied_control: &Vector,
    known_drift: Option<&Vector>,
) -> Result<FilterState> {
    let k = state.stage;
    if k >= model.horizon() {
        return Err(FogError::Stage {
            stage: k,
            why: "cannot predict past the horizon".into(),
        });
    }
    if applied_control.len() != model.control_dim() || state.mean.len() != model.state_dim() {
        return Err(FogError::Dimension("filter predict".into()));
    }
    let a = model.a(k);
    let mut mean = a * &state.mean + model.b(k) * applied_control;
    if let Some(d) = known_drift {
        mean += d;
    }
    Ok(FilterState {
        mean,
        cov: predict_covariance(&state.cov, a, model.w(k)),
        stage: k + 1,
        last_update_stage: state.last_update_stage,
    })
}

pub(crate) fn predict_covariance(cov: &Mat, a: &Mat, w: &Mat) -> Mat {
    linalg::symmetrize(&(a * cov * a.transpose() + w))
}

/// `ΣCᵀ(CΣCᵀ + V)⁻¹`; a singular innovation covariance falls back to the
/// pseudo-inverse, which is still the Gaussian conditional mean.
fn kalman_gain(cov: &Mat, c: &Mat, v: &Mat) -> Mat {
    let pct = cov * c.transpose();
    let innovation = linalg::symmetrize(&(c * &pct + v));
    if linalg::is_zero(&innovation) {
        return Mat::zeros(cov.nrows(), c.nrows());
    }
    match linalg::spd_solve(&innovation, &pct.transpose()) {
        Some(kt) => kt.transpose(),
        None => pct * linalg::psd_pinv(&innovation),
    }
}

/// Joseph form `(I - KC)Σ(I - KC)ᵀ + KVKᵀ`.
fn joseph(cov: &Mat, gain: &Mat, c: &Mat, v: &Mat) -> Mat {
    let n = cov.nrows();
    let i_kc = Mat::identity(n, n) - gain * c;
    linalg::symmetrize(&(&i_kc * cov * i_kc.transpose() + gain * v * gain.transpose()))
}

pub(crate) fn update_covariance(cov: &Mat, c: &Mat, v: &Mat) -> Mat {
    let gain = kalman_gain(cov, c, v);
    joseph(cov, &gain, c, v)
}

/// Measurement update with `z = C_k x_k + v_k`. Only called on ON stages.
pub fn kalman_update(
    state: &FilterState,
    model: &LinearSystemModel,
    z: &Vector,
) -> Result<FilterState> {
    let k = state.stage;
    if k >= model.horizon() {
        return Err(FogError::Stage {
            stage: k,
            why: "no measurement model past the last control stage".into(),
        });
    }
    if z.len() != model.obs_dim() {
        return Err(FogError::Dimension(format!(
            "measurement has {} entries, expected {}",
            z.len(),
            model.obs_dim()
        )));
    }
    let (c, v) = (model.c(k), model.v_noise(k));
    let gain = kalman_gain(&state.cov, c, v);
    let innovation = z - c * &state.mean;
    Ok(FilterState {
        mean: &state.mean + &gain * innovation,
        cov: joseph(&state.cov, &gain, c, v),
        stage: k,
        last_update_stage: Some(k),
    })
}

/// Conditional mean of `x_k` given `(x_{k-M}, u_{k-M})`, with no control
/// arriving strictly between the two grid stages.
pub fn delayed_predictor(
    x_past: &Vector,
    u_past: &Vector,
    model: &LinearSystemModel,
    k: usize,
    m: usize,
    use_drift: bool,
) -> Result<Vector> {
    if m == 0 || k < m {
        return Err(FogError::Stage {
            stage: k,
            why: format!("predictor needs k >= M >= 1 (M = {m})"),
        });
    }
    if k > model.horizon() {
        return Err(FogError::Stage {
            stage: k,
            why: "beyond horizon".into(),
        });
    }
    let start = k - m;
    let mut x = model.a(start) * x_past + model.b(start) * u_past;
    add_drift(&mut x, model, start, use_drift);
    for j in start + 1..k {
        x = model.a(j) * x;
        add_drift(&mut x, model, j, use_drift);
    }
    Ok(x)
}

fn add_drift(x: &mut Vector, model: &LinearSystemModel, k: usize, use_drift: bool) {
    if use_drift {
        if let Some(d) = model.drift(k) {
            *x += d;
        }
    }
}

/// How a penalty was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMethod {
    ExactEnumeration,
    MonteCarlo,
}

/// Index convention of `per_stage`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    /// Entry `k` is `E[1{τ_k = ON} ε_kᵀΛ_kε_k]`, `k = 0..N-1`.
    Perfect,
    /// Entry `j` is the term of the control arriving at `(j+1)M`, weighted by
    /// `A_{jM}ᵀ P_{jM+1} A_{jM}` on the filtered error at `jM`; `j = 0..c-1`.
    Delayed,
}

/// Expected cost of acting on estimates instead of states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationPenalty {
    pub per_stage: Vec<f64>,
    pub total: f64,
    pub method: PenaltyMethod,
    pub kind: PenaltyKind,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub method: PenaltyMethod,
    pub replications: usize,
    pub seed: u64,
}

impl PenaltyConfig {
    pub fn exact() -> Self {
        PenaltyConfig {
            method: PenaltyMethod::ExactEnumeration,
            replications: 0,
            seed: 0,
        }
    }

    pub fn monte_carlo(replications: usize, seed: u64) -> Self {
        PenaltyConfig {
            method: PenaltyMethod::MonteCarlo,
            replications,
            seed,
        }
    }
}

/// Largest horizon accepted by exact enumeration.
pub const EXACT_PENALTY_MAX_HORIZON: usize = 20;

/// Expected estimation penalty of a noisy-observation schedule.
///
/// Error covariances depend only on the ON/OFF path, so every term is an
/// expectation of `tr(weight · Σ(path))` over the endpoint chain. Exact
/// enumeration walks all paths; Monte Carlo samples them.
pub fn expected_estimation_penalty(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    schedule: &GainSchedule,
    config: &PenaltyConfig,
) -> Result<EstimationPenalty> {
    let layout = PenaltyLayout::new(model, schedule)?;
    match config.method {
        PenaltyMethod::ExactEnumeration => {
            if model.horizon() > EXACT_PENALTY_MAX_HORIZON {
                return Err(FogError::HorizonTooLarge {
                    what: "penalty enumeration",
                    horizon: model.horizon(),
                    limit: EXACT_PENALTY_MAX_HORIZON,
                });
            }
            let mut acc = vec![0.0; layout.len()];
            if !acc.is_empty() {
                let n = model.state_dim();
                layout.enumerate(model, chain, 0, None, 1.0, Mat::zeros(n, n), &mut acc);
            }
            let total = acc.iter().sum();
            Ok(EstimationPenalty {
                per_stage: acc,
                total,
                method: PenaltyMethod::ExactEnumeration,
                kind: layout.kind(),
                standard_error: 0.0,
            })
        }
        PenaltyMethod::MonteCarlo => {
            if config.replications < 2 {
                return Err(FogError::Config(
                    "monte-carlo penalty needs at least 2 replications".into(),
                ));
            }
            let samples: Vec<Vec<f64>> = (0..config.replications as u64)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = rng::replication_rng(config.seed, rep, Stream::Chain);
                    let path = rng::sample_tau_path(chain, model.horizon(), &mut rng);
                    layout.along_path(model, &path)
                })
                .collect();
            let reps = samples.len() as f64;
            let mut per_stage = vec![0.0; layout.len()];
            for s in &samples {
                for (acc, x) in per_stage.iter_mut().zip(s) {
                    *acc += x;
                }
            }
            per_stage.iter_mut().for_each(|x| *x /= reps);
            let totals: Vec<f64> = samples.iter().map(|s| s.iter().sum()).collect();
            let total = totals.iter().sum::<f64>() / reps;
            let var = totals.iter().map(|t| (t - total).powi(2)).sum::<f64>() / (reps - 1.0);
            Ok(EstimationPenalty {
                per_stage,
                total,
                method: PenaltyMethod::MonteCarlo,
                kind: layout.kind(),
                standard_error: (var / reps).sqrt(),
            })
        }
    }
}

/// Zero penalty of the right shape, for exactly observed plants.
pub fn zero_penalty(
    model: &LinearSystemModel,
    schedule: &GainSchedule,
) -> Result<EstimationPenalty> {
    let layout = PenaltyLayout::new(model, schedule)?;
    Ok(EstimationPenalty {
        per_stage: vec![0.0; layout.len()],
        total: 0.0,
        method: PenaltyMethod::ExactEnumeration,
        kind: layout.kind(),
        standard_error: 0.0,
    })
}

/// Gate structure and per-term weights of a penalty.
enum PenaltyLayout {
    /// Gate `k` is `τ_k`; weight `Λ_k`; update at stage `k`.
    Perfect { weights: Vec<Mat> },
    /// Gate `j` is `τ_{(j+1)M - M_B}`; update at stage `jM`.
    Delayed {
        m: usize,
        forward: usize,
        backward: usize,
        weights: Vec<Mat>,
    },
}

impl PenaltyLayout {
    fn new(model: &LinearSystemModel, schedule: &GainSchedule) -> Result<Self> {
        if schedule.horizon() != model.horizon() {
            return Err(FogError::Dimension(
                "schedule horizon differs from model".into(),
            ));
        }
        match schedule.regime {
            Regime::PartialPerfect => Ok(PenaltyLayout::Perfect {
                weights: schedule.lambda.clone(),
            }),
            Regime::PartialDelayed => {
                let delay = schedule.delay.expect("delayed schedule carries its delay");
                let m = delay.total();
                let terms = delay.terms(model.horizon()).expect("M >= 1");
                let p_mats = schedule.p.as_ref().expect("delayed schedule carries P");
                let weights = (0..terms.c)
                    .map(|j| {
                        let stage = j * m;
                        let a = model.a(stage);
                        linalg::symmetrize(&(a.transpose() * &p_mats[stage + 1] * a))
                    })
                    .collect();
                Ok(PenaltyLayout::Delayed {
                    m,
                    forward: delay.forward,
                    backward: delay.backward,
                    weights,
                })
            }
            other => Err(FogError::RegimeMismatch {
                expected: "a partial-observation regime".into(),
                got: other.name().into(),
            }),
        }
    }

    fn len(&self) -> usize {
        match self {
            PenaltyLayout::Perfect { weights } | PenaltyLayout::Delayed { weights, .. } => {
                weights.len()
            }
        }
    }

    fn kind(&self) -> PenaltyKind {
        match self {
            PenaltyLayout::Perfect { .. } => PenaltyKind::Perfect,
            PenaltyLayout::Delayed { .. } => PenaltyKind::Delayed,
        }
    }

    fn weight(&self, j: usize) -> &Mat {
        match self {
            PenaltyLayout::Perfect { weights } | PenaltyLayout::Delayed { weights, .. } => {
                &weights[j]
            }
        }
    }

    /// Stage whose measurement gate `j` admits.
    fn update_stage(&self, j: usize) -> usize {
        match self {
            PenaltyLayout::Perfect { .. } => j,
            PenaltyLayout::Delayed { m, .. } => j * m,
        }
    }

    /// P[gate j = ON | gate j-1 = prev].
    fn gate_probability(
        &self,
        chain: &ReliabilityChain,
        j: usize,
        prev: Option<bool>,
        on: bool,
    ) -> f64 {
        let pi0 = chain.tau0.on_probability();
        let on_prob = match (self, prev) {
            (PenaltyLayout::Perfect { .. }, None) => pi0,
            (PenaltyLayout::Perfect { .. }, Some(prev)) => chain.next_on_probability(prev),
            (PenaltyLayout::Delayed { forward, .. }, None) => {
                chain.on_probability_after(pi0, *forward)
            }
            (PenaltyLayout::Delayed { m, .. }, Some(prev)) => {
                chain.transition_probability(prev, true, *m)
            }
        };
        debug_assert!(j > 0 || prev.is_none());
        if on {
            on_prob
        } else {
            1.0 - on_prob
        }
    }

    /// Propagates the posterior at the update stage of gate `j` to the prior
    /// at the update stage of gate `j + 1`.
    fn propagate(&self, model: &LinearSystemModel, j: usize, cov: &Mat) -> Mat {
        let from = self.update_stage(j);
        let to = self.update_stage(j + 1);
        let mut out = cov.clone();
        for k in from..to {
            out = predict_covariance(&out, model.a(k), model.w(k));
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn enumerate(
        &self,
        model: &LinearSystemModel,
        chain: &ReliabilityChain,
        j: usize,
        prev: Option<bool>,
        prob: f64,
        prior: Mat,
        acc: &mut [f64],
    ) {
        for on in [false, true] {
            let pr = prob * self.gate_probability(chain, j, prev, on);
            if pr == 0.0 {
                continue;
            }
            let stage = self.update_stage(j);
            let post = if on {
                let post = update_covariance(&prior, model.c(stage), model.v_noise(stage));
                acc[j] += pr * linalg::trace_product(self.weight(j), &post);
                post
            } else {
                prior.clone()
            };
            if j + 1 < acc.len() {
                let next = self.propagate(model, j, &post);
                self.enumerate(model, chain, j + 1, Some(on), pr, next, acc);
            }
        }
    }

    /// Per-term contributions along one sampled chain path.
    fn along_path(&self, model: &LinearSystemModel, tau: &[bool]) -> Vec<f64> {
        let n = model.state_dim();
        let mut out = vec![0.0; self.len()];
        let mut prior = Mat::zeros(n, n);
        for j in 0..self.len() {
            let gate = match self {
                PenaltyLayout::Perfect { .. } => tau[j],
                PenaltyLayout::Delayed { m, backward, .. } => tau[(j + 1) * m - backward],
            };
            let stage = self.update_stage(j);
            let post = if gate {
                let post = update_covariance(&prior, model.c(stage), model.v_noise(stage));
                out[j] = linalg::trace_product(self.weight(j), &post);
                post
            } else {
                prior
            };
            if j + 1 < self.len() {
                prior = self.propagate(model, j, &post);
            } else {
                break;
            }
        }
        out
    }
}
