//! Self-checks of a gain schedule against independent computations.
//!
//! Each check is recorded with its numbers so a failing report says what
//! disagreed. [`verify_schedule`] takes the schedule as input, which lets a
//! caller check gains produced elsewhere (or deliberately corrupted ones).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::estimation::PenaltyConfig;
use crate::linalg::{self, Mat, Vector};
use crate::model::{DelayProfile, LinearSystemModel, Observation, ReliabilityChain, TauInit};
use crate::oracle::{self, BoundCheckConfig, BoundReport, ORACLE_MAX_HORIZON};
use crate::policy::ControllerRegime;
use crate::riccati::{backward_recursion, min_cost, GainSchedule};
use crate::sampling::{self, ModelShape};
use crate::simulator::{self, SimulationConfig};

/// Relative tolerance of exact comparisons.
pub const EXACT_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub computed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl CheckResult {
    fn flag(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            passed,
            detail,
            computed: None,
            reference: None,
            tolerance: None,
        }
    }

    fn compare(name: &str, computed: f64, reference: f64, tolerance: f64, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            passed: (computed - reference).abs() <= tolerance,
            detail,
            computed: Some(computed),
            reference: Some(reference),
            tolerance: Some(tolerance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub regime: String,
    pub checks: Vec<CheckResult>,
    pub bounds: Vec<BoundReport>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Random asymmetric instances in the bracket campaign (0 disables it).
    pub campaign_size: usize,
    pub seed: u64,
    /// Monte Carlo replications where no exact reference exists.
    pub replications: usize,
    pub penalty: PenaltyConfig,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            campaign_size: 25,
            seed: 0x5eed,
            replications: 20_000,
            penalty: PenaltyConfig::exact(),
        }
    }
}

/// Builds the optimal schedule for `chain.p` and checks it.
pub fn verify(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    delay: DelayProfile,
    observation: Observation,
    x0: &Vector,
    options: &VerifyOptions,
) -> Result<VerifyReport> {
    let schedule = backward_recursion(model, chain.p, Some(delay), observation)?;
    verify_schedule(model, chain, &schedule, x0, options)
}

pub fn verify_schedule(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    schedule: &GainSchedule,
    x0: &Vector,
    options: &VerifyOptions,
) -> Result<VerifyReport> {
    chain.validate()?;
    let delay = schedule.delay.unwrap_or_default();
    let observation = schedule.regime.observation();
    let mut checks = vec![structure_check(schedule), recursion_check(model, schedule)?];
    let mut notes = Vec::new();
    let mut bounds = Vec::new();

    // The closed form gates the first delayed control with the endpoint
    // state at stage 0 only through a fresh transition when M_F >= 1; with
    // M_F = 0 it is exact for τ0 drawn from the stationary law.
    let mut tau0 = chain.tau0;
    if !delay.is_perfect()
        && delay.forward == 0
        && tau0
            != (TauInit::Distribution {
                on_probability: schedule.p_used,
            })
    {
        tau0 = TauInit::Distribution {
            on_probability: schedule.p_used,
        };
        notes.push(format!(
            "forward delay is 0: closed form checked with tau0 ~ Bernoulli({})",
            schedule.p_used
        ));
    }
    let sym = ReliabilityChain::symmetric(schedule.p_used, tau0)?;

    if model.has_drift() {
        notes.push("model has drift: closed-form cost check skipped".into());
    } else {
        let closed = min_cost(schedule, model, &sym, x0, &options.penalty)?.total;
        if observation == Observation::Full && model.horizon() <= ORACLE_MAX_HORIZON {
            let reference = oracle::brute_force_min_cost(model, &sym, Some(delay), x0, tau0)?;
            checks.push(CheckResult::compare(
                "closed-form-vs-oracle",
                closed,
                reference,
                EXACT_RTOL * reference.abs().max(1.0),
                format!("p = {}, M = {}", schedule.p_used, delay.total()),
            ));
        } else {
            let regime = ControllerRegime::from_schedule(schedule.clone());
            let sim = simulator::run(
                model,
                &sym,
                &regime,
                x0,
                &SimulationConfig::new(options.replications, options.seed),
            )?;
            checks.push(CheckResult::compare(
                "closed-form-vs-monte-carlo",
                sim.mean_cost,
                closed,
                3.0 * sim.std_error,
                format!("{} replications, 3 standard errors", options.replications),
            ));
        }
    }

    if !chain.is_symmetric() {
        let cfg = BoundCheckConfig {
            replications: options.replications,
            seed: options.seed,
            penalty: options.penalty,
        };
        match oracle::bound_check(model, chain, delay, observation, x0, &cfg) {
            Ok(report) => {
                checks.push(CheckResult::flag(
                    "configured-sandwich",
                    report.holds,
                    format!(
                        "{} <= {} <= {} (tolerance {})",
                        report.lower, report.policy_value, report.upper, report.tolerance
                    ),
                ));
                bounds.push(report);
            }
            Err(e) => notes.push(format!("configured chain not bracketed: {e}")),
        }
    }

    if options.campaign_size > 0 {
        let (check, mut reports) = sandwich_campaign(options.campaign_size, options.seed)?;
        checks.push(check);
        bounds.append(&mut reports);
    }

    Ok(VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        regime: schedule.regime.name().into(),
        checks,
        bounds,
        notes,
    })
}

fn psd_violation(m: &Mat) -> Option<f64> {
    let scale = m.amax().max(1.0);
    let asym = linalg::asymmetry(m);
    if asym > 1e-9 * scale {
        return Some(asym);
    }
    let min = linalg::min_eigenvalue(m);
    (min < -linalg::PSD_TOL * scale).then_some(min)
}

/// Symmetric PSD matrices throughout; `K = L` off the control grid.
fn structure_check(s: &GainSchedule) -> CheckResult {
    let mut problems = Vec::new();
    let families: [(&str, &[Mat]); 4] = [
        ("K", &s.k),
        ("L", &s.l),
        ("Lambda", &s.lambda),
        ("P", s.p.as_deref().unwrap_or(&[])),
    ];
    for (name, seq) in families {
        for (k, m) in seq.iter().enumerate() {
            if let Some(v) = psd_violation(m) {
                problems.push(format!("{name}_{k} not symmetric PSD ({v:.3e})"));
            }
        }
    }
    if let Some(d) = s.delay.filter(|d| !d.is_perfect()) {
        for k in 0..s.horizon() {
            if !d.on_grid(k) && s.k[k] != s.l[k] {
                problems.push(format!("K_{k} != L_{k} off the grid"));
            }
        }
    }
    let passed = problems.is_empty();
    let detail = if passed {
        "all symmetric PSD".into()
    } else {
        problems.truncate(8);
        problems.join("; ")
    };
    CheckResult::flag("structure", passed, detail)
}

/// Entrywise agreement with a fresh recursion.
fn recursion_check(model: &LinearSystemModel, s: &GainSchedule) -> Result<CheckResult> {
    let fresh = backward_recursion(model, s.p_used, s.delay, s.regime.observation())?;
    let mut worst: (f64, String) = (0.0, String::new());
    let mut shape_ok = true;
    let pairs: [(&str, &[Mat], &[Mat]); 5] = [
        ("K", &s.k, &fresh.k),
        ("L", &s.l, &fresh.l),
        ("Lambda", &s.lambda, &fresh.lambda),
        ("V", &s.v, &fresh.v),
        (
            "P",
            s.p.as_deref().unwrap_or(&[]),
            fresh.p.as_deref().unwrap_or(&[]),
        ),
    ];
    for (name, got, want) in pairs {
        if got.len() != want.len() {
            shape_ok = false;
            continue;
        }
        for (k, (g, w)) in got.iter().zip(want).enumerate() {
            if g.shape() != w.shape() {
                shape_ok = false;
                continue;
            }
            let err = (g - w).amax() / w.amax().max(1.0);
            if err > worst.0 {
                worst = (err, format!("{name}_{k}"));
            }
        }
    }
    let passed = shape_ok && worst.0 <= EXACT_RTOL;
    let detail = match (shape_ok, worst.0 > 0.0) {
        (false, _) => "schedule shape differs from a fresh recursion".into(),
        (true, true) => format!("largest relative deviation {:.3e} at {}", worst.0, worst.1),
        (true, false) => "identical to a fresh recursion".into(),
    };
    Ok(CheckResult {
        name: "recursion".into(),
        passed,
        detail,
        computed: Some(worst.0),
        reference: Some(0.0),
        tolerance: Some(EXACT_RTOL),
    })
}

/// Random asymmetric chains (`p > 1 - q`) on small full-observation models;
/// every bracket evaluated exactly.
pub fn sandwich_campaign(count: usize, seed: u64) -> Result<(CheckResult, Vec<BoundReport>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(count);
    let mut failures = 0;
    for _ in 0..count {
        let n = rng.random_range(1..=2);
        let horizon = rng.random_range(2..=oracle::EXACT_BOUND_MAX_HORIZON.min(6));
        let model = sampling::random_model(&mut rng, ModelShape::new(n, n, horizon))?;
        let x0 = sampling::gaussian_vector(&mut rng, n, 1.0);
        let p: f64 = rng.random_range(0.3..1.0);
        let q = rng.random_range((1.0 - p + 0.02).min(1.0)..=1.0);
        let total = rng.random_range(0..=2.min(horizon));
        let delay = match total {
            0 => DelayProfile::perfect(),
            m => {
                let forward = rng.random_range(1..=m);
                DelayProfile::new(forward, m - forward)
            }
        };
        let tau0 = if rng.random_bool(0.5) {
            TauInit::ON
        } else {
            TauInit::OFF
        };
        let chain = ReliabilityChain::new(p, q, tau0)?;
        if chain.p <= 1.0 - chain.q + 1e-12 {
            continue;
        }
        let report = oracle::bound_check(
            &model,
            &chain,
            delay,
            Observation::Full,
            &x0,
            &BoundCheckConfig::default(),
        )?;
        if !report.holds {
            failures += 1;
        }
        reports.push(report);
    }
    let check = CheckResult::flag(
        "sandwich-campaign",
        failures == 0,
        format!("{} instances, {failures} violations", reports.len()),
    );
    Ok((check, reports))
}
