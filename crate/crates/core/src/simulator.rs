//! Closed-loop Monte Carlo with the causal event order of a fog loop.
//!
//! Per stage `k`: the plant emits `z_k`; with perfect match the endpoint
//! state `τ_k` decides whether it is served and a control is applied the same
//! stage. With round trip `M = M_F + M_B`, only grid measurements are sent;
//! `z_{k-M}` reaches the endpoint at `k - M_B`, is served iff `τ_{k-M_B}` is
//! ON, and the resulting control lands at `k`. Then the disturbance drives
//! `x_{k+1}`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FogError, Result};
use crate::estimation::{delayed_predictor, kalman_predict, kalman_update, FilterState};
use crate::linalg::{self, Mat, Vector};
use crate::model::{LinearSystemModel, Observation, ReliabilityChain};
use crate::policy::ControllerRegime;
use crate::rng::{self, Stream};

/// Noise distribution used for disturbances and measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
}

/// Which state coordinates hold the tracking error and the velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingLayout {
    pub error_dims: usize,
    pub velocity_offset: usize,
    pub velocity_dims: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub noise: NoiseFamily,
    #[serde(default)]
    pub record_traces: bool,
    #[serde(default)]
    pub tracking: Option<TrackingLayout>,
}

impl SimulationConfig {
    pub fn new(replications: usize, master_seed: u64) -> Self {
        SimulationConfig {
            replications,
            master_seed,
            noise: NoiseFamily::Gaussian,
            record_traces: false,
            tracking: None,
        }
    }

    pub fn with_traces(mut self) -> Self {
        self.record_traces = true;
        self
    }

    pub fn with_tracking(mut self, layout: TrackingLayout) -> Self {
        self.tracking = Some(layout);
        self
    }
}

/// One stage of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub k: usize,
    pub x: Vector,
    /// Measurement, when one is emitted towards the controller.
    pub z: Option<Vector>,
    /// Endpoint state gating this stage's decision; `None` off the grid.
    pub tau: Option<bool>,
    /// Stage of the measurement the decision was computed from.
    pub info_stage: Option<usize>,
    pub u: Vector,
    pub applied: bool,
    pub xhat: Option<Vector>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub rep: usize,
    pub stages: Vec<StageRecord>,
    pub terminal_state: Vector,
    pub terminal_cost: f64,
    pub total_cost: f64,
}

/// Tracking quality of a drone-style batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingMetrics {
    /// `sqrt` of the mean of `‖e_k‖²` over stages `0..=N` and replications.
    pub rms_position_error: f64,
    /// Delta-method standard error of the RMS.
    pub rms_standard_error: f64,
    /// Mean of `Σ α‖v_k‖² + α‖u_k‖²`.
    pub mean_control_energy: f64,
    pub energy_standard_error: f64,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub regime: String,
    pub replications: usize,
    pub master_seed: u64,
    pub mean_cost: f64,
    pub std_error: f64,
    pub tracking: Option<TrackingMetrics>,
    #[serde(skip)]
    pub traces: Vec<SimulationTrace>,
}

/// Per-replication tracking accumulators.
#[derive(Debug, Clone, Copy, Default)]
struct TrackSample {
    mean_sq_error: f64,
    energy: f64,
    max_dev: f64,
}

#[derive(Default)]
struct TrackAcc {
    sq_sum: f64,
    stages: usize,
    energy: f64,
    max_dev: f64,
}

impl TrackAcc {
    fn state(&mut self, layout: &TrackingLayout, x: &Vector) {
        let e2: f64 = x.rows(0, layout.error_dims).norm_squared();
        self.sq_sum += e2;
        self.stages += 1;
        self.max_dev = self.max_dev.max(e2.sqrt());
        self.energy += layout.alpha
            * x.rows(layout.velocity_offset, layout.velocity_dims)
                .norm_squared();
    }

    fn control(&mut self, layout: &TrackingLayout, u: &Vector) {
        self.energy += layout.alpha * u.norm_squared();
    }

    fn finish(self) -> TrackSample {
        TrackSample {
            mean_sq_error: self.sq_sum / self.stages as f64,
            energy: self.energy,
            max_dev: self.max_dev,
        }
    }
}

fn check_layout(layout: &TrackingLayout, model: &LinearSystemModel) -> Result<()> {
    let n = model.state_dim();
    if layout.error_dims == 0
        || layout.error_dims > n
        || layout.velocity_offset + layout.velocity_dims > n
    {
        return Err(FogError::Dimension(format!(
            "tracking layout does not fit a {n}-dimensional state"
        )));
    }
    Ok(())
}

struct RepResult {
    total: f64,
    track: Option<TrackSample>,
    trace: Option<SimulationTrace>,
}

/// Immutable per-run data shared by all replications.
struct Context<'a> {
    model: &'a LinearSystemModel,
    chain: &'a ReliabilityChain,
    regime: &'a ControllerRegime,
    x0: &'a Vector,
    config: &'a SimulationConfig,
    w_factor: Vec<Mat>,
    v_factor: Vec<Mat>,
}

fn gaussian(rng: &mut ChaCha8Rng, factor: &Mat) -> Vector {
    let z = Vector::from_fn(factor.ncols(), |_, _| rng.sample(StandardNormal));
    factor * z
}

/// Runs `config.replications` independent closed loops.
pub fn run(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    regime: &ControllerRegime,
    x0: &Vector,
    config: &SimulationConfig,
) -> Result<SimulationSummary> {
    if config.replications == 0 {
        return Err(FogError::Config("replications must be at least 1".into()));
    }
    chain.validate()?;
    if regime.gains.horizon() != model.horizon() || x0.len() != model.state_dim() {
        return Err(FogError::Dimension("regime, model and x0 disagree".into()));
    }
    regime.delay.check_horizon(model.horizon())?;
    if let Some(layout) = &config.tracking {
        check_layout(layout, model)?;
    }
    let horizon = model.horizon();
    let ctx = Context {
        model,
        chain,
        regime,
        x0,
        config,
        w_factor: (0..horizon)
            .map(|k| linalg::psd_factor(model.w(k)))
            .collect(),
        v_factor: (0..horizon)
            .map(|k| linalg::psd_factor(model.v_noise(k)))
            .collect(),
    };
    let results: Vec<Result<RepResult>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| simulate_one(&ctx, rep))
        .collect();
    let results: Vec<RepResult> = results.into_iter().collect::<Result<_>>()?;

    let reps = results.len() as f64;
    let (mean_cost, std_error) = mean_and_se(results.iter().map(|r| r.total));
    let tracking = config.tracking.map(|_| {
        let samples: Vec<TrackSample> = results
            .iter()
            .map(|r| r.track.expect("tracking on"))
            .collect();
        metrics_from_samples(&samples)
    });
    debug_assert!(reps >= 1.0);
    Ok(SimulationSummary {
        regime: regime.regime().name().to_string(),
        replications: config.replications,
        master_seed: config.master_seed,
        mean_cost,
        std_error,
        tracking,
        traces: results.into_iter().filter_map(|r| r.trace).collect(),
    })
}

/// Sample mean and standard error, summed in index order.
fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn metrics_from_samples(samples: &[TrackSample]) -> TrackingMetrics {
    let (ms, ms_se) = mean_and_se(samples.iter().map(|s| s.mean_sq_error));
    let (energy, energy_se) = mean_and_se(samples.iter().map(|s| s.energy));
    let rms = ms.sqrt();
    TrackingMetrics {
        rms_position_error: rms,
        rms_standard_error: if rms > 0.0 { ms_se / (2.0 * rms) } else { 0.0 },
        mean_control_energy: energy,
        energy_standard_error: energy_se,
        max_deviation: samples.iter().map(|s| s.max_dev).fold(0.0, f64::max),
    }
}

/// Tracking metrics recomputed from recorded traces.
pub fn tracking_metrics(
    traces: &[SimulationTrace],
    layout: &TrackingLayout,
) -> Result<TrackingMetrics> {
    if traces.is_empty() {
        return Err(FogError::Config("no traces to summarize".into()));
    }
    let mut samples = Vec::with_capacity(traces.len());
    for t in traces {
        let n = t.terminal_state.len();
        if layout.error_dims == 0
            || layout.error_dims > n
            || layout.velocity_offset + layout.velocity_dims > n
        {
            return Err(FogError::Dimension(
                "trace state has no tracking-error layout".into(),
            ));
        }
        let mut acc = TrackAcc::default();
        for s in &t.stages {
            acc.state(layout, &s.x);
            acc.control(layout, &s.u);
        }
        acc.state(layout, &t.terminal_state);
        samples.push(acc.finish());
    }
    Ok(metrics_from_samples(&samples))
}

fn simulate_one(ctx: &Context, rep: usize) -> Result<RepResult> {
    let model = ctx.model;
    let regime = ctx.regime;
    let horizon = model.horizon();
    let seed = ctx.config.master_seed;
    let mut rng_w = rng::replication_rng(seed, rep as u64, Stream::Disturbance);
    let mut rng_v = rng::replication_rng(seed, rep as u64, Stream::Measurement);
    let mut rng_tau = rng::replication_rng(seed, rep as u64, Stream::Chain);
    let tau = rng::sample_tau_path(ctx.chain, horizon, &mut rng_tau);

    let delay = regime.delay;
    let m = delay.total();
    let partial = regime.observation == Observation::Partial;
    let use_drift = regime.compensates_drift();
    let drift = |k: usize| if use_drift { model.drift(k) } else { None };

    let mut x = ctx.x0.clone();
    let mut xs: Vec<Vector> = Vec::with_capacity(horizon);
    let mut us: Vec<Vector> = Vec::with_capacity(horizon);
    let mut zs: Vec<Vector> = Vec::with_capacity(horizon);
    // Perfect match: filter at the current stage. Delayed: prior at the last
    // grid stage, on the controller's clock.
    let mut filter = FilterState::known(ctx.x0);

    let layout = ctx.config.tracking;
    let mut track = TrackAcc::default();
    let mut stages = Vec::new();
    let mut total = 0.0;

    for k in 0..horizon {
        let z = model.c(k) * &x + gaussian(&mut rng_v, &ctx.v_factor[k]);
        let (decision, gate, info_stage, xhat) = if m == 0 {
            let on = tau[k];
            if partial {
                if on {
                    filter = kalman_update(&filter, model, &z)?;
                }
                let d = regime.decide(k, &filter.mean, on)?;
                (d, Some(on), on.then_some(k), Some(filter.mean.clone()))
            } else {
                (regime.decide(k, &x, on)?, Some(on), on.then_some(k), None)
            }
        } else if let Some(gi) = regime.gate_index(k) {
            let on = tau[gi];
            let past = k - m;
            let xhat = if partial {
                if on {
                    filter = kalman_update(&filter, model, &zs[past])?;
                }
                let mut pred = filter.clone();
                for i in 0..m {
                    let u = if i == 0 {
                        us[past].clone()
                    } else {
                        Vector::zeros(model.control_dim())
                    };
                    pred = kalman_predict(&pred, model, &u, drift(past + i))?;
                }
                filter = pred;
                filter.mean.clone()
            } else {
                delayed_predictor(&xs[past], &us[past], model, k, m, use_drift)?
            };
            let d = regime.decide(k, &xhat, on)?;
            (d, Some(on), on.then_some(past), Some(xhat))
        } else {
            (
                crate::model::PolicyDecision::idle(model.control_dim()),
                None,
                None,
                None,
            )
        };
        let u = decision.u().clone();
        let cost = model.stage_cost(k, &x, &u);
        total += cost;
        if let Some(l) = &layout {
            track.state(l, &x);
            track.control(l, &u);
        }
        let w = gaussian(&mut rng_w, &ctx.w_factor[k]);
        let x_next = model.step(k, &x, &u, &w);
        if m == 0 && partial {
            filter = kalman_predict(&filter, model, &u, drift(k))?;
        }
        if ctx.config.record_traces {
            stages.push(StageRecord {
                k,
                x: x.clone(),
                z: (m == 0 || delay.on_grid(k)).then(|| z.clone()),
                tau: gate,
                info_stage,
                u: u.clone(),
                applied: decision.applied(),
                xhat,
                cost,
            });
        }
        if m > 0 {
            xs.push(x);
            us.push(u);
            zs.push(z);
        }
        x = x_next;
    }
    let terminal_cost = linalg::quad_form(model.q_terminal(), &x);
    total += terminal_cost;
    let track = layout.map(|l| {
        track.state(&l, &x);
        track.finish()
    });
    let trace = ctx.config.record_traces.then_some(SimulationTrace {
        rep,
        stages,
        terminal_state: x,
        terminal_cost,
        total_cost: total,
    });
    Ok(RepResult {
        total,
        track,
        trace,
    })
}

/// Writes traces as CSV: `rep,k,tau,x...,u...,xhat...,cost_stage`, one row
/// per stage plus a terminal row with empty control fields.
pub fn write_trace_csv<W: Write>(traces: &[SimulationTrace], mut out: W) -> std::io::Result<()> {
    let Some(first) = traces.first() else {
        return Ok(());
    };
    let n = first.terminal_state.len();
    let s = first.stages.first().map_or(0, |r| r.u.len());
    let mut header = vec!["rep".to_string(), "k".into(), "tau".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..s).map(|i| format!("u{i}")));
    header.extend((0..n).map(|i| format!("xhat{i}")));
    header.push("cost_stage".into());
    writeln!(out, "{}", header.join(","))?;
    let fmt = |v: Option<&Vector>, len: usize| -> Vec<String> {
        match v {
            Some(v) => v.iter().map(|x| format!("{x}")).collect(),
            None => vec![String::new(); len],
        }
    };
    for t in traces {
        for r in &t.stages {
            let mut row = vec![
                t.rep.to_string(),
                r.k.to_string(),
                r.tau.map_or(String::new(), |b| u8::from(b).to_string()),
            ];
            row.extend(fmt(Some(&r.x), n));
            row.extend(fmt(Some(&r.u), s));
            row.extend(fmt(r.xhat.as_ref(), n));
            row.push(format!("{}", r.cost));
            writeln!(out, "{}", row.join(","))?;
        }
        let mut row = vec![t.rep.to_string(), t.stages.len().to_string(), String::new()];
        row.extend(fmt(Some(&t.terminal_state), n));
        row.extend(fmt(None, s));
        row.extend(fmt(None, n));
        row.push(format!("{}", t.terminal_cost));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
