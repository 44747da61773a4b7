//! JSON experiment configuration.
//!
//! Top-level keys: `system`, `reliability`, `delay`, `scenario`,
//! `simulation`. Unknown keys anywhere are rejected. Matrices are row-major
//! nested arrays; any matrix sequence may instead be a single matrix (or a
//! bare number for 1×1) meaning "constant over k".

use serde::{Deserialize, Serialize};

use crate::drone::{self, DroneScenario};
use crate::error::{FogError, Result};
use crate::estimation::{PenaltyConfig, PenaltyMethod};
use crate::linalg::{self, Mat, Vector};
use crate::model::{
    DelayProfile, LinearSystemModel, Observation, ReliabilityChain, SystemSpec, TauInit,
};
use crate::policy::DriftMode;
use crate::simulator::TrackingLayout;

/// A matrix sequence: constant shorthand or explicit per-stage list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSeq {
    Scalar(f64),
    Constant(Vec<Vec<f64>>),
    PerStage(Vec<Vec<Vec<f64>>>),
}

impl MatrixSeq {
    /// Expands to exactly `len` matrices.
    fn expand(&self, name: &str, len: usize) -> Result<Vec<Mat>> {
        let parse = |rows: &[Vec<f64>], k: Option<usize>| {
            linalg::from_rows(rows).ok_or_else(|| {
                FogError::Config(match k {
                    Some(k) => format!("system.{name}[{k}] is ragged"),
                    None => format!("system.{name} is ragged"),
                })
            })
        };
        match self {
            MatrixSeq::Scalar(x) => Ok(vec![Mat::from_element(1, 1, *x); len]),
            MatrixSeq::Constant(rows) => Ok(vec![parse(rows, None)?; len]),
            MatrixSeq::PerStage(seq) => {
                if seq.len() != len {
                    return Err(FogError::Config(format!(
                        "system.{name} has {} stages, expected {len}",
                        seq.len()
                    )));
                }
                seq.iter()
                    .enumerate()
                    .map(|(k, m)| parse(m, Some(k)))
                    .collect()
            }
        }
    }

    fn from_seq(seq: &[Mat]) -> Self {
        match seq.first() {
            Some(first) if seq.iter().all(|m| m == first) => {
                MatrixSeq::Constant(linalg::to_rows(first))
            }
            _ => MatrixSeq::PerStage(seq.iter().map(linalg::to_rows).collect()),
        }
    }
}

/// A vector sequence: one vector for every stage, or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSeq {
    Constant(Vec<f64>),
    PerStage(Vec<Vec<f64>>),
}

impl VectorSeq {
    fn expand(&self, len: usize) -> Result<Vec<Vector>> {
        match self {
            VectorSeq::Constant(v) => Ok(vec![Vector::from_column_slice(v); len]),
            VectorSeq::PerStage(seq) => {
                if seq.len() != len {
                    return Err(FogError::Config(format!(
                        "system.drift has {} stages, expected {len}",
                        seq.len()
                    )));
                }
                Ok(seq.iter().map(|v| Vector::from_column_slice(v)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub horizon: usize,
    #[serde(rename = "A")]
    pub a: MatrixSeq,
    #[serde(rename = "B")]
    pub b: MatrixSeq,
    /// Defaults to the identity (exact state measurement).
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<MatrixSeq>,
    /// `N` stage weights, or `N + 1` including the terminal one.
    #[serde(rename = "Q")]
    pub q: MatrixSeq,
    /// Terminal weight; defaults to the last stage weight.
    #[serde(
        rename = "Q_terminal",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub q_terminal: Option<MatrixSeq>,
    #[serde(rename = "R")]
    pub r: MatrixSeq,
    #[serde(rename = "W")]
    pub w: MatrixSeq,
    /// Defaults to zero.
    #[serde(rename = "V_noise", default, skip_serializing_if = "Option::is_none")]
    pub v_noise: Option<MatrixSeq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<VectorSeq>,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub observation: Observation,
}

impl SystemConfig {
    pub fn build(&self) -> Result<LinearSystemModel> {
        let n_stages = self.horizon;
        if n_stages == 0 {
            return Err(FogError::Config("system.horizon must be at least 1".into()));
        }
        let a = self.a.expand("A", n_stages)?;
        let b = self.b.expand("B", n_stages)?;
        let n = a[0].nrows();
        let s = b[0].ncols();
        let c = match &self.c {
            Some(c) => c.expand("C", n_stages)?,
            None => vec![Mat::identity(n, n); n_stages],
        };
        let m = c[0].nrows();
        let mut q = match &self.q {
            MatrixSeq::PerStage(seq) if seq.len() == n_stages + 1 => {
                self.q.expand("Q", n_stages + 1)?
            }
            other => other.expand("Q", n_stages)?,
        };
        match (&self.q_terminal, q.len() == n_stages + 1) {
            (Some(_), true) => {
                return Err(FogError::Config(
                    "system.Q already includes the terminal weight; drop Q_terminal".into(),
                ))
            }
            (Some(qt), false) => q.push(qt.expand("Q_terminal", 1)?.remove(0)),
            (None, false) => q.push(q[n_stages - 1].clone()),
            (None, true) => {}
        }
        let v_noise = match &self.v_noise {
            Some(v) => v.expand("V_noise", n_stages)?,
            None => vec![Mat::zeros(m, m); n_stages],
        };
        let spec = SystemSpec {
            horizon: n_stages,
            state_dim: n,
            control_dim: s,
            obs_dim: m,
            a,
            b,
            c,
            q,
            r: self.r.expand("R", n_stages)?,
            w: self.w.expand("W", n_stages)?,
            v_noise,
            drift: self
                .drift
                .as_ref()
                .map(|d| d.expand(n_stages))
                .transpose()?,
        };
        LinearSystemModel::new(spec)
    }

    pub fn x0(&self) -> Vector {
        Vector::from_column_slice(&self.x0)
    }

    /// Canonical config of a validated model: constant sequences collapse to
    /// the shorthand, the terminal weight is always explicit.
    pub fn from_model(model: &LinearSystemModel, x0: &Vector, observation: Observation) -> Self {
        let spec = model.spec();
        let horizon = spec.horizon;
        SystemConfig {
            horizon,
            a: MatrixSeq::from_seq(&spec.a),
            b: MatrixSeq::from_seq(&spec.b),
            c: Some(MatrixSeq::from_seq(&spec.c)),
            q: MatrixSeq::from_seq(&spec.q[..horizon]),
            q_terminal: Some(MatrixSeq::Constant(linalg::to_rows(&spec.q[horizon]))),
            r: MatrixSeq::from_seq(&spec.r),
            w: MatrixSeq::from_seq(&spec.w),
            v_noise: Some(MatrixSeq::from_seq(&spec.v_noise)),
            drift: spec
                .drift
                .as_ref()
                .map(|d| VectorSeq::PerStage(d.iter().map(|v| v.as_slice().to_vec()).collect())),
            x0: x0.as_slice().to_vec(),
            observation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReliabilityConfig {
    #[serde(default)]
    pub p: Option<f64>,
    /// Defaults to `1 - p` (symmetric chain).
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub tau0: Option<TauInit>,
}

impl ReliabilityConfig {
    pub fn chain(&self) -> Result<ReliabilityChain> {
        let p = self
            .p
            .ok_or_else(|| FogError::Config("reliability.p required".into()))?;
        let q = self.q.unwrap_or(1.0 - p);
        ReliabilityChain::new(p, q, self.tau0.unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    #[serde(default)]
    pub forward: usize,
    #[serde(default)]
    pub backward: usize,
}

impl From<DelayConfig> for DelayProfile {
    fn from(d: DelayConfig) -> Self {
        DelayProfile::new(d.forward, d.backward)
    }
}

/// Grid of `(p, M)` settings for a scenario sweep. Each `M` is split with
/// `M_F = ceil(M/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub p: Vec<f64>,
    #[serde(default = "default_delays")]
    pub delay: Vec<usize>,
}

fn default_delays() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub drone: DroneScenario,
    #[serde(default)]
    pub mode: DriftMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltySection {
    pub method: PenaltyMethod,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

impl From<PenaltySection> for PenaltyConfig {
    fn from(p: PenaltySection) -> Self {
        PenaltyConfig {
            method: p.method,
            replications: p.replications,
            seed: p.seed,
        }
    }
}

fn default_replications() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_traces: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<PenaltySection>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            replications: default_replications(),
            seed: 0,
            record_traces: false,
            penalty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<ReliabilityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
}

/// One `(chain, delay)` setting to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub chain: ReliabilityChain,
    pub delay: DelayProfile,
}

/// A config resolved into validated objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: LinearSystemModel,
    pub x0: Vector,
    pub observation: Observation,
    pub drift_mode: DriftMode,
    pub tracking: Option<TrackingLayout>,
    pub settings: Vec<Setting>,
    pub simulation: SimulationSection,
}

impl Experiment {
    pub fn penalty_config(&self) -> PenaltyConfig {
        match self.simulation.penalty {
            Some(p) => p.into(),
            None if self.model.horizon() <= crate::estimation::EXACT_PENALTY_MAX_HORIZON => {
                PenaltyConfig::exact()
            }
            None => PenaltyConfig::monte_carlo(
                self.simulation.replications.max(2),
                self.simulation.seed,
            ),
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FogError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| FogError::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<Experiment> {
        let simulation = self.simulation.clone().unwrap_or_default();
        let tau0 = self
            .reliability
            .as_ref()
            .and_then(|r| r.tau0)
            .unwrap_or_default();
        let (model, x0, observation, drift_mode, tracking, sweep) =
            match (&self.system, &self.scenario) {
                (Some(_), Some(_)) => {
                    return Err(FogError::Config(
                        "give either system or scenario, not both".into(),
                    ))
                }
                (None, None) => return Err(FogError::Config("system or scenario required".into())),
                (Some(sys), None) => {
                    let model = sys.build()?;
                    let x0 = sys.x0();
                    if x0.len() != model.state_dim() {
                        return Err(FogError::Config(format!(
                            "system.x0 has {} entries, expected {}",
                            x0.len(),
                            model.state_dim()
                        )));
                    }
                    (
                        model,
                        x0,
                        sys.observation,
                        DriftMode::Uncompensated,
                        None,
                        None,
                    )
                }
                (None, Some(sc)) => {
                    let model = drone::build_system(&sc.drone)?;
                    (
                        model,
                        sc.drone.initial_state(),
                        Observation::Full,
                        sc.mode,
                        Some(sc.drone.tracking_layout()),
                        sc.sweep.clone(),
                    )
                }
            };
        let settings = match sweep {
            Some(sw) => {
                let mut out = Vec::new();
                for &m in &sw.delay {
                    for &p in &sw.p {
                        out.push(Setting {
                            chain: ReliabilityChain::symmetric(p, tau0)?,
                            delay: DelayProfile::split(m),
                        });
                    }
                }
                if out.is_empty() {
                    return Err(FogError::Config("scenario.sweep is empty".into()));
                }
                out
            }
            None => {
                let chain = self.reliability.clone().unwrap_or_default().chain()?;
                vec![Setting {
                    chain,
                    delay: self.delay.unwrap_or_default().into(),
                }]
            }
        };
        for s in &settings {
            s.delay.check_horizon(model.horizon())?;
        }
        Ok(Experiment {
            model,
            x0,
            observation,
            drift_mode,
            tracking,
            settings,
            simulation,
        })
    }
}
