//! Subcommand implementations behind the `fogctl` binary.
//!
//! Every command reads a [`Config`], writes its artifacts into an output
//! directory and returns the paths written. Output is deterministic for a
//! fixed config and seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fogctl_core::config::Setting;
use fogctl_core::drone::{self, DroneScenario};
use fogctl_core::model::CostBreakdown;
use fogctl_core::placement::{self, EndpointCatalogEntry, PlacementRow};
use fogctl_core::policy::{self, ControllerRegime};
use fogctl_core::riccati::{backward_recursion, min_cost, GainSchedule};
use fogctl_core::simulator::{self, SimulationConfig, TrackingMetrics};
use fogctl_core::verify::{self, VerifyOptions, VerifyReport};
use fogctl_core::{Config, Experiment, FogError};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] FogError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for bad input, 3 for a failed verification, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Core(e) => match e {
                FogError::LinearSolve { .. } | FogError::Stage { .. } => 1,
                _ => 2,
            },
            CliError::Io { .. } => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Flags shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub format: Option<Format>,
}

pub fn load_config(path: &Path) -> CliResult<Config> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Config::from_json(&text).map_err(|e| match e {
        FogError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => CliError::Core(other),
    })
}

pub fn load_catalog(path: &Path) -> CliResult<Vec<EndpointCatalogEntry>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn resolve(config: &Config) -> CliResult<Experiment> {
    config.resolve().map_err(|e| match e {
        FogError::Config(msg) => CliError::Config(msg),
        other => CliError::Core(other),
    })
}

fn create(out: &Path, name: &str) -> CliResult<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join(name);
    let file = File::create(&path).map_err(io_err(&path))?;
    Ok((path, BufWriter::new(file)))
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> CliResult<PathBuf> {
    let (path, mut w) = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct GainsEntry<'a> {
    p: f64,
    q: f64,
    forward: usize,
    backward: usize,
    gains: &'a GainSchedule,
}

/// Gain schedules of every configured setting, to `gains.json`.
///
/// Asymmetric chains get the gains of the bracketing policy, `p' = 1 - q`.
pub fn cmd_gains(config: &Config, opts: &RunOptions) -> CliResult<Vec<PathBuf>> {
    let exp = resolve(config)?;
    let schedules = exp
        .settings
        .iter()
        .map(|s| controller(&exp, s).map(|c| c.gains))
        .collect::<CliResult<Vec<_>>>()?;
    let entries: Vec<_> = exp
        .settings
        .iter()
        .zip(&schedules)
        .map(|(s, gains)| GainsEntry {
            p: s.chain.p,
            q: s.chain.q,
            forward: s.delay.forward,
            backward: s.delay.backward,
            gains,
        })
        .collect();
    Ok(vec![write_json(&opts.out, "gains.json", &entries)?])
}

/// Controller run for a setting: optimal on symmetric chains, the bracketing
/// policy on asymmetric ones.
fn controller(exp: &Experiment, s: &Setting) -> CliResult<ControllerRegime> {
    let regime = if s.chain.is_symmetric() {
        ControllerRegime::optimal(&exp.model, s.chain.p, s.delay, exp.observation)?
    } else {
        policy::sandwich_policy(&exp.model, &s.chain, s.delay, exp.observation)?
    };
    Ok(regime.with_drift_mode(&exp.model, exp.drift_mode)?)
}

/// One row of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub p: f64,
    pub q: f64,
    pub forward: usize,
    pub backward: usize,
    pub regime: String,
    pub replications: usize,
    pub seed: u64,
    pub mean_cost: f64,
    pub std_error: f64,
    /// Closed-form optimum, for symmetric chains without drift.
    pub closed_form: Option<CostBreakdown>,
    pub tracking: Option<TrackingMetrics>,
}

/// Monte Carlo over every setting. All settings share the master seed, so
/// they see the same noise realizations.
pub fn cmd_simulate(config: &Config, opts: &RunOptions) -> CliResult<Vec<PathBuf>> {
    let exp = resolve(config)?;
    let replications = opts.replications.unwrap_or(exp.simulation.replications);
    let seed = opts.seed.unwrap_or(exp.simulation.seed);
    let mut sim_cfg = SimulationConfig::new(replications, seed);
    if exp.simulation.record_traces {
        sim_cfg = sim_cfg.with_traces();
    }
    if let Some(layout) = exp.tracking {
        sim_cfg = sim_cfg.with_tracking(layout);
    }
    let mut rows = Vec::with_capacity(exp.settings.len());
    let mut written = Vec::new();
    let many = exp.settings.len() > 1;
    for (i, setting) in exp.settings.iter().enumerate() {
        let regime = controller(&exp, setting)?;
        log::info!(
            "simulating p = {}, q = {}, M = {} ({} replications)",
            setting.chain.p,
            setting.chain.q,
            setting.delay.total(),
            replications
        );
        let summary = simulator::run(&exp.model, &setting.chain, &regime, &exp.x0, &sim_cfg)?;
        let closed_form = if setting.chain.is_symmetric() && !exp.model.has_drift() {
            Some(min_cost(
                &regime.gains,
                &exp.model,
                &setting.chain,
                &exp.x0,
                &exp.penalty_config(),
            )?)
        } else {
            None
        };
        if exp.simulation.record_traces {
            let name = if many {
                format!("trace_{i}.csv")
            } else {
                "trace.csv".into()
            };
            let (path, mut w) = create(&opts.out, &name)?;
            simulator::write_trace_csv(&summary.traces, &mut w)
                .and_then(|_| w.flush())
                .map_err(io_err(&path))?;
            written.push(path);
        }
        rows.push(SummaryRow {
            p: setting.chain.p,
            q: setting.chain.q,
            forward: setting.delay.forward,
            backward: setting.delay.backward,
            regime: summary.regime,
            replications,
            seed,
            mean_cost: summary.mean_cost,
            std_error: summary.std_error,
            closed_form,
            tracking: summary.tracking,
        });
    }
    let path = match opts.format.unwrap_or_default() {
        Format::Json => write_json(&opts.out, "summary.json", &rows)?,
        Format::Csv => write_summary_csv(&opts.out, &rows)?,
    };
    written.insert(0, path);
    Ok(written)
}

fn write_summary_csv(out: &Path, rows: &[SummaryRow]) -> CliResult<PathBuf> {
    let (path, mut w) = create(out, "summary.csv")?;
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    let mut body = String::from(
        "p,q,forward,backward,regime,replications,seed,mean_cost,std_error,closed_form,rms_position_error,mean_control_energy\n",
    );
    for r in rows {
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.p,
            r.q,
            r.forward,
            r.backward,
            r.regime,
            r.replications,
            r.seed,
            r.mean_cost,
            r.std_error,
            opt(r.closed_form.map(|c| c.total)),
            opt(r.tracking.map(|t| t.rms_position_error)),
            opt(r.tracking.map(|t| t.mean_control_energy)),
        ));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct VerifyOutput {
    pub passed: bool,
    pub reports: Vec<VerifyReport>,
}

/// Checks the gains of every setting; see [`cmd_verify_with`].
pub fn cmd_verify(config: &Config, opts: &RunOptions) -> CliResult<Vec<PathBuf>> {
    cmd_verify_with(config, opts, |_| {})
}

/// Like [`cmd_verify`], but passes each schedule through `tamper` before
/// checking it. Used to confirm that corrupted gains are caught.
///
/// Writes `verify.json` and fails with [`CliError::Verification`] if any
/// check fails. The random bracket campaign runs once, with the first
/// setting.
pub fn cmd_verify_with<F: Fn(&mut GainSchedule)>(
    config: &Config,
    opts: &RunOptions,
    tamper: F,
) -> CliResult<Vec<PathBuf>> {
    let exp = resolve(config)?;
    let mut options = VerifyOptions {
        seed: opts.seed.unwrap_or(VerifyOptions::default().seed),
        penalty: exp.penalty_config(),
        ..VerifyOptions::default()
    };
    if let Some(r) = opts.replications {
        options.replications = r;
    }
    let mut reports = Vec::with_capacity(exp.settings.len());
    for (i, s) in exp.settings.iter().enumerate() {
        if i > 0 {
            options.campaign_size = 0;
        }
        let mut schedule =
            backward_recursion(&exp.model, s.chain.p, Some(s.delay), exp.observation)?;
        tamper(&mut schedule);
        reports.push(verify::verify_schedule(
            &exp.model, &s.chain, &schedule, &exp.x0, &options,
        )?);
    }
    let output = VerifyOutput {
        passed: reports.iter().all(|r| r.passed),
        reports,
    };
    let path = write_json(&opts.out, "verify.json", &output)?;
    if !output.passed {
        let failed: Vec<_> = output
            .reports
            .iter()
            .flat_map(|r| r.checks.iter().filter(|c| !c.passed))
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        return Err(CliError::Verification(failed.join("; ")));
    }
    Ok(vec![path])
}

/// Flips the sign of every `Λ_k`; the verifier must reject the result.
pub fn negate_lambda(schedule: &mut GainSchedule) {
    for m in schedule.lambda.iter_mut() {
        *m = -&*m;
    }
}

/// Ranks endpoints of `catalog` (default: the built-in latency table).
///
/// `delta_t` converts latencies into stages; it defaults to the scenario's
/// step when a drone scenario is configured.
pub fn cmd_placement(
    config: &Config,
    catalog: Option<&[EndpointCatalogEntry]>,
    delta_t: Option<f64>,
    opts: &RunOptions,
) -> CliResult<Vec<PathBuf>> {
    let exp = resolve(config)?;
    let delta_t = delta_t
        .or_else(|| config.scenario.as_ref().map(|s| s.drone.delta_t))
        .ok_or_else(|| CliError::Config("placement needs --delta-t for a system config".into()))?;
    let default_catalog;
    let catalog = match catalog {
        Some(c) => c,
        None => {
            default_catalog = placement::default_catalog();
            &default_catalog
        }
    };
    let tau0 = exp.settings[0].chain.tau0;
    let rows = placement::rank_placement(
        &exp.model,
        &exp.x0,
        exp.observation,
        catalog,
        delta_t,
        tau0,
        &exp.penalty_config(),
    )?;
    let path = match opts.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(&opts.out, "placement.json", &rows)?,
        Format::Csv => {
            let (path, mut w) = create(&opts.out, "placement.csv")?;
            placement::write_placement_csv(&rows, &mut w)
                .and_then(|_| w.flush())
                .map_err(io_err(&path))?;
            path
        }
    };
    Ok(vec![path])
}

/// Ranked rows without writing anything.
pub fn placement_rows(
    config: &Config,
    catalog: &[EndpointCatalogEntry],
    delta_t: f64,
) -> CliResult<Vec<PlacementRow>> {
    let exp = resolve(config)?;
    Ok(placement::rank_placement(
        &exp.model,
        &exp.x0,
        exp.observation,
        catalog,
        delta_t,
        exp.settings[0].chain.tau0,
        &exp.penalty_config(),
    )?)
}

/// Reference path of the drone scenario to `waypoints.csv` (`k,x,y`).
pub fn cmd_waypoints(
    config: Option<&Config>,
    delta_t: Option<f64>,
    opts: &RunOptions,
) -> CliResult<Vec<PathBuf>> {
    let mut scenario = match config {
        Some(c) => c
            .scenario
            .as_ref()
            .map(|s| s.drone.clone())
            .ok_or_else(|| CliError::Config("waypoints needs a scenario config".into()))?,
        None => DroneScenario::default(),
    };
    if let Some(dt) = delta_t {
        scenario.delta_t = dt;
    }
    scenario.validate()?;
    let points = drone::make_waypoints(&scenario.plan, scenario.delta_t)?;
    let (path, mut w) = create(&opts.out, "waypoints.csv")?;
    let mut body = String::from("k,x,y\n");
    for (k, p) in points.iter().enumerate() {
        body.push_str(&format!("{k},{},{}\n", p[0], p[1]));
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    Ok(vec![path])
}
