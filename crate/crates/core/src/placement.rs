//! Ranking candidate controller locations by their optimal cost.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{FogError, Result};
use crate::estimation::PenaltyConfig;
use crate::linalg::Vector;
use crate::model::{
    CostBreakdown, DelayProfile, LinearSystemModel, Observation, ReliabilityChain, TauInit,
};
use crate::riccati::{backward_recursion, min_cost};

/// A place the controller software could run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointCatalogEntry {
    pub name: String,
    pub latency_seconds: f64,
    pub p: f64,
    pub q: f64,
    /// Explicit split of the stage delay; both must be given together.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backward: Option<usize>,
}

impl EndpointCatalogEntry {
    pub fn new(name: &str, latency_seconds: f64, p: f64, q: f64) -> Self {
        EndpointCatalogEntry {
            name: name.to_string(),
            latency_seconds,
            p,
            q,
            forward: None,
            backward: None,
        }
    }

    /// Whole stages of delay, `ceil(latency / Δt)`.
    ///
    /// The small slack keeps latencies that are an exact multiple of `Δt`
    /// from rounding up on representation error (0.3 / 0.1 is 2.9999…96).
    pub fn stages(&self, delta_t: f64) -> Result<usize> {
        if !self.latency_seconds.is_finite() || self.latency_seconds < 0.0 {
            return Err(FogError::Config(format!(
                "endpoint {:?}: latency must be finite and >= 0",
                self.name
            )));
        }
        if !delta_t.is_finite() || delta_t <= 0.0 {
            return Err(FogError::Config("delta_t must be positive".into()));
        }
        Ok((self.latency_seconds / delta_t - 1e-9).ceil().max(0.0) as usize)
    }

    pub fn delay(&self, delta_t: f64) -> Result<DelayProfile> {
        match (self.forward, self.backward) {
            (Some(f), Some(b)) => Ok(DelayProfile::new(f, b)),
            (None, None) => Ok(DelayProfile::split(self.stages(delta_t)?)),
            _ => Err(FogError::Config(format!(
                "endpoint {:?}: give both forward and backward or neither",
                self.name
            ))),
        }
    }
}

/// The measured latencies of the motivating experiment. Serverless
/// endpoints are treated as always available; the local node's reliability
/// is an illustrative guess.
pub fn default_catalog() -> Vec<EndpointCatalogEntry> {
    vec![
        EndpointCatalogEntry::new("Local node", 0.06, 0.8, 0.2),
        EndpointCatalogEntry::new("Microsoft Azure Functions US East", 0.08, 1.0, 0.0),
        EndpointCatalogEntry::new("AWS Lambda US East (Virginia)", 0.5, 1.0, 0.0),
        EndpointCatalogEntry::new("AWS Lambda US West (Seattle)", 0.8, 1.0, 0.0),
        EndpointCatalogEntry::new("AWS Lambda Tokyo", 1.3, 1.0, 0.0),
    ]
}

/// One ranked endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacementRow {
    pub rank: usize,
    pub name: String,
    pub latency_seconds: f64,
    pub p: f64,
    pub q: f64,
    pub forward: usize,
    pub backward: usize,
    /// Cost used for ranking: the optimum on symmetric chains, the upper
    /// bound `J*(1-q, q)` otherwise.
    pub cost: f64,
    /// Lower bound `J*(p, 1-p)`; equals `cost` on symmetric chains.
    pub lower_bound: f64,
    pub breakdown: CostBreakdown,
}

/// Closed-form cost of every endpoint, ranked ascending.
pub fn rank_placement(
    model: &LinearSystemModel,
    x0: &Vector,
    observation: Observation,
    catalog: &[EndpointCatalogEntry],
    delta_t: f64,
    tau0: TauInit,
    penalty: &PenaltyConfig,
) -> Result<Vec<PlacementRow>> {
    if catalog.is_empty() {
        return Err(FogError::Config("endpoint catalog is empty".into()));
    }
    let symmetric_cost = |p: f64, delay: DelayProfile| -> Result<CostBreakdown> {
        let chain = ReliabilityChain::symmetric(p, tau0)?;
        let schedule = backward_recursion(model, p, Some(delay), observation)?;
        min_cost(&schedule, model, &chain, x0, penalty)
    };
    let mut rows = Vec::with_capacity(catalog.len());
    for entry in catalog {
        let chain = ReliabilityChain::new(entry.p, entry.q, tau0)?;
        let delay = entry.delay(delta_t)?;
        delay.check_horizon(model.horizon())?;
        let (breakdown, lower) = if chain.is_symmetric() {
            let b = symmetric_cost(entry.p, delay)?;
            (b, b.total)
        } else if entry.p > 1.0 - entry.q {
            let upper = symmetric_cost(1.0 - entry.q, delay)?;
            (upper, symmetric_cost(entry.p, delay)?.total)
        } else {
            return Err(FogError::SandwichHypotheses {
                p: entry.p,
                q: entry.q,
            });
        };
        rows.push(PlacementRow {
            rank: 0,
            name: entry.name.clone(),
            latency_seconds: entry.latency_seconds,
            p: entry.p,
            q: entry.q,
            forward: delay.forward,
            backward: delay.backward,
            cost: breakdown.total,
            lower_bound: lower,
            breakdown,
        });
    }
    // Stable: ties keep catalog order.
    rows.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    Ok(rows)
}

pub fn write_placement_csv<W: Write>(rows: &[PlacementRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "rank,name,latency_seconds,p,q,forward,backward,cost,lower_bound,initial_state_term,disturbance_trace_sum,collateral_trace_sum,estimation_penalty"
    )?;
    for r in rows {
        let b = &r.breakdown;
        writeln!(
            out,
            "{},\"{}\",{},{},{},{},{},{},{},{},{},{},{}",
            r.rank,
            r.name.replace('"', "\"\""),
            r.latency_seconds,
            r.p,
            r.q,
            r.forward,
            r.backward,
            r.cost,
            r.lower_bound,
            b.initial_state_term,
            b.disturbance_trace_sum,
            b.collateral_trace_sum,
            b.estimation_penalty
        )?;
    }
    Ok(())
}
