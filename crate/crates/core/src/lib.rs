//! Optimal control over unreliable, delayed fog endpoints.
//!
//! Backward recursions and closed-form costs, intermittent Kalman filtering,
//! the optimal feedback laws, a brute-force oracle, a Monte Carlo simulator
//! the planar drone tracking scenario, and a controller placement ranking.

pub mod config;
pub mod drone;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod placement;
pub mod policy;
pub mod riccati;
pub mod rng;
pub mod sampling;
pub mod simulator;
pub mod verify;

pub use error::{FogError, Result};
pub use linalg::{Mat, Vector};

pub use config::{Config, Experiment, Setting};
pub use drone::{DroneScenario, WaypointPlan};
pub use estimation::{EstimationPenalty, FilterState, PenaltyConfig, PenaltyMethod};
pub use model::{
    CostBreakdown, DelayProfile, LinearSystemModel, Observation, PolicyDecision, ReliabilityChain,
    SystemSpec, TauInit,
};
pub use oracle::{bound_check, brute_force_min_cost, BoundReport};
pub use placement::{rank_placement, EndpointCatalogEntry, PlacementRow};
pub use policy::{ControllerRegime, DriftMode};
pub use riccati::{backward_recursion, min_cost, GainSchedule, Regime};
pub use simulator::{SimulationConfig, SimulationSummary};
pub use verify::{verify, verify_schedule, VerifyOptions, VerifyReport};
