//! Deterministic simulator of adversarial proxy distribution for censorship
//! circumvention.
//!
//! A central distributor hands secret proxy addresses to requesting clients
//! by playing a college-admissions matching game: requesters and proxies
//! rank each other through utility functions over client history, proxy
//! importance, and geography, and a quota-generalized deferred-acceptance
//! round produces a stable assignment every stage. A centrally coordinated
//! censor infiltrates the system with Sybil agents, pools what they learn,
//! and blocks proxies aggressively, conservatively, or by maximizing its
//! marginal objective.
//!
//! Runs are reproducible: a seed plus a [`config::SimConfig`] determines the
//! whole metric series, bit for bit.

pub mod bipartite;
pub mod censor;
pub mod clients;
pub mod config;
pub mod distributor;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod utility;

/// The scalar type simulation state is carried in. The formula layer in
/// [`utility`] is generic over [`scalar::Real`]; everything else pins this.
pub type Scalar = f64;

/// Ranking parameters at the crate scalar.
pub type Params = utility::UtilityParams<Scalar>;

pub use config::{default_config, ecosystem, Ecosystem, SimConfig};
pub use metrics::{sample, series_to_csv, summarize, StageMetrics, Summary};
pub use simulation::{run, run_invitation_scenario, run_sweep, run_with_world, WorldState};
