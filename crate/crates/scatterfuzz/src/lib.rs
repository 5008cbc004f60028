//! Scenario corpus, campaign directories, benchmarking and statistics on
//! top of `scatterfuzz-core`.

pub mod bench;
pub mod campaign;
pub mod corpus;
pub mod report;
pub mod scenario;
pub mod stats;

pub use campaign::{run_fuzz, FuzzOptions, FuzzOutcome};
pub use scenario::{Category, ExpectedString, Scenario, ScenarioError};
pub use stats::{mann_whitney_u, MannWhitney, MwuError};
