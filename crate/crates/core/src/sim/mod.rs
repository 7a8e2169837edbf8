//! Seeded simulation: topology and users, mobility, traffic, the
//! control-interval loop and metrics.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod mobility;
pub mod output;
pub mod throughput;
pub mod topology;
pub mod workload;

pub use config::{ChannelKind, ScenarioConfig, SliceConfig, WorkloadConfig};
pub use experiment::{
    build_scenario, run_experiment, run_sweep, should_invoke, stale_ues, RunOutput, Scenario, SweepResult, SweepRow,
};
pub use metrics::MetricsBundle;
pub use mobility::step_mobility;
pub use throughput::{account_throughput, ThroughputReport};
pub use topology::{generate_topology, place_users, Topology};
