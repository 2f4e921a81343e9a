//! Distributed uplink channel selection for industrial IoT cells.
//!
//! N machines share K orthogonal uplink channels. In every scheduling unit
//! each machine with a packet picks a channel on its own; the base station
//! only broadcasts which channels carried a decodable packet. Bandit
//! policies turn that binary feedback into collision-free allocations.

pub mod agents;
pub mod clock;
pub mod config;
pub mod engine;
pub mod experiments;
pub mod error;
pub mod metrics;
pub mod phy;
pub mod traffic;

pub use agents::{AgentKind, AgentState, ArmIndex, ContextVector, Reward};
pub use config::{parse_seed_list, ScenarioConfig};
pub use engine::{resolve_su, run, RunOutput, World};
pub use error::{Error, Result};
pub use experiments::{presets, run_sweep, SweepSpec};
pub use metrics::{aggregate, convergence_time, s_tx, MetricsRecord};
