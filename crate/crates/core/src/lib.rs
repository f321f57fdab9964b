//! State-dependent relay selection for buffer-aided relay networks whose
//! relays carry both a data buffer and an energy storage charged by RF
//! harvesting.
//!
//! The crate provides the selection scheme itself ([`policy`]), an exact
//! Markov-chain outage analysis ([`markov`]), a slot-level Monte Carlo
//! simulator ([`sim`]) and experiment presets with CSV output
//! ([`experiments`]).

pub mod channel;
pub mod error;
pub mod experiments;
pub mod markov;
pub mod policy;
pub mod sim;
pub mod state;

pub use channel::{ChannelParams, Direction, OutageThreshold, PowerParams};
pub use error::{Error, Result};
pub use experiments::{
    calibrate_rate, load_config, run_experiment, ExperimentPreset, ExperimentReport, PresetName,
};
pub use markov::{OutageAnalysis, OutageCurve, TransitionMatrix};
pub use policy::{LinkGains, PolicyKind, PriorityRanking};
pub use sim::{SimulationResult, SimulationSpec};
pub use state::{AvailabilityVector, LinkId, NetworkConfig, SystemState};
