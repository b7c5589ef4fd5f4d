//! Closed-loop simulation of a leader-follower pair linked by a screen and a
//! camera: scenario configs and presets, the fixed-step run loop, metrics,
//! the braking sweep and file outputs.

pub mod config;
pub mod emit;
pub mod experiment;
pub mod metrics;
pub mod run;

pub use config::{
    preset, preset_braking, preset_circular, preset_ushape, ConfigError, EstimatorKind, Preset, ScenarioConfig,
    SensingMode, BRAKING_LEVELS,
};
pub use experiment::{braking_experiment, braking_runs, BrakingCell, BrakingRun};
pub use metrics::Metrics;
pub use run::{run, LinkStatus, RunOutput, SimRecord};
