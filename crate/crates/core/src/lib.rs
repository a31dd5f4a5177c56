//! Deterministic simulation of idle-period propagation in 1D halo-exchange
//! applications, plus the trace analysis and rendering used to study it.
//!
//! The pipeline is `SimConfig` → [`engine::simulate`] → [`trace::Trace`] →
//! [`analysis`] / [`render`]. Traces recorded on real machines enter the same
//! pipeline through [`trace::ingest_csv`].

pub mod analysis;
pub mod app;
pub mod config;
pub mod engine;
pub mod network;
pub mod noise;
pub mod render;
pub mod trace;

/// Virtual time and durations, in clock cycles.
pub type Cycles = u64;

/// Process index within the application.
pub type Rank = u32;

pub use config::{ConfigError, Preset, SimConfig};
pub use engine::{simulate, simulate_detailed, SimError};
pub use trace::{Direction, IdleRecord, Trace, TraceHeader};
