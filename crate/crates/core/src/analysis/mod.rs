//! Reconstruction of idle-period propagation from a [`Trace`].
//!
//! * [`idle_stats`]: per-rank min/mean/max idle.
//! * [`binarize`]: per-rank 0/1 occupancy of long idles over time bins.
//! * [`detect_waves`]: chains long-idle onsets across neighbouring ranks and
//!   fits a propagation speed to each chain.
//! * [`phase_between`] / [`detect_self_sync`]: common period and per-rank
//!   phase of periodic idle patterns.
//!
//! All functions are pure and produce output ordered by rank.
//!
//! [`Trace`]: crate::trace::Trace

mod correlation;
mod series;
mod stats;
mod sync;
mod waves;

pub use correlation::{autocorrelation, circular_cross_correlation};
pub use series::{binarize, binarize_from, BinarySeries};
pub use stats::{idle_stats, RankStats};
pub use sync::{detect_self_sync, estimate_period, phase_between, SyncConfig, SyncReport};
pub use waves::{default_chaining_window, detect_waves, WaveFront};

use crate::Cycles;

/// Idle periods shorter than this are treated as background, in cycles.
pub const DEFAULT_THRESHOLD: Cycles = 1_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("insufficient data: {included} ranks with long idle periods, need at least {required}")]
    InsufficientData { included: usize, required: usize },
    #[error("phase undefined: series has zero variance")]
    UndefinedPhase,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
