//! Channel state information model and synthetic multipath generator.
//!
//! - [`frame`]: `CsiFrame` / `CsiSeries` containers over `(m, n, k)` complex values
//! - [`scenario`]: path lists, subcarrier grid and scenario JSON
//! - [`simulate`]: per-frame multipath superposition with shared phase offset
//! - [`presets`]: the four presence cases in a reference room
//! - [`dump`]: the `CSID` binary dump format

pub mod dump;
pub mod frame;
pub mod presets;
pub mod scenario;
pub mod simulate;

pub use dump::{read_dump, write_dump, DumpError};
pub use frame::{Case, CsiFrame, CsiSeries, Dims, Pair};
pub use presets::{preset_collection, preset_scenario, preset_variant, Corner, Room};
pub use scenario::{PathSpec, PhaseOffsetMode, ScenarioConfig};
pub use simulate::{simulate_frame, simulate_series, simulate_series_from};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsiError {
    #[error("invalid case id {0}, expected 1..=4")]
    InvalidCase(u8),
    #[error("dimension mismatch: expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("pair {pair:?} out of range for {dims:?}")]
    IndexOutOfRange { pair: Pair, dims: Dims },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("path {path} of pair {pair_index} has negative length at t = {t}")]
    NegativeLength { pair_index: usize, path: usize, t: u64 },
    #[error("series is empty")]
    EmptySeries,
    #[error("timestamps must increase by one: {previous} then {next}")]
    NonContiguousTimestamps { previous: u64, next: u64 },
    #[error("need {needed} samples, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CsiError> = std::result::Result<T, E>;
