//! Streaming change-point detection built around two-window inspection.
//!
//! A monitoring session trains on the first `N` observations of a stream
//! and then tests sequentially for a change, comparing an early data
//! block against the most recent block of (near-)equal length under a
//! logarithmic temporal discount. Three detector variants cover mean
//! changes (`TC`), mean changes under temporal dependence without any
//! variance estimation (`SNTC`), and fully nonparametric distributional
//! changes robust to heavy tails (`NPTC`). Six classical weighted-CUSUM
//! detectors share the same streaming substrate for benchmarking.
//!
//! Critical values come from Monte Carlo simulation of the limiting laws
//! ([`calibration`]), are cached in fingerprinted JSON tables
//! ([`table`]), and feed monitoring sessions ([`monitor`]), the
//! simulation lab ([`simlab`]), and the CSV analysis pipeline
//! ([`pipeline`]).

pub mod baselines;
pub mod calibration;
pub mod config;
pub mod detectors;
pub mod engine;
pub mod error;
pub mod monitor;
pub mod pipeline;
pub mod simlab;
pub mod state;
pub mod table;
pub mod util;

pub use config::{DetectorKind, MonitorConfig, ScaleMode, ScanGrid};
pub use error::{Error, Result};
pub use monitor::{
    monitor, monitor_traced, DelayResult, DetectorVerdict, MonitorReport, MonitorSession,
    StopRule,
};
pub use state::{Retention, StreamState};
pub use table::{GridSpec, LimitLaw, QuantileTable, TableStore};
