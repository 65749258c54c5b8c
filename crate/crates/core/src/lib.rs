//! Backtesting engine measuring whether an exogenous per-county signal
//! (mobility) improves short-horizon forecasts of a target signal (cases).
//!
//! The pipeline: load and align [`panel::Panel`]s, normalize and smooth them
//! ([`preprocess`]), fit per-county lag regressions over sliding windows
//! ([`backtest`], [`elasticnet`]) and score each day by the cross-county
//! Spearman correlation improvement of the mobility model over the baseline
//! ([`metrics`]). [`synth`] produces seeded panels with known coupling.

pub mod backtest;
pub mod cli;
pub mod config;
pub mod elasticnet;
pub mod error;
pub mod metrics;
pub mod panel;
pub mod preprocess;
pub mod report;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
