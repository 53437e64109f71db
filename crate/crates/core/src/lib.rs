//! Key-rate model for asymmetric sending-or-not-sending twin-field QKD with
//! finite-size decoy-state analysis.
//!
//! The pipeline runs [`channel`] (expected rates) → [`chernoff`] (observed to
//! expected intervals) → [`decoy`] (single-photon bounds) → [`keyrate`]. The
//! [`optimizer`] searches source parameters and [`montecarlo`] is a
//! pulse-level simulator used to check the analytic rates.

pub mod channel;
pub mod chernoff;
pub mod config;
pub mod decoy;
pub mod error;
pub mod keyrate;
pub mod montecarlo;
pub mod numerics;
pub mod optimizer;

pub use config::{ChannelPair, DeviceParams, ProtocolVariant, RunConfig, SecurityCoefficients, SourceParams, ValidatedConfig};
pub use error::{Error, Result};
pub use keyrate::KeyRateReport;
