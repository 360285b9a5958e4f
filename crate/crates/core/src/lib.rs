//! Joint estimation of player survival time and churn probability from
//! early session telemetry.

pub mod dataprep;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod models;
pub mod seed;
pub mod telemetry;

pub use error::{Error, Result};

/// Build identifier embedded in every metadata file this crate writes.
pub const BUILD_ID: &str = concat!("bifurcate ", env!("CARGO_PKG_VERSION"));
