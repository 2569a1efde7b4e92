//! Gateway for the wearable privacy stack: device ingestion, key service,
//! consent-gated release, the audit ledger, an HTTP API and the CLI runners.

pub mod api;
pub mod bench;
pub mod config;
pub mod error;
pub mod keyservice;
pub mod pipeline;
pub mod release;
pub mod scenario;
pub mod state;

pub use config::ScenarioConfig;
pub use error::{GatewayError, Result};
pub use state::{Clock, Gateway, GatewayEvent, MetricsSnapshot};
