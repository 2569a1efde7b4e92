use petwear_core::consent::{ConsentError, RequestState};
use petwear_core::dataplane::DataplaneError;
use petwear_core::dp::DpError;
use petwear_core::he::HeError;
use petwear_core::ledger::LedgerError;
use petwear_core::mpc::MpcError;
use petwear_core::telemetry::TelemetryError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{step} failed for device {device}: {source}")]
    Step {
        step: &'static str,
        device: String,
        #[source]
        source: Box<GatewayError>,
    },
    #[error("request {id} is {state}, not allowed")]
    NotAllowed { id: String, state: RequestState },
    #[error("no data stored for user {user}, category {category}")]
    NoData { user: String, category: String },
    #[error("key service: {0}")]
    Keys(String),
    #[error(transparent)]
    Consent(#[from] ConsentError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Dataplane(#[from] DataplaneError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl GatewayError {
    pub fn at(self, step: &'static str, device: impl Into<String>) -> Self {
        GatewayError::Step { step, device: device.into(), source: Box::new(self) }
    }
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;
