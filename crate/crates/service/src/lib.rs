//! The network-facing service: pairing, the envelope protocol, event
//! fan-out and durable state.

pub mod config;
pub mod error;
pub mod protocol;
pub mod server;
pub mod service;
pub mod state;
pub mod store;

pub use config::ServiceConfig;
pub use error::ServiceError;
pub use protocol::{Envelope, ErrorCode, Request};
pub use service::{Connection, Dispatch, Outgoing, RestoreReport, Service};
pub use state::{Event, PairRecord, Push, ServiceState};

/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "OTTERLINK_DATA_DIR";
