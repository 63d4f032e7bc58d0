//! HTTP gateway and command-line front end for the intentforge engine.

pub mod demo;
pub mod events;
pub mod http;
pub mod service;

pub use events::{EventKind, EventLog, PushEvent};
pub use http::{router, serve, ServeConfig, ServeError, ServiceHandle};
pub use service::{CatalogSource, Gateway, GatewayConfig, GatewayError};
