//! Operator gateway: serves live telemetry from a running simulation to
//! clients over newline-delimited JSON and feeds their command workflows to
//! the ground station.

pub mod driver;
pub mod protocol;
pub mod server;

pub use driver::{Driver, Outgoing, Route, SessionId};
pub use protocol::{parse_client, ClientMessage, ProtocolError, ServerMessage, PROTOCOL_VERSION};
pub use server::{serve, ServeConfig, Server};
