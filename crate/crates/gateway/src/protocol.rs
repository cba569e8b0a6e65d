//! Newline-delimited JSON wire protocol between the gateway and operator clients.

use fwswarm_core::gcs::{Alert, CommandState, FailsafePolicy, HighLevelCommand, TelemetrySnapshot, WorkflowState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;
/// Longest client line accepted, bytes.
pub const MAX_LINE: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot {
        v: u32,
        seq: u64,
        snapshot: TelemetrySnapshot,
    },
    /// An alert that was not present in the previous snapshot (`raised`), or
    /// one that has gone away.
    Alert {
        v: u32,
        time: f64,
        raised: bool,
        alert: Alert,
    },
    CommandStatus {
        v: u32,
        time: f64,
        workflow: u32,
        index: usize,
        command: String,
        state: CommandState,
        command_id: Option<u16>,
        attempts: u32,
        reason: Option<String>,
    },
    WorkflowStatus {
        v: u32,
        time: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        request: Option<String>,
        workflow: u32,
        state: WorkflowState,
        commands: Vec<CommandState>,
    },
    Error {
        v: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        request: Option<String>,
        message: String,
    },
}

impl ServerMessage {
    pub fn error(request: Option<String>, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            v: PROTOCOL_VERSION,
            request,
            message: message.into(),
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server messages serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Submits an ordered workflow of high-level commands.
    Command {
        v: u32,
        /// Echoed on the reply so clients can match it.
        #[serde(default)]
        request: Option<String>,
        commands: Vec<HighLevelCommand>,
        #[serde(default)]
        failsafe: FailsafePolicy,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("line longer than {MAX_LINE} bytes")]
    TooLong,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}, expected {PROTOCOL_VERSION}")]
    Version(u32),
}

pub fn parse_client(line: &str) -> Result<ClientMessage, ProtocolError> {
    if line.len() > MAX_LINE {
        return Err(ProtocolError::TooLong);
    }
    let msg: ClientMessage = serde_json::from_str(line.trim()).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let ClientMessage::Command { v, .. } = &msg;
    if *v != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(*v));
    }
    Ok(msg)
}
