//! Communication layer: framed protocol, simulated dual-channel network and
//! the per-node communication manager.

pub mod comm;
pub mod crc;
pub mod frame;
pub mod message;
pub mod network;

pub use comm::{CommCounters, CommManager, Outgoing, Received};
pub use frame::{decode_frame, encode_frame, Frame, Parsed, StreamDecoder};
pub use message::{decode, encode, ChannelClass, Priority, SwarmMessage};
pub use network::{ChannelSpec, Delivery, Destination, NetCounters, Network};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("payload of {0} bytes exceeds 255")]
    PayloadTooLarge(usize),
    #[error("expected magic 0xFD, found {0:#04x}")]
    BadMagic(u8),
    #[error("checksum mismatch: stored {stored:#06x}, computed {computed:#06x}")]
    Crc { stored: u16, computed: u16 },
    #[error("frame truncated")]
    Truncated,
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("unknown message id {0:#04x}")]
    UnknownMessage(u8),
    #[error("message {msgid:#04x}: payload of {len} bytes too short")]
    ShortPayload { msgid: u8, len: usize },
    #[error("message {msgid:#04x}: {extra} unexpected trailing payload bytes")]
    LongPayload { msgid: u8, extra: usize },
    #[error("message {msgid:#04x}: invalid {field} {value}")]
    InvalidField { msgid: u8, field: &'static str, value: u32 },
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
}
