//! Wire framing: `FD len seq sysid msgid payload crc_lo crc_hi`.
//!
//! The checksum covers `len` through the last payload byte and is stored
//! little-endian.

use super::crc::crc16;
use super::NetError;

pub const MAGIC: u8 = 0xFD;
pub const HEADER_LEN: usize = 5;
pub const CRC_LEN: usize = 2;
pub const MAX_PAYLOAD: usize = 255;
pub const MAX_FRAME: usize = HEADER_LEN + MAX_PAYLOAD + CRC_LEN;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub seq: u8,
    pub sysid: u8,
    pub msgid: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Result<Vec<u8>, NetError> {
        encode_frame(self.sysid, self.seq, self.msgid, &self.payload)
    }

    pub fn wire_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + CRC_LEN
    }
}

pub fn encode_frame(sysid: u8, seq: u8, msgid: u8, payload: &[u8]) -> Result<Vec<u8>, NetError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(NetError::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&[MAGIC, payload.len() as u8, seq, sysid, msgid]);
    out.extend_from_slice(payload);
    let crc = crc16(&out[1..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Outcome of examining the start of a byte buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    /// A valid frame and the number of bytes it occupied.
    Frame(Frame, usize),
    /// The buffer is a valid prefix; more bytes are needed.
    Incomplete,
}

/// Decodes one frame starting at `buf[0]`.
pub fn decode_frame(buf: &[u8]) -> Result<Parsed, NetError> {
    let Some(&first) = buf.first() else {
        return Ok(Parsed::Incomplete);
    };
    if first != MAGIC {
        return Err(NetError::BadMagic(first));
    }
    if buf.len() < 2 {
        return Ok(Parsed::Incomplete);
    }
    let len = buf[1] as usize;
    let total = HEADER_LEN + len + CRC_LEN;
    if buf.len() < total {
        return Ok(Parsed::Incomplete);
    }
    let body = &buf[1..HEADER_LEN + len];
    let stored = u16::from_le_bytes([buf[total - 2], buf[total - 1]]);
    let computed = crc16(body);
    if stored != computed {
        return Err(NetError::Crc { stored, computed });
    }
    Ok(Parsed::Frame(
        Frame {
            seq: buf[2],
            sysid: buf[3],
            msgid: buf[4],
            payload: buf[HEADER_LEN..HEADER_LEN + len].to_vec(),
        },
        total,
    ))
}

/// Incremental decoder over an unreliable byte stream.
///
/// Bad frames are dropped and the decoder resynchronizes on the next magic
/// byte after the start of the rejected frame.
#[derive(Debug, Default, Clone)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    pub crc_errors: u64,
    pub bytes_skipped: u64,
    pub frames: u64,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    fn skip_to_magic(&mut self, from: usize) {
        let next = self.buf[from..]
            .iter()
            .position(|b| *b == MAGIC)
            .map(|p| p + from)
            .unwrap_or(self.buf.len());
        self.bytes_skipped += next as u64;
        self.buf.drain(..next);
    }

    /// Returns the next complete valid frame, or `None` when more bytes are needed.
    pub fn next_frame(&mut self) -> Option<Frame> {
        loop {
            self.skip_to_magic(0);
            match decode_frame(&self.buf) {
                Ok(Parsed::Frame(frame, used)) => {
                    self.buf.drain(..used);
                    self.frames += 1;
                    return Some(frame);
                }
                Ok(Parsed::Incomplete) => return None,
                Err(NetError::Crc { .. }) => {
                    self.crc_errors += 1;
                    self.skip_to_magic(1);
                }
                Err(_) => self.skip_to_magic(1),
            }
        }
    }

    pub fn drain_frames(&mut self) -> Vec<Frame> {
        std::iter::from_fn(|| self.next_frame()).collect()
    }
}
