//! Wire messages and their little-endian payload layout.
//!
//! ```text
//! TSAU  | id: u16 | time: u32 |                       6 bytes
//! UAF   | id: u16 | time: u32 | s: u8 |               7 bytes
//! BAF   | id: u16 | time: u32 | s: u8 | c: u16 |      9 bytes
//! ```
//!
//! Time travels as a count of 1 µs timer ticks and saturates at both ends.
//! The baseline uses the TSAU layout.

use super::ProtocolKind;
use crate::error::{Error, Result};
use crate::topology::NodeId;

pub const WIRE_TICKS_PER_SECOND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncMessage {
    pub kind: ProtocolKind,
    pub sender: NodeId,
    /// Seconds.
    pub time: f64,
    pub status: bool,
    pub counter: u16,
}

impl SyncMessage {
    pub fn tsau(sender: NodeId, time: f64) -> Self {
        SyncMessage { kind: ProtocolKind::Tsau, sender, time, status: false, counter: 0 }
    }

    pub fn uaf(sender: NodeId, time: f64, status: bool) -> Self {
        SyncMessage { kind: ProtocolKind::Uaf, sender, time, status, counter: 0 }
    }

    pub fn baf(sender: NodeId, time: f64, status: bool, counter: u16) -> Self {
        SyncMessage { kind: ProtocolKind::Baf, sender, time, status, counter }
    }

    /// Seconds represented exactly by `ticks` wire ticks.
    pub fn time_from_ticks(ticks: u32) -> f64 {
        f64::from(ticks) / WIRE_TICKS_PER_SECOND
    }
}

/// Saturating conversion of seconds to wire ticks (nearest tick).
pub fn wire_ticks(time: f64) -> u32 {
    let scaled = (time * WIRE_TICKS_PER_SECOND).round();
    if scaled.is_nan() || scaled <= 0.0 {
        0
    } else if scaled >= f64::from(u32::MAX) {
        u32::MAX
    } else {
        scaled as u32
    }
}

pub fn encode(msg: &SyncMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.kind.payload_len());
    out.extend_from_slice(&msg.sender.to_le_bytes());
    out.extend_from_slice(&wire_ticks(msg.time).to_le_bytes());
    if matches!(msg.kind, ProtocolKind::Uaf | ProtocolKind::Baf) {
        out.push(u8::from(msg.status));
    }
    if msg.kind == ProtocolKind::Baf {
        out.extend_from_slice(&msg.counter.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], kind: ProtocolKind) -> Result<SyncMessage> {
    let want = kind.payload_len();
    if bytes.len() != want {
        return Err(Error::MalformedMessage(format!(
            "{kind} payload must be {want} bytes, got {}",
            bytes.len()
        )));
    }
    let sender = u16::from_le_bytes([bytes[0], bytes[1]]);
    let ticks = u32::from_le_bytes([bytes[2], bytes[3], bytes[4], bytes[5]]);
    let status = match bytes.get(6) {
        None | Some(0) => false,
        Some(1) => true,
        Some(b) => return Err(Error::MalformedMessage(format!("status byte {b} is not 0 or 1"))),
    };
    let counter = if kind == ProtocolKind::Baf { u16::from_le_bytes([bytes[7], bytes[8]]) } else { 0 };
    Ok(SyncMessage { kind, sender, time: SyncMessage::time_from_ticks(ticks), status, counter })
}
