//! Per-node state machines for the three asynchronous protocols and the
//! synchronous averaging baseline, plus the wire codec.
//!
//! All transitions are pure: they take a state by reference and return the
//! next state. Receptions within a tick are accumulated by the `*_on_receive`
//! functions and acted upon at the tick boundary (`*_on_slot` / `*_on_tick`).

mod baseline;
mod flood;
mod message;
mod tsau;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use baseline::sync_baseline_step;
pub use flood::{baf_on_receive, baf_on_tick, uaf_gateway_cycle, uaf_on_receive, uaf_on_tick};
pub use message::{decode, encode, wire_ticks, SyncMessage, WIRE_TICKS_PER_SECOND};
pub use tsau::{tsau_on_receive, tsau_on_slot};

use crate::clock::{NodeClocks, TriggerBits};
use crate::error::{Error, Result};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    #[serde(rename = "baseline")]
    SyncBaseline,
    Tsau,
    Uaf,
    Baf,
}

impl ProtocolKind {
    /// The three asynchronous protocols in reporting order.
    pub const ASYNC: [ProtocolKind; 3] = [ProtocolKind::Tsau, ProtocolKind::Uaf, ProtocolKind::Baf];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::SyncBaseline => "baseline",
            ProtocolKind::Tsau => "tsau",
            ProtocolKind::Uaf => "uaf",
            ProtocolKind::Baf => "baf",
        }
    }

    /// Encoded payload length in bytes.
    pub fn payload_len(self) -> usize {
        match self {
            ProtocolKind::SyncBaseline | ProtocolKind::Tsau => 6,
            ProtocolKind::Uaf => 7,
            ProtocolKind::Baf => 9,
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "sync" | "syncbaseline" => Ok(ProtocolKind::SyncBaseline),
            "tsau" => Ok(ProtocolKind::Tsau),
            "uaf" => Ok(ProtocolKind::Uaf),
            "baf" => Ok(ProtocolKind::Baf),
            other => Err(Error::invalid(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Arithmetic mean, summed in index order.
pub fn neighborhood_average(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("cannot average an empty neighborhood"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

// Per-tick gating evidence for UAF/BAF; reset at every tick boundary.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Gate {
    pub opposite: bool,
    pub opposite_min_counter: u16,
    pub same: u32,
    pub same_all_smaller: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub kind: ProtocolKind,
    pub id: NodeId,
    pub clocks: NodeClocks,
    pub triggers: TriggerBits,
    pub clock_sum: f64,
    pub total_received: u32,
    /// Status bit `s_i` (UAF/BAF).
    pub status: bool,
    /// Hop counter `c_i` (BAF).
    pub counter: u16,
    /// Next TSAU slot, in ticks.
    pub update_tick: u64,
    pub frozen: bool,
    /// Whether `t_s` holds an averaged value yet.
    pub has_estimate: bool,
    /// Tick of the last status flip (UAF/BAF).
    pub last_flip: Option<u64>,
    pub(crate) gate: Gate,
}

impl NodeState {
    /// Fresh node; the TSAU slot defaults to the node id.
    pub fn new(kind: ProtocolKind, id: NodeId, clocks: NodeClocks) -> Self {
        NodeState {
            kind,
            id,
            clocks,
            triggers: TriggerBits::default(),
            clock_sum: 0.0,
            total_received: 0,
            status: false,
            counter: 0,
            update_tick: u64::from(id),
            frozen: false,
            has_estimate: false,
            last_flip: None,
            gate: Gate::default(),
        }
    }

    pub fn with_slot(mut self, slot: u64) -> Self {
        self.update_tick = slot;
        self
    }

    /// The node's current time `t_i`: the frozen logical clock after a dip,
    /// the soft estimate once averaging started, the hardware clock before.
    pub fn estimate(&self) -> f64 {
        if self.frozen || !self.has_estimate {
            self.clocks.t_c
        } else {
            self.clocks.t_s
        }
    }

    /// Value the node would adopt at the next boundary.
    pub fn t_av(&self) -> f64 {
        let pending = match self.kind {
            ProtocolKind::Uaf | ProtocolKind::Baf => self.gate.opposite,
            _ => true,
        };
        if pending && self.total_received > 0 {
            self.clock_sum / self.total_received as f64
        } else {
            self.estimate()
        }
    }

    /// The message this node broadcasts (or replies with when frozen).
    pub fn message(&self) -> SyncMessage {
        SyncMessage {
            kind: self.kind,
            sender: self.id,
            time: self.estimate(),
            status: matches!(self.kind, ProtocolKind::Uaf | ProtocolKind::Baf) && self.status,
            counter: if self.kind == ProtocolKind::Baf { self.counter } else { 0 },
        }
    }

    pub(crate) fn adopt(&mut self, t: f64) {
        self.clocks.t_s = t;
        self.has_estimate = true;
    }

    pub(crate) fn accumulate(&mut self, t: f64) {
        self.clock_sum += t;
        self.total_received += 1;
    }

    pub(crate) fn reset_accumulators(&mut self) {
        self.clock_sum = 0.0;
        self.total_received = 0;
        self.gate = Gate::default();
    }

    pub(crate) fn check_kind(&self, msg: &SyncMessage) -> Result<()> {
        if msg.kind != self.kind {
            return Err(Error::ProtocolViolation(format!(
                "node {} runs {} but received a {} message",
                self.id, self.kind, msg.kind
            )));
        }
        Ok(())
    }
}
