//! Time-slotted asynchronous update: node `i` updates on ticks
//! `i, i + (N-1), i + 2(N-1), ...` from everything heard since its last slot.

use super::{NodeState, SyncMessage};
use crate::error::Result;

/// Accumulates a neighbor's time. Frozen nodes ignore receptions.
pub fn tsau_on_receive(state: &NodeState, msg: &SyncMessage) -> Result<NodeState> {
    state.check_kind(msg)?;
    let mut next = *state;
    if !next.frozen {
        next.accumulate(msg.time);
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub state: NodeState,
    pub message: Option<SyncMessage>,
    /// The estimate was recomputed this tick.
    pub updated: bool,
}

/// Acts at tick `k` if it is this node's slot in an `n`-node network.
///
/// The node adopts the accumulated mean only when it heard from more than
/// one neighbor, then broadcasts, clears its accumulators and schedules its
/// next slot `n - 1` ticks later.
pub fn tsau_on_slot(state: &NodeState, k: u64, n: usize) -> SlotOutcome {
    if k != state.update_tick {
        return SlotOutcome { state: *state, message: None, updated: false };
    }
    let mut next = *state;
    let updated = !next.frozen && next.total_received > 1;
    if updated {
        let t = next.t_av();
        next.adopt(t);
    }
    next.reset_accumulators();
    next.update_tick += n.saturating_sub(1).max(1) as u64;
    SlotOutcome { message: Some(next.message()), state: next, updated }
}
