//! Unidirectional (UAF) and bidirectional (BAF) flooding.
//!
//! A node is woken when it hears a status bit different from its own. It then
//! averages every time value heard in that tick and takes the opposite status.
//! A node that flipped at tick `k - 1` ignores the stale pre-flip broadcasts of
//! its downstream neighbors at tick `k`.
//!
//! In BAF the counter `c_i` tracks the hop distance of the wavefront. A node
//! that hears only same-status messages, all with smaller counters, is a far
//! end of the network: it resets `c_i`, flips `s_i` and starts the backward
//! flood.

use super::{NodeState, ProtocolKind, SyncMessage};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutcome {
    pub state: NodeState,
    /// The estimate was recomputed this tick.
    pub updated: bool,
}

fn receive(state: &NodeState, msg: &SyncMessage) -> NodeState {
    let mut next = *state;
    next.accumulate(msg.time);
    let gate = &mut next.gate;
    if msg.status != state.status {
        gate.opposite_min_counter = if gate.opposite { gate.opposite_min_counter.min(msg.counter) } else { msg.counter };
        gate.opposite = true;
    } else {
        let smaller = msg.counter < state.counter;
        gate.same_all_smaller = if gate.same == 0 { smaller } else { gate.same_all_smaller && smaller };
        gate.same += 1;
    }
    next
}

pub fn uaf_on_receive(state: &NodeState, msg: &SyncMessage) -> Result<NodeState> {
    state.check_kind(msg)?;
    Ok(receive(state, msg))
}

pub fn baf_on_receive(state: &NodeState, msg: &SyncMessage) -> Result<NodeState> {
    state.check_kind(msg)?;
    Ok(receive(state, msg))
}

fn gated(state: &NodeState, k: u64) -> bool {
    let refractory = k > 0 && state.last_flip == Some(k - 1);
    state.gate.opposite && !refractory
}

fn forward(state: &NodeState, k: u64) -> (NodeState, bool) {
    let mut next = *state;
    let updated = !next.frozen;
    if updated {
        let t = next.t_av();
        next.adopt(t);
    }
    next.status = !next.status;
    next.last_flip = Some(k);
    (next, updated)
}

/// Tick boundary for UAF.
pub fn uaf_on_tick(state: &NodeState, k: u64) -> TickOutcome {
    debug_assert_eq!(state.kind, ProtocolKind::Uaf);
    let (mut next, updated) = if gated(state, k) { forward(state, k) } else { (*state, false) };
    next.reset_accumulators();
    TickOutcome { state: next, updated }
}

/// Tick boundary for BAF, including the far-end reversal.
pub fn baf_on_tick(state: &NodeState, k: u64) -> TickOutcome {
    debug_assert_eq!(state.kind, ProtocolKind::Baf);
    let g = state.gate;
    let (mut next, updated) = if gated(state, k) {
        let (mut next, updated) = forward(state, k);
        next.counter = g.opposite_min_counter.saturating_add(1);
        (next, updated)
    } else if !g.opposite && g.same > 0 && g.same_all_smaller {
        let mut next = *state;
        next.counter = 0;
        next.status = !next.status;
        next.last_flip = Some(k);
        (next, false)
    } else {
        (*state, false)
    };
    next.reset_accumulators();
    TickOutcome { state: next, updated }
}

/// Whether the UAF gateway restarts its flood: strictly `ts > L·Δ`.
pub fn uaf_gateway_cycle(ts: f64, layers: u32, delta: f64) -> bool {
    ts > f64::from(layers) * delta
}
