//! Simulator and protocol library for asynchronous single-hop time
//! synchronization with transient-dip stopping.
//!
//! The crate models a gateway with a perfect clock `t_g(k) = Δk` and a set
//! of sensor nodes that average their neighbors' times. Three activation
//! schemes are provided (TSAU, UAF, BAF) next to a synchronous baseline,
//! together with the dip detector that freezes a node close to its minimum
//! error, lossy-link and malicious-node models, metrics and an energy model.

pub mod clock;
pub mod dip;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod noise;
pub mod protocol;
pub mod rng;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
pub use protocol::ProtocolKind;
pub use sim::{run, run_batch, SimConfig, Trace};
pub use topology::{NodeId, Topology};
