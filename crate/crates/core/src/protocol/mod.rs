//! Routing protocols driven by the simulation loop.

use std::fmt::Debug;

use crate::packet::{DataMsg, NodeId, Packet};
use crate::sim::Net;

pub mod ambr;
pub mod flood;
pub mod proactive;

pub use ambr::Ambr;
pub use flood::FloodReactive;
pub use proactive::Proactive;

/// Event handlers of a routing protocol. One value holds the state of every node.
pub trait Protocol {
    type Timer: Clone + Debug;

    fn name(&self) -> &'static str;

    fn on_node_up(&mut self, net: &mut Net<Self::Timer>, node: NodeId);

    fn on_receive(&mut self, net: &mut Net<Self::Timer>, node: NodeId, from: NodeId, packet: Packet);

    /// A unicast from `node` to `to` was not acknowledged.
    fn on_tx_failed(&mut self, net: &mut Net<Self::Timer>, node: NodeId, to: NodeId, packet: Packet);

    fn on_timer(&mut self, net: &mut Net<Self::Timer>, node: NodeId, timer: Self::Timer);

    /// A new data packet generated at `msg.origin`.
    fn on_data(&mut self, net: &mut Net<Self::Timer>, msg: DataMsg);

    /// Appends a description of every violated protocol invariant.
    fn check_invariants(&self, net: &Net<Self::Timer>, out: &mut Vec<String>);
}

/// Upper bound on hops a data packet may take before it is dropped.
pub const HOP_LIMIT: usize = 64;
