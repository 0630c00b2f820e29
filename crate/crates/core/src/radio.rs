//! Idealized disk radio: inclusive range test, serialization delay from
//! bandwidth, optional independent loss. No contention or collisions.

use crate::kernel::{RngStream, SimTime};
use crate::mobility::Point;
use crate::packet::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    pub tx_range: f64,
    /// Bits per second.
    pub bandwidth: f64,
    pub loss_prob: f64,
    pub propagation_delay: f64,
    /// Fixed unicast failure-detection delay; `None` means `2 * airtime + 0.1 s`.
    pub ack_timeout: Option<f64>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_range: 250.0,
            bandwidth: 5000.0,
            loss_prob: 0.0,
            propagation_delay: 0.0,
            ack_timeout: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxMode {
    Broadcast,
    Unicast(NodeId),
}

/// Outcome of one transmission as seen by the medium.
#[derive(Debug, Clone, PartialEq)]
pub struct TxPlan {
    pub deliveries: Vec<(NodeId, SimTime)>,
    /// Time at which the sender learns that a unicast did not get through.
    pub failure_at: Option<SimTime>,
}

#[derive(Debug, Clone)]
pub struct Radio {
    cfg: RadioConfig,
    tx_count: Vec<u64>,
    loss: RngStream,
}

impl Radio {
    pub fn new(cfg: RadioConfig, nodes: usize, loss: RngStream) -> Self {
        Radio {
            cfg,
            tx_count: vec![0; nodes],
            loss,
        }
    }

    pub fn config(&self) -> &RadioConfig {
        &self.cfg
    }

    pub fn airtime(&self, bytes: u32) -> SimTime {
        bytes as f64 * 8.0 / self.cfg.bandwidth
    }

    pub fn ack_timeout(&self, bytes: u32) -> SimTime {
        self.cfg
            .ack_timeout
            .unwrap_or_else(|| 2.0 * self.airtime(bytes) + 0.1)
    }

    pub fn in_range(&self, a: &Point, b: &Point) -> bool {
        a.dist(b) <= self.cfg.tx_range
    }

    /// All nodes other than `node` within range at the given positions.
    pub fn neighbors_of(&self, node: NodeId, positions: &[Point]) -> Vec<NodeId> {
        let me = positions[node.idx()];
        positions
            .iter()
            .enumerate()
            .filter(|&(i, p)| i != node.idx() && self.in_range(&me, p))
            .map(|(i, _)| NodeId(i as u32))
            .collect()
    }

    /// Puts one packet on the air. Always counts exactly one transmission for
    /// the sender, whatever happens to the receivers.
    pub fn transmit(
        &mut self,
        sender: NodeId,
        mode: TxMode,
        bytes: u32,
        now: SimTime,
        positions: &[Point],
    ) -> TxPlan {
        self.tx_count[sender.idx()] += 1;
        let arrive = now + self.airtime(bytes) + self.cfg.propagation_delay;
        let loss_prob = self.cfg.loss_prob;
        match mode {
            TxMode::Broadcast => {
                let mut deliveries = Vec::new();
                for n in self.neighbors_of(sender, positions) {
                    if !self.loss.bernoulli(loss_prob) {
                        deliveries.push((n, arrive));
                    }
                }
                TxPlan {
                    deliveries,
                    failure_at: None,
                }
            }
            TxMode::Unicast(target) => {
                let reachable = target != sender
                    && self.in_range(&positions[sender.idx()], &positions[target.idx()]);
                if reachable && !self.loss.bernoulli(loss_prob) {
                    TxPlan {
                        deliveries: vec![(target, arrive)],
                        failure_at: None,
                    }
                } else {
                    TxPlan {
                        deliveries: Vec::new(),
                        failure_at: Some(now + self.ack_timeout(bytes)),
                    }
                }
            }
        }
    }

    pub fn tx_count(&self, node: NodeId) -> u64 {
        self.tx_count[node.idx()]
    }

    pub fn total_tx(&self) -> u64 {
        self.tx_count.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::StreamLabel;

    fn radio(loss: f64, n: usize) -> Radio {
        Radio::new(
            RadioConfig {
                loss_prob: loss,
                ..RadioConfig::default()
            },
            n,
            RngStream::new(1, StreamLabel::Loss),
        )
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let r = radio(0.0, 2);
        let at = vec![Point::new(0.0, 0.0), Point::new(250.0, 0.0)];
        assert_eq!(r.neighbors_of(NodeId(0), &at), vec![NodeId(1)]);
        assert_eq!(r.neighbors_of(NodeId(1), &at), vec![NodeId(0)]);
        let apart = vec![Point::new(0.0, 0.0), Point::new(250.01, 0.0)];
        assert!(r.neighbors_of(NodeId(0), &apart).is_empty());
        assert!(r.neighbors_of(NodeId(1), &apart).is_empty());
    }

    #[test]
    fn colocated_nodes_form_clique() {
        let r = radio(0.0, 7);
        let at = vec![Point::new(5.0, 5.0); 7];
        for i in 0..7 {
            assert_eq!(r.neighbors_of(NodeId(i), &at).len(), 6);
        }
    }

    #[test]
    fn data_airtime_at_table_bandwidth() {
        let r = radio(0.0, 1);
        assert!((r.airtime(512) - 0.8192).abs() < 1e-12);
        assert!((r.ack_timeout(512) - (2.0 * 0.8192 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn lossless_broadcast_reaches_every_neighbor() {
        let mut r = radio(0.0, 5);
        let at = vec![
            Point::new(0.0, 0.0),
            Point::new(100.0, 0.0),
            Point::new(0.0, 100.0),
            Point::new(-100.0, 0.0),
            Point::new(900.0, 0.0),
        ];
        let plan = r.transmit(NodeId(0), TxMode::Broadcast, 32, 1.0, &at);
        assert_eq!(plan.deliveries.len(), 3);
        assert!(plan.deliveries.iter().all(|&(_, t)| (t - (1.0 + 0.0512)).abs() < 1e-12));
        assert_eq!(r.tx_count(NodeId(0)), 1);
    }

    #[test]
    fn total_loss_still_costs_a_transmission() {
        let mut r = radio(1.0, 4);
        let at = vec![Point::new(0.0, 0.0); 4];
        let plan = r.transmit(NodeId(2), TxMode::Broadcast, 32, 0.0, &at);
        assert!(plan.deliveries.is_empty());
        assert_eq!(r.tx_count(NodeId(2)), 1);
        let plan = r.transmit(NodeId(2), TxMode::Unicast(NodeId(1)), 32, 0.0, &at);
        assert!(plan.deliveries.is_empty());
        assert!(plan.failure_at.is_some());
        assert_eq!(r.total_tx(), 2);
    }

    #[test]
    fn unicast_out_of_range_fails_after_ack_timeout() {
        let mut r = radio(0.0, 2);
        let at = vec![Point::new(0.0, 0.0), Point::new(400.0, 0.0)];
        let plan = r.transmit(NodeId(0), TxMode::Unicast(NodeId(1)), 512, 3.0, &at);
        assert!(plan.deliveries.is_empty());
        assert!((plan.failure_at.unwrap() - (3.0 + 2.0 * 0.8192 + 0.1)).abs() < 1e-12);
    }
}
