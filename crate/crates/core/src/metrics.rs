//! Transmission counters and the per-run report.
//!
//! Overhead counts transmissions: a control packet forwarded over four hops
//! costs four. Liveness information piggybacked on data does not count.

use std::collections::{BTreeMap, HashSet};

use crate::error::SimError;
use crate::kernel::SimTime;
use crate::packet::{PacketClass, PacketKind};

#[derive(Debug, Clone, Default)]
pub struct Metrics {
    control_tx: BTreeMap<PacketKind, u64>,
    data_tx: u64,
    generated: u64,
    delivered: HashSet<(u32, u64)>,
    hop_counts: Vec<u32>,
    latencies: Vec<SimTime>,
}

impl Metrics {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts one radio transmission; the class comes from the kind table.
    pub fn record_tx(&mut self, kind: PacketKind) -> PacketClass {
        let class = kind.class();
        match class {
            PacketClass::Control => *self.control_tx.entry(kind).or_insert(0) += 1,
            PacketClass::Data => self.data_tx += 1,
        }
        class
    }

    pub fn record_generated(&mut self) {
        self.generated += 1;
    }

    /// Records a delivery; returns false when the same packet already arrived.
    pub fn record_delivered(&mut self, flow: u32, seq: u64, hops: u32, latency: SimTime) -> bool {
        if !self.delivered.insert((flow, seq)) {
            return false;
        }
        self.hop_counts.push(hops);
        self.latencies.push(latency);
        true
    }

    pub fn control_total(&self) -> u64 {
        self.control_tx.values().sum()
    }

    pub fn data_tx(&self) -> u64 {
        self.data_tx
    }

    pub fn control_of(&self, kind: PacketKind) -> u64 {
        self.control_tx.get(&kind).copied().unwrap_or(0)
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn delivered(&self) -> u64 {
        self.delivered.len() as u64
    }

    pub fn finalize(&self, n: usize) -> Result<MetricsReport, SimError> {
        if n == 0 {
            return Err(SimError::InvalidParameter(
                "node count must be positive".into(),
            ));
        }
        let control_total = self.control_total();
        let flows_delivered = self.delivered();
        let delivery_ratio = if self.generated == 0 {
            0.0
        } else {
            flows_delivered as f64 / self.generated as f64
        };
        Ok(MetricsReport {
            control_tx: self.control_tx.clone(),
            control_total,
            data_tx: self.data_tx,
            flows_generated: self.generated,
            flows_delivered,
            hop_counts: self.hop_counts.clone(),
            latencies: self.latencies.clone(),
            overhead_per_node: control_total as f64 / n as f64,
            delivery_ratio,
            nodes: n,
        })
    }
}

/// Immutable summary of one run.
///
/// `flows_generated`/`flows_delivered` count individual data packets.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub control_tx: BTreeMap<PacketKind, u64>,
    pub control_total: u64,
    pub data_tx: u64,
    pub flows_generated: u64,
    pub flows_delivered: u64,
    pub hop_counts: Vec<u32>,
    pub latencies: Vec<SimTime>,
    pub overhead_per_node: f64,
    pub delivery_ratio: f64,
    pub nodes: usize,
}

impl MetricsReport {
    pub fn control_of(&self, kind: PacketKind) -> u64 {
        self.control_tx.get(&kind).copied().unwrap_or(0)
    }

    pub fn total_tx(&self) -> u64 {
        self.control_total + self.data_tx
    }

    pub fn mean_hops(&self) -> f64 {
        mean(self.hop_counts.iter().map(|&h| h as f64))
    }

    pub fn mean_latency(&self) -> f64 {
        mean(self.latencies.iter().copied())
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_drives_counters() {
        let mut m = Metrics::new();
        assert_eq!(m.record_tx(PacketKind::Hello), PacketClass::Control);
        assert_eq!(m.control_total(), 1);
        m.record_tx(PacketKind::Data);
        assert_eq!(m.control_total(), 1);
        assert_eq!(m.data_tx(), 1);
        m.record_tx(PacketKind::MonitorAliveRequest);
        m.record_tx(PacketKind::MonitorAliveReply);
        assert_eq!(m.control_total(), 3);
    }

    #[test]
    fn overhead_per_node_arithmetic() {
        let mut m = Metrics::new();
        let r = m.finalize(10).unwrap();
        assert_eq!(r.overhead_per_node, 0.0);
        for _ in 0..500 {
            m.record_tx(PacketKind::Rreq);
        }
        let r = m.finalize(100).unwrap();
        assert_eq!(r.overhead_per_node, 5.0);
        assert!(m.finalize(0).is_err());
    }

    #[test]
    fn duplicate_delivery_counted_once() {
        let mut m = Metrics::new();
        m.record_generated();
        assert!(m.record_delivered(1, 7, 3, 0.5));
        assert!(!m.record_delivered(1, 7, 3, 0.6));
        let r = m.finalize(2).unwrap();
        assert_eq!(r.delivery_ratio, 1.0);
        assert_eq!(r.mean_hops(), 3.0);
    }
}
