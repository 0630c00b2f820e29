//! Proactive distance-vector routing with periodic full-table broadcasts.
//!
//! Every node advertises its whole table each `update_period` at a random
//! phase, and optionally sends rate-limited triggered updates when its table
//! changes. A route is replaced by one from its current next hop, by a newer
//! sequence number that is no longer, or by a strictly shorter one. Broken
//! links advertise an infinite metric with an odd sequence number.

use std::collections::BTreeMap;

use crate::config::SimConfig;
use crate::kernel::{EventId, SimTime};
use crate::packet::{Body, DataMsg, DvEntry, NodeId, Packet};
use crate::protocol::{Protocol, HOP_LIMIT};
use crate::sim::Net;

pub const INF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DvTimer {
    Periodic,
    Triggered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvRoute {
    pub next_hop: NodeId,
    pub hops: u32,
    pub seq: u64,
    pub updated_at: SimTime,
}

#[derive(Debug, Default)]
struct DvNode {
    table: BTreeMap<NodeId, DvRoute>,
    own_seq: u64,
    last_sent: Option<SimTime>,
    triggered: Option<EventId>,
}

pub struct Proactive {
    update_period: SimTime,
    entry_timeout: SimTime,
    triggered_updates: bool,
    min_interval: SimTime,
    nodes: Vec<DvNode>,
    broadcasts: Vec<u64>,
}

impl Proactive {
    pub fn new(cfg: &SimConfig) -> Self {
        Proactive {
            update_period: cfg.update_period,
            entry_timeout: cfg.entry_timeout,
            triggered_updates: cfg.triggered_updates,
            min_interval: cfg.triggered_min_interval,
            nodes: (0..cfg.n).map(|_| DvNode::default()).collect(),
            broadcasts: vec![0; cfg.n],
        }
    }

    /// Current usable route from `node` to `dest`.
    pub fn route(&self, node: NodeId, dest: NodeId) -> Option<DvRoute> {
        self.nodes[node.idx()]
            .table
            .get(&dest)
            .copied()
            .filter(|r| r.hops != INF)
    }

    /// Table broadcasts (periodic and triggered) sent by `node`.
    pub fn broadcasts(&self, node: NodeId) -> u64 {
        self.broadcasts[node.idx()]
    }

    fn advertise(&mut self, net: &mut Net<DvTimer>, me: NodeId) {
        let now = net.now();
        let timeout = self.entry_timeout;
        let st = &mut self.nodes[me.idx()];
        st.table.retain(|_, r| now - r.updated_at <= timeout);
        let mut entries = Vec::with_capacity(st.table.len() + 1);
        entries.push(DvEntry {
            dest: me,
            hops: 0,
            seq: st.own_seq,
        });
        entries.extend(st.table.iter().map(|(&dest, r)| DvEntry {
            dest,
            hops: r.hops,
            seq: r.seq,
        }));
        st.last_sent = Some(now);
        if let Some(id) = st.triggered.take() {
            net.cancel(id);
        }
        self.broadcasts[me.idx()] += 1;
        net.broadcast(
            me,
            None,
            Body::TableUpdate {
                seq_origin: me,
                entries,
            },
        );
    }

    fn schedule_triggered(&mut self, net: &mut Net<DvTimer>, me: NodeId) {
        if !self.triggered_updates {
            return;
        }
        let st = &mut self.nodes[me.idx()];
        if st.triggered.is_some() {
            return;
        }
        let now = net.now();
        let earliest = st.last_sent.map_or(now, |t| t + self.min_interval);
        st.triggered = Some(net.timer(me, (earliest - now).max(0.0), DvTimer::Triggered));
    }

    fn merge(&mut self, net: &mut Net<DvTimer>, me: NodeId, from: NodeId, entries: &[DvEntry]) {
        let now = net.now();
        let mut changed = false;
        let st = &mut self.nodes[me.idx()];
        for e in entries {
            if e.dest == me {
                continue;
            }
            let hops = if e.hops == INF { INF } else { e.hops + 1 };
            let cand = DvRoute {
                next_hop: from,
                hops,
                seq: e.seq,
                updated_at: now,
            };
            let accept = match st.table.get(&e.dest) {
                None => hops != INF,
                Some(cur) if cur.next_hop == from => {
                    e.seq >= cur.seq || hops == INF
                }
                Some(cur) => {
                    (e.seq > cur.seq && hops <= cur.hops)
                        || (hops < cur.hops && e.seq >= cur.seq)
                        || (cur.hops == INF && hops != INF && e.seq > cur.seq)
                }
            };
            if accept {
                let prev = st.table.insert(e.dest, cand);
                if prev.is_none_or(|p| p.hops != cand.hops || p.next_hop != cand.next_hop) {
                    changed = true;
                }
            }
        }
        if changed {
            self.schedule_triggered(net, me);
        }
    }

    fn link_broken(&mut self, net: &mut Net<DvTimer>, me: NodeId, next: NodeId) {
        let now = net.now();
        let mut changed = false;
        for r in self.nodes[me.idx()].table.values_mut() {
            if r.next_hop == next && r.hops != INF {
                r.hops = INF;
                r.seq |= 1;
                r.updated_at = now;
                changed = true;
            }
        }
        if changed {
            self.schedule_triggered(net, me);
        }
    }

    fn forward(&mut self, net: &mut Net<DvTimer>, me: NodeId, mut msg: DataMsg) {
        if msg.pos >= HOP_LIMIT {
            return;
        }
        if let Some(r) = self.route(me, msg.dest) {
            msg.reroute(&[r.next_hop]);
            net.unicast(me, r.next_hop, None, Body::Data(msg));
        }
    }
}

impl Protocol for Proactive {
    type Timer = DvTimer;

    fn name(&self) -> &'static str {
        "proactive"
    }

    fn on_node_up(&mut self, net: &mut Net<DvTimer>, node: NodeId) {
        let phase = net.rng().uniform_range(0.0, self.update_period);
        net.timer(node, phase, DvTimer::Periodic);
    }

    fn on_receive(&mut self, net: &mut Net<DvTimer>, me: NodeId, from: NodeId, packet: Packet) {
        match packet.body {
            Body::TableUpdate { entries, .. } => self.merge(net, me, from, &entries),
            Body::Data(mut msg) => {
                msg.pos += 1;
                if msg.dest == me {
                    net.deliver_data(&msg);
                } else {
                    self.forward(net, me, msg);
                }
            }
            _ => {}
        }
    }

    fn on_tx_failed(&mut self, net: &mut Net<DvTimer>, me: NodeId, to: NodeId, _packet: Packet) {
        self.link_broken(net, me, to);
    }

    fn on_timer(&mut self, net: &mut Net<DvTimer>, me: NodeId, timer: DvTimer) {
        match timer {
            DvTimer::Periodic => {
                self.nodes[me.idx()].own_seq += 2;
                self.advertise(net, me);
                net.timer(me, self.update_period, DvTimer::Periodic);
            }
            DvTimer::Triggered => {
                self.nodes[me.idx()].triggered = None;
                self.advertise(net, me);
            }
        }
    }

    fn on_data(&mut self, net: &mut Net<DvTimer>, msg: DataMsg) {
        if msg.dest == msg.origin {
            net.deliver_data(&msg);
            return;
        }
        let me = msg.origin;
        self.forward(net, me, msg);
    }

    fn check_invariants(&self, _net: &Net<DvTimer>, out: &mut Vec<String>) {
        for (i, st) in self.nodes.iter().enumerate() {
            if st.table.contains_key(&NodeId(i as u32)) {
                out.push(format!("node {i} holds a route to itself"));
            }
            for (d, r) in &st.table {
                if r.hops == 0 {
                    out.push(format!("node {i} holds a zero-hop route to {d}"));
                }
            }
        }
    }
}
