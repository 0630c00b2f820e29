//! Flood-based reactive routing.
//!
//! Sources flood an RREQ with duplicate suppression and a TTL; only the
//! destination answers, and the RREP retraces the accumulated path. A broken
//! link sends an RERR back to the source, which floods again on its next
//! packet. With local repair on, the node holding the packet first tries its
//! own routes and then a TTL-limited repair flood before falling back to RERR.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::config::SimConfig;
use crate::kernel::{EventId, SimTime};
use crate::packet::{shortcut, Body, DataMsg, NodeId, Packet, RerrMsg, RrepMsg, RreqMsg};
use crate::protocol::{Protocol, HOP_LIMIT};
use crate::sim::Net;

const BUFFER_CAP: usize = 64;

#[derive(Debug, Clone)]
pub enum FloodTimer {
    Rebroadcast(RreqMsg),
    DiscoveryTimeout { dest: NodeId, seq: u32 },
    RepairTimeout { dest: NodeId, seq: u32 },
}

#[derive(Debug, Clone)]
struct Route {
    path: Vec<NodeId>,
    expires: SimTime,
}

#[derive(Debug)]
struct Pending {
    seq: u32,
    packets: Vec<DataMsg>,
    timer: EventId,
}

#[derive(Debug, Default)]
struct FloodNode {
    routes: BTreeMap<NodeId, Route>,
    seen: HashSet<(NodeId, u32)>,
    seq: u32,
    discoveries: BTreeMap<NodeId, Pending>,
    repairs: BTreeMap<NodeId, Pending>,
    /// Last route error sent per (broken next hop, source).
    rerr_sent: HashMap<(NodeId, NodeId), SimTime>,
}

pub struct FloodReactive {
    local_repair: bool,
    rreq_ttl: u32,
    repair_ttl: u32,
    route_timeout: SimTime,
    discovery_timeout: SimTime,
    repair_timeout: SimTime,
    jitter: SimTime,
    rerr_holdoff: SimTime,
    nodes: Vec<FloodNode>,
    rebroadcasts: HashMap<(NodeId, NodeId, u32), u32>,
}

impl FloodReactive {
    pub fn new(cfg: &SimConfig, local_repair: bool) -> Self {
        FloodReactive {
            local_repair,
            rreq_ttl: cfg.rreq_ttl,
            repair_ttl: cfg.repair_ttl,
            route_timeout: cfg.route_timeout,
            discovery_timeout: cfg.discovery_timeout,
            repair_timeout: cfg.repair_timeout,
            jitter: cfg.rreq_jitter,
            rerr_holdoff: cfg.rerr_holdoff,
            nodes: (0..cfg.n).map(|_| FloodNode::default()).collect(),
            rebroadcasts: HashMap::new(),
        }
    }

    pub fn local_repair(&self) -> bool {
        self.local_repair
    }

    /// The installed route from `node` to `dest`, expired or not.
    pub fn route(&self, node: NodeId, dest: NodeId) -> Option<&[NodeId]> {
        self.nodes[node.idx()]
            .routes
            .get(&dest)
            .map(|r| r.path.as_slice())
    }

    fn valid_route(&self, node: NodeId, dest: NodeId, now: SimTime) -> Option<Vec<NodeId>> {
        self.nodes[node.idx()]
            .routes
            .get(&dest)
            .filter(|r| r.expires > now)
            .map(|r| r.path.clone())
    }

    fn install(&mut self, node: NodeId, route: &[NodeId], now: SimTime) {
        let Some(i) = route.iter().position(|&x| x == node) else {
            return;
        };
        let path = route[i..].to_vec();
        if path.len() < 2 {
            return;
        }
        let dest = *path.last().expect("nonempty");
        self.nodes[node.idx()].routes.insert(
            dest,
            Route {
                path,
                expires: now + self.route_timeout,
            },
        );
    }

    fn invalidate_link(&mut self, node: NodeId, a: NodeId, b: NodeId) {
        self.nodes[node.idx()]
            .routes
            .retain(|_, r| !r.path.windows(2).any(|w| w[0] == a && w[1] == b));
    }

    fn send_data(&mut self, net: &mut Net<FloodTimer>, node: NodeId, msg: DataMsg) {
        let next = msg.next_hop().expect("routed packet has a next hop");
        if let Some(r) = self.nodes[node.idx()].routes.get_mut(&msg.dest) {
            r.expires = r.expires.max(net.now() + self.route_timeout);
        }
        net.unicast(node, next, None, Body::Data(msg));
    }

    fn flood(&mut self, net: &mut Net<FloodTimer>, node: NodeId, dest: NodeId, ttl: u32) -> u32 {
        let st = &mut self.nodes[node.idx()];
        st.seq += 1;
        let seq = st.seq;
        st.seen.insert((node, seq));
        net.broadcast(
            node,
            None,
            Body::Rreq(RreqMsg {
                origin: node,
                seq,
                dest,
                ttl,
                path: vec![node],
            }),
        );
        seq
    }

    /// Source side: route the packet or buffer it behind a discovery.
    fn originate(&mut self, net: &mut Net<FloodTimer>, mut msg: DataMsg) {
        let s = msg.holder();
        if let Some(path) = self.valid_route(s, msg.dest, net.now()) {
            msg.reroute(&path[1..]);
            self.send_data(net, s, msg);
            return;
        }
        let dest = msg.dest;
        if let Some(p) = self.nodes[s.idx()].discoveries.get_mut(&dest) {
            if p.packets.len() < BUFFER_CAP {
                p.packets.push(msg);
            }
            return;
        }
        let seq = self.flood(net, s, dest, self.rreq_ttl);
        let timer = net.timer(s, self.discovery_timeout, FloodTimer::DiscoveryTimeout { dest, seq });
        self.nodes[s.idx()].discoveries.insert(
            dest,
            Pending {
                seq,
                packets: vec![msg],
                timer,
            },
        );
    }

    fn send_rerr(&mut self, net: &mut Net<FloodTimer>, holder: NodeId, msg: &DataMsg, next: NodeId) {
        let mut back: Vec<NodeId> = msg.upstream().to_vec();
        back.reverse();
        if back.len() < 2 {
            return;
        }
        let now = net.now();
        let sent = &mut self.nodes[holder.idx()].rerr_sent;
        if sent.get(&(next, msg.origin)).is_some_and(|&t| now - t < self.rerr_holdoff) {
            return;
        }
        sent.insert((next, msg.origin), now);
        let to = back[1];
        net.unicast(
            holder,
            to,
            None,
            Body::Rerr(RerrMsg {
                source: msg.origin,
                dest: msg.dest,
                broken: (holder, next),
                back,
                pos: 0,
            }),
        );
    }

    fn on_break(&mut self, net: &mut Net<FloodTimer>, holder: NodeId, next: NodeId, msg: DataMsg) {
        self.invalidate_link(holder, holder, next);
        if msg.pos == 0 {
            let mut msg = msg;
            msg.route.truncate(1);
            self.originate(net, msg);
            return;
        }
        if !self.local_repair {
            self.send_rerr(net, holder, &msg, next);
            return;
        }
        let now = net.now();
        if let Some(path) = self.valid_route(holder, msg.dest, now) {
            if path[1] != next {
                let mut msg = msg;
                msg.reroute(&path[1..]);
                self.send_data(net, holder, msg);
                return;
            }
        }
        let dest = msg.dest;
        if let Some(p) = self.nodes[holder.idx()].repairs.get_mut(&dest) {
            if p.packets.len() < BUFFER_CAP {
                p.packets.push(msg);
            }
            return;
        }
        let seq = self.flood(net, holder, dest, self.repair_ttl);
        let timer = net.timer(holder, self.repair_timeout, FloodTimer::RepairTimeout { dest, seq });
        self.nodes[holder.idx()].repairs.insert(
            dest,
            Pending {
                seq,
                packets: vec![msg],
                timer,
            },
        );
    }

    fn on_rreq(&mut self, net: &mut Net<FloodTimer>, me: NodeId, rreq: RreqMsg) {
        if !self.nodes[me.idx()].seen.insert((rreq.origin, rreq.seq)) {
            return;
        }
        if me == rreq.dest {
            let mut route = rreq.path;
            route.push(me);
            let mut back = route.clone();
            back.reverse();
            let to = back[1];
            net.unicast(
                me,
                to,
                None,
                Body::Rrep(RrepMsg {
                    origin: rreq.origin,
                    seq: rreq.seq,
                    gratuitous: false,
                    dest: me,
                    route,
                    back,
                    pos: 0,
                }),
            );
        } else if rreq.ttl > 1 {
            let mut fwd = rreq;
            fwd.ttl -= 1;
            fwd.path.push(me);
            let delay = net.rng().uniform_range(0.0, self.jitter);
            net.timer(me, delay, FloodTimer::Rebroadcast(fwd));
        }
    }

    fn on_rrep(&mut self, net: &mut Net<FloodTimer>, me: NodeId, mut rrep: RrepMsg) {
        rrep.pos += 1;
        let now = net.now();
        self.install(me, &rrep.route, now);
        if rrep.pos + 1 < rrep.back.len() {
            let to = rrep.back[rrep.pos + 1];
            net.unicast(me, to, None, Body::Rrep(rrep));
            return;
        }
        if rrep.gratuitous || rrep.origin != me {
            return;
        }
        let dest = rrep.dest;
        let Some(path) = self.valid_route(me, dest, now) else {
            return;
        };
        let st = &mut self.nodes[me.idx()];
        if st.discoveries.get(&dest).is_some_and(|p| p.seq == rrep.seq) {
            let p = st.discoveries.remove(&dest).expect("checked");
            net.cancel(p.timer);
            for mut msg in p.packets {
                msg.reroute(&path[1..]);
                self.send_data(net, me, msg);
            }
        } else if st.repairs.get(&dest).is_some_and(|p| p.seq == rrep.seq) {
            let p = st.repairs.remove(&dest).expect("checked");
            net.cancel(p.timer);
            let mut informed = HashSet::new();
            for mut msg in p.packets {
                msg.reroute(&path[1..]);
                if informed.insert(msg.origin) {
                    self.send_gratuitous(net, me, &msg);
                }
                self.send_data(net, me, msg);
            }
        }
    }

    /// Tells the source about the repaired route along the packet's upstream.
    fn send_gratuitous(&mut self, net: &mut Net<FloodTimer>, me: NodeId, msg: &DataMsg) {
        let mut back = msg.upstream().to_vec();
        back.reverse();
        if back.len() < 2 {
            return;
        }
        let route = shortcut(&msg.route);
        let to = back[1];
        net.unicast(
            me,
            to,
            None,
            Body::Rrep(RrepMsg {
                origin: msg.origin,
                seq: 0,
                gratuitous: true,
                dest: msg.dest,
                route,
                back,
                pos: 0,
            }),
        );
    }

    fn on_rerr(&mut self, net: &mut Net<FloodTimer>, me: NodeId, mut rerr: RerrMsg) {
        rerr.pos += 1;
        self.invalidate_link(me, rerr.broken.0, rerr.broken.1);
        if rerr.pos + 1 < rerr.back.len() {
            let to = rerr.back[rerr.pos + 1];
            net.unicast(me, to, None, Body::Rerr(rerr));
        }
    }
}

impl Protocol for FloodReactive {
    type Timer = FloodTimer;

    fn name(&self) -> &'static str {
        if self.local_repair {
            "flood-reactive-lr"
        } else {
            "flood-reactive"
        }
    }

    fn on_node_up(&mut self, _net: &mut Net<FloodTimer>, _node: NodeId) {}

    fn on_receive(&mut self, net: &mut Net<FloodTimer>, me: NodeId, _from: NodeId, packet: Packet) {
        match packet.body {
            Body::Rreq(r) => self.on_rreq(net, me, r),
            Body::Rrep(r) => self.on_rrep(net, me, r),
            Body::Rerr(r) => self.on_rerr(net, me, r),
            Body::Data(mut msg) => {
                msg.pos += 1;
                debug_assert_eq!(msg.holder(), me);
                if msg.dest == me {
                    net.deliver_data(&msg);
                } else if msg.pos < HOP_LIMIT && msg.next_hop().is_some() {
                    self.send_data(net, me, msg);
                }
            }
            _ => {}
        }
    }

    fn on_tx_failed(&mut self, net: &mut Net<FloodTimer>, me: NodeId, to: NodeId, packet: Packet) {
        match packet.body {
            Body::Data(msg) => self.on_break(net, me, to, msg),
            _ => self.invalidate_link(me, me, to),
        }
    }

    fn on_timer(&mut self, net: &mut Net<FloodTimer>, me: NodeId, timer: FloodTimer) {
        match timer {
            FloodTimer::Rebroadcast(rreq) => {
                *self
                    .rebroadcasts
                    .entry((me, rreq.origin, rreq.seq))
                    .or_insert(0) += 1;
                net.broadcast(me, None, Body::Rreq(rreq));
            }
            FloodTimer::DiscoveryTimeout { dest, seq } => {
                let st = &mut self.nodes[me.idx()];
                if st.discoveries.get(&dest).is_some_and(|p| p.seq == seq) {
                    st.discoveries.remove(&dest);
                }
            }
            FloodTimer::RepairTimeout { dest, seq } => {
                let st = &mut self.nodes[me.idx()];
                if st.repairs.get(&dest).is_some_and(|p| p.seq == seq) {
                    let p = st.repairs.remove(&dest).expect("checked");
                    let mut informed = HashSet::new();
                    for msg in p.packets {
                        if informed.insert(msg.origin) {
                            let next = msg.next_hop().unwrap_or(me);
                            self.send_rerr(net, me, &msg, next);
                        }
                    }
                }
            }
        }
    }

    fn on_data(&mut self, net: &mut Net<FloodTimer>, msg: DataMsg) {
        if msg.dest == msg.origin {
            net.deliver_data(&msg);
            return;
        }
        self.originate(net, msg);
    }

    fn check_invariants(&self, _net: &Net<FloodTimer>, out: &mut Vec<String>) {
        for (&(node, origin, seq), &c) in &self.rebroadcasts {
            if c > 1 {
                out.push(format!(
                    "node {node} rebroadcast RREQ ({origin}, {seq}) {c} times"
                ));
            }
        }
        for (i, st) in self.nodes.iter().enumerate() {
            for (d, r) in &st.routes {
                if r.path.first() != Some(&NodeId(i as u32)) || r.path.last() != Some(d) {
                    out.push(format!("node {i} holds malformed route {:?} to {d}", r.path));
                }
            }
        }
    }
}
