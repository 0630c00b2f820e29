//! One simulation run: placement, mobility, radio, CBR traffic and a routing
//! protocol wired to the event kernel.

use std::collections::VecDeque;
use std::hash::{DefaultHasher, Hash, Hasher};

use crate::config::{Placement, SimConfig};
use crate::error::{Result, SimError};
use crate::kernel::{EventId, RngStream, Scheduler, SimTime, StreamLabel, TraceTag};
use crate::metrics::{Metrics, MetricsReport};
use crate::mobility::{Mobility, MobilityEvent, Point};
use crate::packet::{Body, DataMsg, NodeId, Packet, PacketKind};
use crate::protocol::Protocol;
use crate::radio::{Radio, TxMode};

#[derive(Debug, Clone)]
pub enum EventKind<T> {
    NodeUp(NodeId),
    Deliver {
        to: NodeId,
        from: NodeId,
        packet: Packet,
    },
    /// The sender's unicast to `to` went unacknowledged.
    TxFailed {
        node: NodeId,
        to: NodeId,
        packet: Packet,
    },
    Timer {
        node: NodeId,
        timer: T,
    },
    Mobility {
        node: usize,
        generation: u32,
    },
    Traffic(usize),
    Relocate {
        node: usize,
        to: Point,
    },
    Sample,
}

impl<T> TraceTag for EventKind<T> {
    fn trace_tag(&self) -> u64 {
        let mut h = DefaultHasher::new();
        match self {
            EventKind::NodeUp(n) => (0u8, n.0).hash(&mut h),
            EventKind::Deliver { to, from, packet } => {
                (1u8, to.0, from.0, packet.uid, packet.kind()).hash(&mut h)
            }
            EventKind::TxFailed { node, to, packet } => {
                (2u8, node.0, to.0, packet.uid).hash(&mut h)
            }
            EventKind::Timer { node, .. } => (3u8, node.0).hash(&mut h),
            EventKind::Mobility { node, generation } => (4u8, *node, *generation).hash(&mut h),
            EventKind::Traffic(f) => (5u8, *f).hash(&mut h),
            EventKind::Relocate { node, to } => {
                (6u8, *node, to.x.to_bits(), to.y.to_bits()).hash(&mut h)
            }
            EventKind::Sample => 7u8.hash(&mut h),
        }
        h.finish()
    }
}

/// One line of the optional protocol trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub node: NodeId,
    pub action: &'static str,
    pub kind: PacketKind,
}

/// Everything a protocol may touch: clock, timers, radio, positions, metrics.
pub struct Net<T> {
    cfg: SimConfig,
    sched: Scheduler<EventKind<T>>,
    radio: Radio,
    mobility: Mobility,
    metrics: Metrics,
    rng: RngStream,
    next_uid: u64,
    up: Vec<bool>,
    trace: Vec<TraceRecord>,
    violations: Vec<String>,
}

impl<T> Net<T> {
    pub fn cfg(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn n(&self) -> usize {
        self.up.len()
    }

    pub fn is_up(&self, node: NodeId) -> bool {
        self.up[node.idx()]
    }

    pub fn rng(&mut self) -> &mut RngStream {
        &mut self.rng
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn radio(&self) -> &Radio {
        &self.radio
    }

    pub fn position(&self, node: NodeId) -> Point {
        self.mobility.position_at(node.idx(), self.now())
    }

    pub fn positions(&self) -> Vec<Point> {
        let t = self.now();
        (0..self.n()).map(|i| self.mobility.position_at(i, t)).collect()
    }

    /// Ground-truth unit-disk neighbors right now.
    pub fn true_neighbors(&self, node: NodeId) -> Vec<NodeId> {
        self.radio.neighbors_of(node, &self.positions())
    }

    /// Ground-truth adjacency lists for every node right now.
    pub fn adjacency(&self) -> Vec<Vec<NodeId>> {
        let pos = self.positions();
        (0..self.n())
            .map(|i| self.radio.neighbors_of(NodeId(i as u32), &pos))
            .collect()
    }

    pub fn airtime(&self, kind_bytes: u32) -> SimTime {
        self.radio.airtime(kind_bytes)
    }

    pub fn timer(&mut self, node: NodeId, delay: SimTime, timer: T) -> EventId {
        self.sched
            .schedule_in(delay.max(0.0), EventKind::Timer { node, timer })
    }

    pub fn cancel(&mut self, id: EventId) -> bool {
        self.sched.cancel(id)
    }

    pub fn broadcast(&mut self, from: NodeId, sender_monitor: Option<NodeId>, body: Body) {
        self.transmit(from, TxMode::Broadcast, sender_monitor, body);
    }

    pub fn unicast(&mut self, from: NodeId, to: NodeId, sender_monitor: Option<NodeId>, body: Body) {
        self.transmit(from, TxMode::Unicast(to), sender_monitor, body);
    }

    fn transmit(&mut self, from: NodeId, mode: TxMode, sender_monitor: Option<NodeId>, body: Body) {
        let packet = Packet {
            uid: self.next_uid,
            sender_monitor,
            body,
        };
        self.next_uid += 1;
        let bytes = packet.size_bytes(self.cfg.data_size);
        let now = self.now();
        let positions = self.positions();
        let plan = self.radio.transmit(from, mode, bytes, now, &positions);
        self.metrics.record_tx(packet.kind());
        if self.cfg.trace {
            self.trace.push(TraceRecord {
                time: now,
                node: from,
                action: "send",
                kind: packet.kind(),
            });
        }
        if let Some(at) = plan.failure_at {
            let TxMode::Unicast(to) = mode else {
                unreachable!("only unicasts fail")
            };
            self.sched.schedule(
                at,
                EventKind::TxFailed {
                    node: from,
                    to,
                    packet,
                },
            );
            return;
        }
        let last = plan.deliveries.len().saturating_sub(1);
        let mut packet = Some(packet);
        for (i, (to, at)) in plan.deliveries.into_iter().enumerate() {
            let p = if i == last {
                packet.take().expect("moved once")
            } else {
                packet.clone().expect("still held")
            };
            self.sched.schedule(at, EventKind::Deliver { to, from, packet: p });
        }
    }

    /// Records arrival of a data packet at its destination.
    pub fn deliver_data(&mut self, msg: &DataMsg) {
        let latency = self.now() - msg.created_at;
        self.metrics
            .record_delivered(msg.flow, msg.seq, msg.hops() as u32, latency);
        if self.cfg.trace {
            self.trace.push(TraceRecord {
                time: self.now(),
                node: msg.dest,
                action: "deliver",
                kind: PacketKind::Data,
            });
        }
    }

    /// Notes a protocol action in the trace (no-op unless tracing is on).
    pub fn note(&mut self, node: NodeId, action: &'static str, kind: PacketKind) {
        if self.cfg.trace {
            self.trace.push(TraceRecord {
                time: self.now(),
                node,
                action,
                kind,
            });
        }
    }

    /// Records an invariant violation; the run aborts at the next check.
    pub fn violation(&mut self, detail: String) {
        self.violations.push(detail);
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }
}

#[derive(Debug, Clone)]
struct Flow {
    src: NodeId,
    dst: NodeId,
    stop: SimTime,
    interval: SimTime,
    next_seq: u64,
    remaining: Option<u64>,
}

/// Final outcome of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub report: MetricsReport,
    pub trace_hash: u64,
    pub events: u64,
    pub invariant_checks: u64,
}

pub struct Simulation<P: Protocol> {
    pub net: Net<P::Timer>,
    pub proto: P,
    flows: Vec<Flow>,
    mob_gen: Vec<u32>,
    invariant_checks: u64,
}

/// Draws initial positions according to the placement policy.
pub fn place_nodes(cfg: &SimConfig) -> Result<Vec<Point>> {
    let arena = cfg.arena();
    let mut rng = RngStream::new(cfg.seed, StreamLabel::Placement);
    match &cfg.placement {
        Placement::Fixed(p) => Ok(p.clone()),
        Placement::Uniform => Ok((0..cfg.n).map(|_| arena.random_point(&mut rng)).collect()),
        Placement::Connected => {
            for _ in 0..10_000 {
                let pts: Vec<Point> = (0..cfg.n).map(|_| arena.random_point(&mut rng)).collect();
                if is_connected(&pts, cfg.range) {
                    return Ok(pts);
                }
            }
            Err(SimError::Placement(format!(
                "no connected placement of {} nodes in {}x{} with range {} after 10000 draws",
                cfg.n, cfg.area_width, cfg.area_height, cfg.range
            )))
        }
    }
}

/// Connectivity of the unit-disk graph over `pts`.
pub fn is_connected(pts: &[Point], range: f64) -> bool {
    if pts.is_empty() {
        return true;
    }
    let mut seen = vec![false; pts.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..pts.len() {
            if !seen[v] && pts[u].dist(&pts[v]) <= range {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

impl<P: Protocol> Simulation<P> {
    /// Builds a run from a validated config. Random flows are drawn from the
    /// traffic stream; node start-up times from the protocol stream.
    pub fn new(cfg: SimConfig, proto: P) -> Result<Self> {
        cfg.validate()?;
        let initial = place_nodes(&cfg)?;
        let n = cfg.n;
        let mobility = Mobility::new(cfg.mobility_params(), initial, cfg.seed);
        let radio = Radio::new(
            cfg.radio_config(),
            n,
            RngStream::new(cfg.seed, StreamLabel::Loss),
        );
        let mut sched = Scheduler::new();
        let mut rng = RngStream::new(cfg.seed, StreamLabel::Protocol);
        for i in 0..n {
            let t = rng.uniform_range(0.0, cfg.startup_jitter);
            sched.schedule(t, EventKind::NodeUp(NodeId(i as u32)));
        }
        for i in 0..n {
            if let MobilityEvent::PauseUntil(t) = mobility.initial_event(i) {
                if t <= cfg.sim_time {
                    sched.schedule(t, EventKind::Mobility { node: i, generation: 0 });
                }
            }
        }
        sched.schedule(cfg.sample_interval, EventKind::Sample);

        let mut traffic = RngStream::new(cfg.seed, StreamLabel::Traffic);
        let mut flows = Vec::with_capacity(cfg.num_flows);
        let stop = cfg.sim_time - cfg.traffic_drain;
        for f in 0..cfg.num_flows {
            let src = traffic.index(n);
            let mut dst = traffic.index(n - 1);
            if dst >= src {
                dst += 1;
            }
            let start = cfg.traffic_start + traffic.uniform();
            flows.push(Flow {
                src: NodeId(src as u32),
                dst: NodeId(dst as u32),
                stop,
                interval: 1.0 / cfg.cbr_rate,
                next_seq: 0,
                remaining: None,
            });
            if start <= stop {
                sched.schedule(start, EventKind::Traffic(f));
            }
        }

        Ok(Simulation {
            net: Net {
                rng,
                sched,
                radio,
                mobility,
                metrics: Metrics::new(),
                next_uid: 0,
                up: vec![false; n],
                trace: Vec::new(),
                violations: Vec::new(),
                cfg,
            },
            proto,
            flows,
            mob_gen: vec![0; n],
            invariant_checks: 0,
        })
    }

    /// Adds a CBR flow; `count` bounds the number of packets when given.
    pub fn add_flow(
        &mut self,
        src: NodeId,
        dst: NodeId,
        start: SimTime,
        rate: f64,
        count: Option<u64>,
    ) -> usize {
        let id = self.flows.len();
        self.flows.push(Flow {
            src,
            dst,
            stop: self.net.cfg.sim_time - self.net.cfg.traffic_drain,
            interval: 1.0 / rate,
            next_seq: 0,
            remaining: count,
        });
        self.net.sched.schedule(start, EventKind::Traffic(id));
        id
    }

    /// Sends exactly one data packet from `src` to `dst` at time `at`.
    pub fn inject(&mut self, at: SimTime, src: NodeId, dst: NodeId) -> usize {
        self.add_flow(src, dst, at, 1.0, Some(1))
    }

    /// Scripted move: `node` jumps to `to` at time `at` and stays there.
    pub fn relocate_at(&mut self, at: SimTime, node: NodeId, to: Point) {
        self.net
            .sched
            .schedule(at, EventKind::Relocate { node: node.idx(), to });
    }

    pub fn now(&self) -> SimTime {
        self.net.now()
    }

    /// Advances the run to `t`, checking invariants at every sample tick.
    pub fn run_until(&mut self, t: SimTime) -> Result<()> {
        while let Some(ev) = self.net.sched.pop_until(t) {
            self.dispatch(ev.kind)?;
        }
        self.net.sched.advance_to(t);
        Ok(())
    }

    /// Runs to the configured end time and produces the report.
    pub fn run(mut self) -> Result<RunResult> {
        let end = self.net.cfg.sim_time;
        self.run_until(end)?;
        self.check()?;
        self.finish()
    }

    pub fn finish(self) -> Result<RunResult> {
        Ok(RunResult {
            report: self.net.metrics.finalize(self.net.n())?,
            trace_hash: self.net.sched.trace_hash(),
            events: self.net.sched.dispatched(),
            invariant_checks: self.invariant_checks,
        })
    }

    /// Runs every invariant checker now.
    pub fn check(&mut self) -> Result<()> {
        self.invariant_checks += 1;
        let mut out = std::mem::take(&mut self.net.violations);
        self.proto.check_invariants(&self.net, &mut out);
        let m = &self.net.metrics;
        let counted = m.control_total() + m.data_tx();
        if counted != self.net.radio.total_tx() {
            out.push(format!(
                "metrics count {counted} transmissions, radio counted {}",
                self.net.radio.total_tx()
            ));
        }
        if m.delivered() > m.generated() {
            out.push(format!(
                "{} deliveries exceed {} generated packets",
                m.delivered(),
                m.generated()
            ));
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(SimError::Invariant {
                point: format!("t={:.6}", self.now()),
                seed: self.net.cfg.seed,
                detail: out.join("; "),
            })
        }
    }

    fn dispatch(&mut self, kind: EventKind<P::Timer>) -> Result<()> {
        let net = &mut self.net;
        match kind {
            EventKind::NodeUp(node) => {
                net.up[node.idx()] = true;
                self.proto.on_node_up(net, node);
            }
            EventKind::Deliver { to, from, packet } => {
                if net.up[to.idx()] {
                    if net.cfg.trace {
                        net.note(to, "recv", packet.kind());
                    }
                    self.proto.on_receive(net, to, from, packet);
                }
            }
            EventKind::TxFailed { node, to, packet } => {
                net.note(node, "tx_failed", packet.kind());
                self.proto.on_tx_failed(net, node, to, packet);
            }
            EventKind::Timer { node, timer } => self.proto.on_timer(net, node, timer),
            EventKind::Mobility { node, generation } => {
                if generation == self.mob_gen[node] {
                    let now = net.now();
                    let next = if net.mobility.is_paused(node) {
                        net.mobility.next_leg(node, now)
                    } else {
                        net.mobility.arrive(node, now)
                    };
                    match next {
                        MobilityEvent::PauseUntil(t) | MobilityEvent::ArriveAt(t) => {
                            if t <= net.cfg.sim_time {
                                net.sched
                                    .schedule(t, EventKind::Mobility { node, generation });
                            }
                        }
                        MobilityEvent::Never => {}
                    }
                }
            }
            EventKind::Relocate { node, to } => {
                self.mob_gen[node] += 1;
                let now = net.now();
                net.mobility.relocate(node, to, now);
            }
            EventKind::Traffic(f) => {
                let now = net.now();
                let flow = &mut self.flows[f];
                if now > flow.stop || flow.remaining == Some(0) {
                    return Ok(());
                }
                let msg = DataMsg {
                    flow: f as u32,
                    seq: flow.next_seq,
                    origin: flow.src,
                    dest: flow.dst,
                    created_at: now,
                    route: vec![flow.src],
                    pos: 0,
                    repaired: false,
                };
                flow.next_seq += 1;
                if let Some(r) = flow.remaining.as_mut() {
                    *r -= 1;
                }
                let more = flow.remaining != Some(0) && now + flow.interval <= flow.stop;
                if more {
                    net.sched.schedule_in(flow.interval, EventKind::Traffic(f));
                }
                net.metrics.record_generated();
                if net.up[msg.origin.idx()] {
                    self.proto.on_data(net, msg);
                }
            }
            EventKind::Sample => {
                let next = net.now() + net.cfg.sample_interval;
                if next <= net.cfg.sim_time {
                    net.sched.schedule(next, EventKind::Sample);
                }
                self.check()?;
            }
        }
        Ok(())
    }
}
