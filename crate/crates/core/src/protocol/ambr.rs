//! Adaptive monitor-based routing.
//!
//! Nodes discover neighbors through hello sessions. An unaffiliated node whose
//! neighbor count reaches `T` elects itself monitor; nodes that hear a monitor
//! affiliate with it and keep the affiliation alive with periodic requests,
//! which any data exchanged with the monitor makes unnecessary.
//!
//! A source delivers directly to a neighbor, follows a cached route, or hands
//! the packet to its monitor. A monitor that cannot resolve the destination
//! runs a depth-bounded query over adjacent monitors; the first reply is
//! cached and sent back to the source. When a link on a route breaks, the
//! monitor of the node holding the packet repairs the route from there.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use crate::config::SimConfig;
use crate::kernel::{EventId, SimTime};
use crate::packet::{
    shortcut, Body, DataMsg, NodeId, Packet, QueryId, ReplyKind, RouteQueryMsg, RouteReplyMsg,
    UnreachableMsg,
};
use crate::protocol::{Protocol, HOP_LIMIT};
use crate::sim::Net;

const QUEUE_CAP: usize = 64;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum AmbrTimer {
    HelloRetry { session: u32 },
    Election,
    AliveTick,
    AliveReplyTimeout,
    MemberCheck,
    QueryTimeout(QueryId),
    QueueExpire { flow: u32, seq: u64 },
}

impl AmbrStats {
    fn drop(&mut self, reason: &'static str, count: u64) {
        self.dropped += count;
        *self.drop_reasons.entry(reason).or_insert(0) += count;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Monitor,
    Affiliated(NodeId),
    Unaffiliated,
}

#[derive(Debug, Clone, Default)]
pub struct AmbrStats {
    pub hello_sessions: u64,
    pub elections: u64,
    pub demotions: u64,
    pub affiliations: u64,
    pub queries: u64,
    pub repair_queries: u64,
    /// Repair queries originated by the monitor that is also the packet's source.
    pub repair_queries_at_source: u64,
    pub unreachable_at_source: u64,
    pub discarded_replies: u64,
    pub query_timeouts: u64,
    /// Queries whose destination no monitor knew when the query was issued.
    pub uncovered_queries: u64,
    pub dropped: u64,
    /// `dropped` split by the point where the packet was given up.
    pub drop_reasons: BTreeMap<&'static str, u64>,
    /// Route cached at the origin for every answered query.
    pub first_replies: BTreeMap<QueryId, Vec<NodeId>>,
}

#[derive(Debug, Clone, Copy)]
struct Neighbor {
    last_heard: SimTime,
    is_monitor: bool,
    affiliated: bool,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    path: Vec<NodeId>,
    learned_at: SimTime,
    from_query: Option<QueryId>,
}

#[derive(Debug, Clone, Copy)]
struct Session {
    id: u32,
    attempts: u32,
    timer: EventId,
}

#[derive(Debug)]
struct PendingQuery {
    dest: NodeId,
    packets: Vec<DataMsg>,
    unreachable_sent: bool,
    timer: EventId,
}

#[derive(Debug, Default)]
struct Node {
    up: bool,
    is_monitor: bool,
    monitor: Option<NodeId>,
    members: BTreeMap<NodeId, SimTime>,
    neighbors: BTreeMap<NodeId, Neighbor>,
    cache: BTreeMap<NodeId, CacheEntry>,
    session: Option<Session>,
    session_seq: u32,
    election: Option<EventId>,
    queue: VecDeque<DataMsg>,
    last_contact: SimTime,
    alive_tick: Option<EventId>,
    alive_wait: Option<EventId>,
    member_check: Option<EventId>,
    replied: HashSet<(NodeId, u32)>,
    seen_queries: HashSet<QueryId>,
    queries: BTreeMap<QueryId, PendingQuery>,
    answered: HashSet<QueryId>,
    query_seq: u32,
}

enum Fanout {
    Sent,
    NoMonitors,
    DepthExceeded,
}

#[derive(Debug, Clone)]
struct Params {
    t: usize,
    dl_max: u32,
    alive_period: SimTime,
    cache_ttl: SimTime,
    query_timeout: SimTime,
    hello_retry: SimTime,
    hello_jitter: f64,
    hello_attempts: u32,
    piggyback_window: SimTime,
    alive_reply_timeout: SimTime,
    neighbor_timeout: SimTime,
    liveness_timeout: SimTime,
    queue_timeout: SimTime,
    election_slot: SimTime,
    demote_threshold: usize,
    nm_max_hops: u32,
}

pub struct Ambr {
    p: Params,
    nodes: Vec<Node>,
    stats: AmbrStats,
}

impl Ambr {
    pub fn new(cfg: &SimConfig) -> Self {
        Ambr {
            p: Params {
                t: cfg.monitor_threshold,
                dl_max: cfg.dl_max,
                alive_period: cfg.alive_period,
                cache_ttl: cfg.cache_ttl,
                query_timeout: cfg.query_timeout,
                hello_retry: cfg.hello_retry,
                hello_jitter: cfg.hello_jitter,
                hello_attempts: cfg.hello_attempts,
                piggyback_window: cfg.piggyback_window,
                alive_reply_timeout: cfg.alive_reply_timeout,
                neighbor_timeout: cfg.neighbor_timeout,
                liveness_timeout: cfg.liveness_timeout,
                queue_timeout: cfg.queue_timeout,
                election_slot: cfg.election_slot,
                demote_threshold: cfg.demote_threshold,
                nm_max_hops: cfg.nm_max_hops,
            },
            nodes: (0..cfg.n).map(|_| Node::default()).collect(),
            stats: AmbrStats::default(),
        }
    }

    pub fn role(&self, node: NodeId) -> Role {
        let st = &self.nodes[node.idx()];
        match (st.is_monitor, st.monitor) {
            (true, _) => Role::Monitor,
            (false, Some(m)) => Role::Affiliated(m),
            (false, None) => Role::Unaffiliated,
        }
    }

    pub fn monitors(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_monitor)
            .map(|i| NodeId(i as u32))
            .collect()
    }

    pub fn members(&self, node: NodeId) -> Vec<NodeId> {
        self.nodes[node.idx()].members.keys().copied().collect()
    }

    pub fn cached_route(&self, node: NodeId, dest: NodeId) -> Option<&[NodeId]> {
        self.nodes[node.idx()]
            .cache
            .get(&dest)
            .map(|c| c.path.as_slice())
    }

    pub fn in_session(&self, node: NodeId) -> bool {
        self.nodes[node.idx()].session.is_some()
    }

    pub fn stats(&self) -> &AmbrStats {
        &self.stats
    }

    /// Header field carried by every packet `me` sends.
    fn sm(&self, me: NodeId) -> Option<NodeId> {
        let st = &self.nodes[me.idx()];
        if st.is_monitor {
            Some(me)
        } else {
            st.monitor
        }
    }

    fn send(&self, net: &mut Net<AmbrTimer>, me: NodeId, to: NodeId, body: Body) {
        net.unicast(me, to, self.sm(me), body);
    }

    fn bcast(&self, net: &mut Net<AmbrTimer>, me: NodeId, body: Body) {
        net.broadcast(me, self.sm(me), body);
    }

    fn is_fresh(&self, me: NodeId, x: NodeId, now: SimTime) -> bool {
        self.nodes[me.idx()]
            .neighbors
            .get(&x)
            .is_some_and(|nb| now - nb.last_heard <= self.p.neighbor_timeout)
    }

    /// First-hop connectivity as the node knows it; monitors also count members.
    pub fn count(&self, me: NodeId, now: SimTime) -> usize {
        let st = &self.nodes[me.idx()];
        let fresh = st
            .neighbors
            .iter()
            .filter(|(_, nb)| now - nb.last_heard <= self.p.neighbor_timeout)
            .map(|(&id, _)| id);
        if st.is_monitor {
            let mut all: BTreeSet<NodeId> = st.members.keys().copied().collect();
            all.extend(fresh);
            all.len()
        } else {
            fresh.count()
        }
    }

    /// Whether `me` believes `d` is one hop away.
    fn knows(&self, me: NodeId, d: NodeId, now: SimTime) -> bool {
        d == me
            || self.is_fresh(me, d, now)
            || (self.nodes[me.idx()].is_monitor && self.nodes[me.idx()].members.contains_key(&d))
    }

    fn cached(&self, me: NodeId, d: NodeId, now: SimTime) -> Option<Vec<NodeId>> {
        self.nodes[me.idx()]
            .cache
            .get(&d)
            .filter(|c| now - c.learned_at < self.p.cache_ttl && c.path.first() == Some(&me))
            .map(|c| c.path.clone())
    }

    fn invalidate_link(&mut self, me: NodeId, a: NodeId, b: NodeId) {
        self.nodes[me.idx()]
            .cache
            .retain(|_, c| !c.path.windows(2).any(|w| w[0] == a && w[1] == b));
    }

    // ---------------------------------------------------------------------
    // hello sessions, election, affiliation

    fn retry_delay(&self, net: &mut Net<AmbrTimer>) -> SimTime {
        let j = self.p.hello_jitter;
        self.p.hello_retry * net.rng().uniform_range(1.0 - j, 1.0 + j)
    }

    fn start_session(&mut self, net: &mut Net<AmbrTimer>, me: NodeId) {
        if self.nodes[me.idx()].session.is_some() {
            return;
        }
        let st = &mut self.nodes[me.idx()];
        st.session_seq += 1;
        let id = st.session_seq;
        let is_monitor = st.is_monitor;
        self.stats.hello_sessions += 1;
        self.bcast(net, me, Body::Hello { session: id, is_monitor });
        let delay = self.retry_delay(net);
        let timer = net.timer(me, delay, AmbrTimer::HelloRetry { session: id });
        self.nodes[me.idx()].session = Some(Session {
            id,
            attempts: 1,
            timer,
        });
    }

    fn end_session(&mut self, net: &mut Net<AmbrTimer>, me: NodeId) {
        if let Some(s) = self.nodes[me.idx()].session.take() {
            net.cancel(s.timer);
        }
    }

    fn on_hello_retry(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, session: u32) {
        let Some(s) = self.nodes[me.idx()].session else {
            return;
        };
        if s.id != session {
            return;
        }
        let now = net.now();
        let st = &self.nodes[me.idx()];
        let done = if st.is_monitor {
            self.count(me, now) >= self.p.t
        } else {
            st.monitor.is_some()
        };
        if done {
            self.nodes[me.idx()].session = None;
            return;
        }
        if s.attempts < self.p.hello_attempts {
            let is_monitor = st.is_monitor;
            self.bcast(net, me, Body::Hello { session, is_monitor });
            let delay = self.retry_delay(net);
            let timer = net.timer(me, delay, AmbrTimer::HelloRetry { session });
            self.nodes[me.idx()].session = Some(Session {
                id: session,
                attempts: s.attempts + 1,
                timer,
            });
            return;
        }
        self.nodes[me.idx()].session = None;
        if self.nodes[me.idx()].is_monitor && self.count(me, now) < self.p.demote_threshold {
            self.demote(net, me);
        }
    }

    fn demote(&mut self, net: &mut Net<AmbrTimer>, me: NodeId) {
        self.stats.demotions += 1;
        let st = &mut self.nodes[me.idx()];
        st.is_monitor = false;
        st.members.clear();
        let check = st.member_check.take();
        let queries = std::mem::take(&mut st.queries);
        if let Some(id) = check {
            net.cancel(id);
        }
        for (_, q) in queries {
            net.cancel(q.timer);
            self.stats.drop("demoted", q.packets.len() as u64);
        }
        net.note(me, "demote", crate::packet::PacketKind::NewMonitor);
    }

    fn maybe_elect(&mut self, net: &mut Net<AmbrTimer>, me: NodeId) {
        let now = net.now();
        let st = &self.nodes[me.idx()];
        if !st.up || st.is_monitor || st.monitor.is_some() || st.election.is_some() {
            return;
        }
        let known_monitor = st
            .neighbors
            .iter()
            .filter(|(_, nb)| nb.is_monitor && now - nb.last_heard <= self.p.neighbor_timeout)
            .max_by(|a, b| a.1.last_heard.total_cmp(&b.1.last_heard).then(b.0.cmp(a.0)))
            .map(|(&id, _)| id);
        if let Some(m) = known_monitor {
            self.affiliate(net, me, m);
            return;
        }
        if self.count(me, now) < self.p.t {
            return;
        }
        let rank = st
            .neighbors
            .iter()
            .filter(|(&id, nb)| {
                id < me
                    && now - nb.last_heard <= self.p.neighbor_timeout
                    && !nb.affiliated
                    && !nb.is_monitor
            })
            .count();
        // One slot even for the top rank, so monitor offers already in flight win.
        let delay = (rank + 1) as f64 * self.p.election_slot;
        let id = net.timer(me, delay, AmbrTimer::Election);
        self.nodes[me.idx()].election = Some(id);
    }

    fn on_election(&mut self, net: &mut Net<AmbrTimer>, me: NodeId) {
        let now = net.now();
        let st = &mut self.nodes[me.idx()];
        st.election = None;
        if st.is_monitor || st.monitor.is_some() {
            return;
        }
        let c = self.count(me, now);
        if c < self.p.t {
            return;
        }
        self.become_monitor(net, me, c);
    }

    fn become_monitor(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, count: usize) {
        if count < self.p.t {
            net.violation(format!(
                "node {me} elected itself with {count} neighbors below threshold {}",
                self.p.t
            ));
        }
        self.end_session(net, me);
        self.stats.elections += 1;
        let now = net.now();
        let st = &mut self.nodes[me.idx()];
        st.is_monitor = true;
        st.monitor = None;
        if let Some(id) = st.election.take() {
            net.cancel(id);
        }
        if let Some(id) = st.alive_tick.take() {
            net.cancel(id);
        }
        if let Some(id) = st.alive_wait.take() {
            net.cancel(id);
        }
        self.bcast(net, me, Body::NewMonitor { elected_at: now });
        let id = net.timer(me, self.p.alive_period, AmbrTimer::MemberCheck);
        self.nodes[me.idx()].member_check = Some(id);
        self.flush_queue(net, me);
    }

    fn affiliate(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, m: NodeId) {
        let st = &self.nodes[me.idx()];
        if st.is_monitor || st.monitor.is_some() || m == me {
            return;
        }
        self.end_session(net, me);
        self.stats.affiliations += 1;
        let now = net.now();
        let st = &mut self.nodes[me.idx()];
        st.monitor = Some(m);
        st.last_contact = now;
        if let Some(id) = st.election.take() {
            net.cancel(id);
        }
        self.send(net, me, m, Body::MonitorAliveRequest);
        let wait = net.timer(me, self.p.alive_reply_timeout, AmbrTimer::AliveReplyTimeout);
        let st = &mut self.nodes[me.idx()];
        if let Some(old) = st.alive_wait.replace(wait) {
            net.cancel(old);
        }
        if st.alive_tick.is_none() {
            st.alive_tick = Some(net.timer(me, self.p.alive_period, AmbrTimer::AliveTick));
        }
        self.flush_queue(net, me);
    }

    fn lose_affiliation(&mut self, net: &mut Net<AmbrTimer>, me: NodeId) {
        let st = &mut self.nodes[me.idx()];
        if st.is_monitor || st.monitor.is_none() {
            return;
        }
        if let Some(m) = st.monitor.take() {
            st.neighbors.remove(&m);
        }
        if let Some(id) = st.alive_tick.take() {
            net.cancel(id);
        }
        if let Some(id) = st.alive_wait.take() {
            net.cancel(id);
        }
        self.start_session(net, me);
    }

    fn on_alive_tick(&mut self, net: &mut Net<AmbrTimer>, me: NodeId) {
        let now = net.now();
        let st = &mut self.nodes[me.idx()];
        st.alive_tick = None;
        let Some(m) = st.monitor else {
            return;
        };
        if st.is_monitor {
            return;
        }
        st.alive_tick = Some(net.timer(me, self.p.alive_period, AmbrTimer::AliveTick));
        let idle = now - st.last_contact >= self.p.piggyback_window - EPS;
        if idle && st.session.is_none() && st.alive_wait.is_none() {
            self.send(net, me, m, Body::MonitorAliveRequest);
            let wait = net.timer(me, self.p.alive_reply_timeout, AmbrTimer::AliveReplyTimeout);
            self.nodes[me.idx()].alive_wait = Some(wait);
        }
    }

    fn on_member_check(&mut self, net: &mut Net<AmbrTimer>, me: NodeId) {
        let now = net.now();
        let st = &mut self.nodes[me.idx()];
        st.member_check = None;
        if !st.is_monitor {
            return;
        }
        st.member_check = Some(net.timer(me, self.p.alive_period, AmbrTimer::MemberCheck));
        let before = st.members.len();
        let timeout = self.p.liveness_timeout;
        st.members.retain(|_, &mut last| now - last <= timeout);
        let removed = before - st.members.len();
        if removed > 0 && self.count(me, now) < self.p.t {
            self.start_session(net, me);
        }
    }

    // ---------------------------------------------------------------------
    // data forwarding

    fn send_data(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, msg: DataMsg) {
        let next = msg.next_hop().expect("routed packet has a next hop");
        let now = net.now();
        let st = &mut self.nodes[me.idx()];
        if st.monitor == Some(next) {
            st.last_contact = now;
        }
        if st.is_monitor {
            if let Some(t) = st.members.get_mut(&next) {
                *t = now;
            }
        }
        self.send(net, me, next, Body::Data(msg));
    }

    fn enqueue(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, msg: DataMsg) {
        let (flow, seq) = (msg.flow, msg.seq);
        let st = &mut self.nodes[me.idx()];
        if st.queue.len() >= QUEUE_CAP {
            self.stats.drop("queue-full", 1);
            return;
        }
        st.queue.push_back(msg);
        net.timer(me, self.p.queue_timeout, AmbrTimer::QueueExpire { flow, seq });
        self.start_session(net, me);
    }

    fn flush_queue(&mut self, net: &mut Net<AmbrTimer>, me: NodeId) {
        let queued = std::mem::take(&mut self.nodes[me.idx()].queue);
        for msg in queued {
            self.route_at(net, me, msg);
        }
    }

    /// Routing decision at a node holding `msg` that has no planned next hop.
    fn route_at(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, mut msg: DataMsg) {
        let now = net.now();
        let d = msg.dest;
        if self.knows(me, d, now) {
            msg.reroute(&[d]);
            self.send_data(net, me, msg);
            return;
        }
        let bounced = msg.repaired && msg.upstream()[..msg.pos].contains(&me);
        if bounced {
            self.nodes[me.idx()].cache.remove(&d);
        }
        if let Some(path) = self.cached(me, d, now) {
            if let Some(c) = self.nodes[me.idx()].cache.get_mut(&d) {
                c.learned_at = now;
            }
            msg.reroute(&path[1..]);
            self.send_data(net, me, msg);
            return;
        }
        if self.nodes[me.idx()].is_monitor {
            self.route_finder(net, me, msg);
            return;
        }
        match self.nodes[me.idx()].monitor {
            Some(m) if msg.pos == 0 || msg.repaired || msg.route[msg.pos - 1] != m => {
                msg.reroute(&[m]);
                self.send_data(net, me, msg);
            }
            _ if msg.pos == 0 => self.enqueue(net, me, msg),
            _ => self.stats.drop("no-route", 1),
        }
    }

    fn on_data_packet(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, mut msg: DataMsg) {
        msg.pos += 1;
        if msg.dest == me {
            net.deliver_data(&msg);
        } else if msg.pos >= HOP_LIMIT {
            self.stats.drop("hop-limit", 1);
        } else if msg.next_hop().is_some() {
            self.send_data(net, me, msg);
        } else {
            self.route_at(net, me, msg);
        }
    }

    fn on_data_failed(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, next: NodeId, mut msg: DataMsg) {
        let st = &mut self.nodes[me.idx()];
        st.neighbors.remove(&next);
        st.members.remove(&next);
        let lost_monitor = !st.is_monitor && st.monitor == Some(next);
        self.invalidate_link(me, me, next);
        if lost_monitor {
            self.lose_affiliation(net, me);
        }
        msg.route.truncate(msg.pos + 1);
        if msg.pos == 0 {
            self.route_at(net, me, msg);
            return;
        }
        msg.repaired = true;
        self.route_at(net, me, msg);
    }

    // ---------------------------------------------------------------------
    // monitor route queries

    /// Monitors reachable from `m` through at most `nm_max_hops` hops whose
    /// intermediate nodes are all ordinary, each with its shortest physical path.
    fn adjacent_monitors(&self, net: &Net<AmbrTimer>, m: NodeId) -> Vec<(NodeId, Vec<NodeId>)> {
        let adj = net.adjacency();
        let n = adj.len();
        let mut parent: Vec<Option<NodeId>> = vec![None; n];
        let mut depth = vec![u32::MAX; n];
        depth[m.idx()] = 0;
        let mut queue = VecDeque::from([m]);
        let mut found = Vec::new();
        while let Some(u) = queue.pop_front() {
            if u != m && self.nodes[u.idx()].is_monitor {
                let mut path = vec![u];
                let mut x = u;
                while let Some(p) = parent[x.idx()] {
                    path.push(p);
                    x = p;
                }
                path.reverse();
                found.push((u, path));
                continue;
            }
            if depth[u.idx()] >= self.p.nm_max_hops {
                continue;
            }
            for &v in &adj[u.idx()] {
                if depth[v.idx()] == u32::MAX && self.nodes[v.idx()].up {
                    depth[v.idx()] = depth[u.idx()] + 1;
                    parent[v.idx()] = Some(u);
                    queue.push_back(v);
                }
            }
        }
        found.sort_by_key(|(id, _)| *id);
        found
    }

    /// Sends copies of `q` (addressed to `me`) to every unvisited adjacent monitor.
    fn fan_out(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, q: &RouteQueryMsg) -> Fanout {
        let targets: Vec<(NodeId, Vec<NodeId>)> = self
            .adjacent_monitors(net, me)
            .into_iter()
            .filter(|(y, _)| !q.visited.contains(y))
            .collect();
        if targets.is_empty() {
            return Fanout::NoMonitors;
        }
        if q.depth + 1 > self.p.dl_max {
            return Fanout::DepthExceeded;
        }
        let mut visited = q.visited.clone();
        visited.extend(targets.iter().map(|(y, _)| *y));
        let uniq: HashSet<NodeId> = visited.iter().copied().collect();
        if uniq.len() != visited.len() {
            net.violation(format!("query {:?} visited set repeats a monitor: {visited:?}", q.id));
        }
        for (_, phys) in targets {
            let mut path = q.path.clone();
            path.extend_from_slice(&phys[1..]);
            let copy = RouteQueryMsg {
                id: q.id,
                source: q.source,
                dest: q.dest,
                depth: q.depth + 1,
                visited: visited.clone(),
                pos: q.path.len() - 1,
                path,
                repair: q.repair,
            };
            if copy.depth > self.p.dl_max {
                net.violation(format!("query {:?} copy at depth {} exceeds bound", q.id, copy.depth));
            }
            let to = copy.path[copy.pos + 1];
            self.send(net, me, to, Body::RouteQuery(copy));
        }
        Fanout::Sent
    }

    fn route_finder(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, msg: DataMsg) {
        let d = msg.dest;
        if let Some(q) = self.nodes[me.idx()]
            .queries
            .values_mut()
            .find(|q| q.dest == d)
        {
            if q.packets.len() < QUEUE_CAP {
                q.packets.push(msg);
            } else {
                self.stats.drop("query-full", 1);
            }
            return;
        }
        let repair = msg.repaired;
        if repair {
            if msg.pos == 0 {
                net.violation(format!(
                    "repair query for packet ({}, {}) issued before it left its source",
                    msg.flow, msg.seq
                ));
            }
            self.stats.repair_queries += 1;
            if msg.origin == me {
                self.stats.repair_queries_at_source += 1;
            }
        }
        self.stats.queries += 1;
        let now = net.now();
        if !(0..self.nodes.len()).any(|i| {
            let m = NodeId(i as u32);
            self.nodes[i].is_monitor && self.knows(m, d, now)
        }) {
            self.stats.uncovered_queries += 1;
        }
        let st = &mut self.nodes[me.idx()];
        st.query_seq += 1;
        let id = QueryId {
            origin: me,
            seq: st.query_seq,
        };
        st.seen_queries.insert(id);
        let q = RouteQueryMsg {
            id,
            source: msg.origin,
            dest: d,
            depth: 0,
            visited: vec![me],
            path: vec![me],
            pos: 0,
            repair,
        };
        match self.fan_out(net, me, &q) {
            Fanout::DepthExceeded => {
                self.stats.drop("depth", 1);
                self.inform_source(net, me, &msg);
            }
            Fanout::Sent | Fanout::NoMonitors => {
                let timer = net.timer(me, self.p.query_timeout, AmbrTimer::QueryTimeout(id));
                self.nodes[me.idx()].queries.insert(
                    id,
                    PendingQuery {
                        dest: d,
                        packets: vec![msg],
                        unreachable_sent: false,
                        timer,
                    },
                );
            }
        }
    }

    /// Sends a destination-unreachable notice back along the packet's upstream.
    fn inform_source(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, msg: &DataMsg) {
        if msg.origin == me {
            self.at_source_unreachable(me, msg.dest);
            return;
        }
        let mut back = msg.upstream().to_vec();
        back.reverse();
        let back = shortcut(&back);
        if back.len() < 2 {
            return;
        }
        let to = back[1];
        self.send(
            net,
            me,
            to,
            Body::DestinationUnreachable(UnreachableMsg {
                id: None,
                source: msg.origin,
                dest: msg.dest,
                back,
                pos: 0,
            }),
        );
    }

    fn at_source_unreachable(&mut self, me: NodeId, dest: NodeId) {
        self.stats.unreachable_at_source += 1;
        self.nodes[me.idx()].cache.remove(&dest);
    }

    fn inform_sources(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, packets: &[DataMsg]) {
        let mut told = HashSet::new();
        for msg in packets {
            if told.insert(msg.origin) {
                self.inform_source(net, me, msg);
            }
        }
    }

    fn on_query(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, mut q: RouteQueryMsg) {
        q.pos += 1;
        if q.pos + 1 < q.path.len() {
            let to = q.path[q.pos + 1];
            self.send(net, me, to, Body::RouteQuery(q));
            return;
        }
        if !self.nodes[me.idx()].seen_queries.insert(q.id) || !self.nodes[me.idx()].is_monitor {
            return;
        }
        let now = net.now();
        let mut back = q.path.clone();
        back.reverse();
        if self.knows(me, q.dest, now) {
            let mut route = q.path.clone();
            route.push(q.dest);
            let route = shortcut(&route);
            let to = back[1];
            self.send(
                net,
                me,
                to,
                Body::RouteReply(RouteReplyMsg {
                    id: Some(q.id),
                    kind: ReplyKind::Discovery,
                    dest: q.dest,
                    route,
                    back,
                    pos: 0,
                }),
            );
            return;
        }
        if let Fanout::DepthExceeded = self.fan_out(net, me, &q) {
            let to = back[1];
            self.send(
                net,
                me,
                to,
                Body::DestinationUnreachable(UnreachableMsg {
                    id: Some(q.id),
                    source: q.source,
                    dest: q.dest,
                    back,
                    pos: 0,
                }),
            );
        }
    }

    fn on_reply(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, mut r: RouteReplyMsg) {
        r.pos += 1;
        let now = net.now();
        if r.kind == ReplyKind::Update {
            if let Some(i) = r.route.iter().position(|&x| x == me) {
                let st = &mut self.nodes[me.idx()];
                let last = r.pos + 1 == r.back.len();
                if last || st.cache.contains_key(&r.dest) {
                    st.cache.insert(
                        r.dest,
                        CacheEntry {
                            path: r.route[i..].to_vec(),
                            learned_at: now,
                            from_query: None,
                        },
                    );
                }
            }
        }
        if r.pos + 1 < r.back.len() {
            let to = r.back[r.pos + 1];
            self.send(net, me, to, Body::RouteReply(r));
            return;
        }
        if r.kind == ReplyKind::Update {
            return;
        }
        let Some(id) = r.id else {
            return;
        };
        if !self.nodes[me.idx()].answered.insert(id) {
            self.stats.discarded_replies += 1;
            let first = self.stats.first_replies.get(&id);
            if let Some(entry) = self.nodes[me.idx()].cache.get(&r.dest) {
                if entry.from_query == Some(id) && Some(&entry.path) != first {
                    net.violation(format!(
                        "query {id:?}: cache holds {:?}, first reply was {first:?}",
                        entry.path
                    ));
                }
            }
            return;
        }
        let route = r.route;
        self.stats.first_replies.insert(id, route.clone());
        self.nodes[me.idx()].cache.insert(
            r.dest,
            CacheEntry {
                path: route.clone(),
                learned_at: now,
                from_query: Some(id),
            },
        );
        let Some(q) = self.nodes[me.idx()].queries.remove(&id) else {
            return;
        };
        net.cancel(q.timer);
        let mut informed = HashSet::new();
        for mut msg in q.packets {
            msg.reroute(&route[1..]);
            if msg.origin != me && informed.insert(msg.origin) {
                self.send_update(net, me, id, &msg);
            }
            self.send_data(net, me, msg);
        }
    }

    /// Hands the discovered route back to the packet's source.
    fn send_update(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, id: QueryId, msg: &DataMsg) {
        let route = shortcut(&msg.route);
        let mut back = msg.upstream().to_vec();
        back.reverse();
        let back = shortcut(&back);
        if back.len() < 2 {
            return;
        }
        let to = back[1];
        self.send(
            net,
            me,
            to,
            Body::RouteReply(RouteReplyMsg {
                id: Some(id),
                kind: ReplyKind::Update,
                dest: msg.dest,
                route,
                back,
                pos: 0,
            }),
        );
    }

    fn on_unreachable(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, mut u: UnreachableMsg) {
        u.pos += 1;
        if u.pos + 1 < u.back.len() {
            let to = u.back[u.pos + 1];
            self.send(net, me, to, Body::DestinationUnreachable(u));
            return;
        }
        match u.id {
            None => self.at_source_unreachable(me, u.dest),
            Some(id) => {
                let Some(q) = self.nodes[me.idx()].queries.get_mut(&id) else {
                    return;
                };
                if q.unreachable_sent {
                    return;
                }
                q.unreachable_sent = true;
                let packets = q.packets.clone();
                self.inform_sources(net, me, &packets);
            }
        }
    }

    fn on_query_timeout(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, id: QueryId) {
        let Some(q) = self.nodes[me.idx()].queries.remove(&id) else {
            return;
        };
        self.stats.query_timeouts += 1;
        self.stats.drop("query-timeout", q.packets.len() as u64);
        if !q.unreachable_sent {
            self.inform_sources(net, me, &q.packets);
        }
    }

    // ---------------------------------------------------------------------

    /// Bookkeeping common to every received packet.
    fn touch(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, from: NodeId, sm: Option<NodeId>) {
        let now = net.now();
        let st = &mut self.nodes[me.idx()];
        st.neighbors.insert(
            from,
            Neighbor {
                last_heard: now,
                is_monitor: sm == Some(from),
                affiliated: sm.is_some() && sm != Some(from),
            },
        );
        if st.is_monitor && sm == Some(me) {
            st.members.insert(from, now);
        }
        if !st.is_monitor && st.monitor == Some(from) {
            if sm == Some(from) {
                st.last_contact = now;
            } else {
                self.lose_affiliation(net, me);
            }
        }
    }
}

impl Protocol for Ambr {
    type Timer = AmbrTimer;

    fn name(&self) -> &'static str {
        "ambr"
    }

    fn on_node_up(&mut self, net: &mut Net<AmbrTimer>, node: NodeId) {
        self.nodes[node.idx()].up = true;
        self.start_session(net, node);
    }

    fn on_receive(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, from: NodeId, packet: Packet) {
        // A keepalive answer proves the monitor is alive but is not piggybacked contact.
        let before = self.nodes[me.idx()].last_contact;
        self.touch(net, me, from, packet.sender_monitor);
        if matches!(packet.body, Body::MonitorAliveReply) {
            self.nodes[me.idx()].last_contact = before;
        }
        let unaffiliated = |s: &Self| {
            let st = &s.nodes[me.idx()];
            !st.is_monitor && st.monitor.is_none()
        };
        match packet.body {
            Body::Hello { session, is_monitor } => {
                if is_monitor && unaffiliated(self) {
                    self.affiliate(net, me, from);
                } else if self.nodes[me.idx()].replied.insert((from, session)) {
                    let mine = self.nodes[me.idx()].is_monitor;
                    self.send(net, me, from, Body::HelloReply { is_monitor: mine });
                    if mine && !is_monitor {
                        let now = net.now();
                        self.send(net, me, from, Body::NewMonitor { elected_at: now });
                    }
                }
            }
            Body::HelloReply { is_monitor } => {
                if is_monitor && unaffiliated(self) {
                    self.affiliate(net, me, from);
                } else if self.nodes[me.idx()].is_monitor {
                    let now = net.now();
                    if self.count(me, now) >= self.p.t {
                        self.end_session(net, me);
                    }
                }
            }
            Body::NewMonitor { .. } => {
                if unaffiliated(self) {
                    self.affiliate(net, me, from);
                }
            }
            Body::MonitorAliveRequest => {
                if self.nodes[me.idx()].is_monitor {
                    let now = net.now();
                    self.nodes[me.idx()].members.insert(from, now);
                    self.send(net, me, from, Body::MonitorAliveReply);
                }
            }
            Body::MonitorAliveReply => {
                let st = &mut self.nodes[me.idx()];
                if st.monitor == Some(from) {
                    if let Some(id) = st.alive_wait.take() {
                        net.cancel(id);
                    }
                }
            }
            Body::RouteQuery(q) => self.on_query(net, me, q),
            Body::RouteReply(r) => self.on_reply(net, me, r),
            Body::DestinationUnreachable(u) => self.on_unreachable(net, me, u),
            Body::Data(msg) => self.on_data_packet(net, me, msg),
            Body::Rreq(_) | Body::Rrep(_) | Body::Rerr(_) | Body::TableUpdate { .. } => {}
        }
        if unaffiliated(self) {
            self.maybe_elect(net, me);
        }
    }

    fn on_tx_failed(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, to: NodeId, packet: Packet) {
        match packet.body {
            Body::Data(msg) => self.on_data_failed(net, me, to, msg),
            _ => {
                let st = &mut self.nodes[me.idx()];
                st.neighbors.remove(&to);
                st.members.remove(&to);
                let lost = !st.is_monitor && st.monitor == Some(to);
                self.invalidate_link(me, me, to);
                if lost {
                    self.lose_affiliation(net, me);
                }
            }
        }
    }

    fn on_timer(&mut self, net: &mut Net<AmbrTimer>, me: NodeId, timer: AmbrTimer) {
        match timer {
            AmbrTimer::HelloRetry { session } => self.on_hello_retry(net, me, session),
            AmbrTimer::Election => self.on_election(net, me),
            AmbrTimer::AliveTick => self.on_alive_tick(net, me),
            AmbrTimer::AliveReplyTimeout => {
                self.nodes[me.idx()].alive_wait = None;
                self.lose_affiliation(net, me);
            }
            AmbrTimer::MemberCheck => self.on_member_check(net, me),
            AmbrTimer::QueryTimeout(id) => self.on_query_timeout(net, me, id),
            AmbrTimer::QueueExpire { flow, seq } => {
                let q = &mut self.nodes[me.idx()].queue;
                if let Some(i) = q.iter().position(|m| m.flow == flow && m.seq == seq) {
                    q.remove(i);
                    self.stats.drop("queue-timeout", 1);
                }
            }
        }
    }

    fn on_data(&mut self, net: &mut Net<AmbrTimer>, msg: DataMsg) {
        if msg.dest == msg.origin {
            net.deliver_data(&msg);
            return;
        }
        let me = msg.origin;
        self.route_at(net, me, msg);
    }

    fn check_invariants(&self, _net: &Net<AmbrTimer>, out: &mut Vec<String>) {
        for (i, st) in self.nodes.iter().enumerate() {
            let me = NodeId(i as u32);
            if st.is_monitor && st.monitor.is_some() {
                out.push(format!("monitor {me} is also affiliated with {:?}", st.monitor));
            }
            if st.monitor == Some(me) {
                out.push(format!("node {me} is affiliated with itself"));
            }
            if !st.is_monitor && !st.members.is_empty() {
                out.push(format!("ordinary node {me} holds members"));
            }
            if st.members.contains_key(&me) {
                out.push(format!("monitor {me} lists itself as member"));
            }
            if st.session.is_some() && st.monitor.is_some() {
                out.push(format!("affiliated node {me} still runs a hello session"));
            }
            for (d, c) in &st.cache {
                let uniq: HashSet<NodeId> = c.path.iter().copied().collect();
                if uniq.len() != c.path.len() || c.path.last() != Some(d) {
                    out.push(format!("node {me} caches malformed route {:?}", c.path));
                }
            }
        }
    }
}
