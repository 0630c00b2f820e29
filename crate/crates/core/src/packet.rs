//! Every message any protocol puts on the air, plus the control/data
//! classification used by the overhead metric.

use std::fmt;

use crate::kernel::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketClass {
    Control,
    Data,
}

/// Fieldless tag for every packet body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketKind {
    Hello,
    HelloReply,
    NewMonitor,
    MonitorAliveRequest,
    MonitorAliveReply,
    RouteQuery,
    RouteReply,
    DestinationUnreachable,
    Rreq,
    Rrep,
    Rerr,
    TableUpdate,
    Data,
}

impl PacketKind {
    pub const ALL: [PacketKind; 13] = [
        PacketKind::Hello,
        PacketKind::HelloReply,
        PacketKind::NewMonitor,
        PacketKind::MonitorAliveRequest,
        PacketKind::MonitorAliveReply,
        PacketKind::RouteQuery,
        PacketKind::RouteReply,
        PacketKind::DestinationUnreachable,
        PacketKind::Rreq,
        PacketKind::Rrep,
        PacketKind::Rerr,
        PacketKind::TableUpdate,
        PacketKind::Data,
    ];

    pub fn class(self) -> PacketClass {
        match self {
            PacketKind::Data => PacketClass::Data,
            PacketKind::Hello
            | PacketKind::HelloReply
            | PacketKind::NewMonitor
            | PacketKind::MonitorAliveRequest
            | PacketKind::MonitorAliveReply
            | PacketKind::RouteQuery
            | PacketKind::RouteReply
            | PacketKind::DestinationUnreachable
            | PacketKind::Rreq
            | PacketKind::Rrep
            | PacketKind::Rerr
            | PacketKind::TableUpdate => PacketClass::Control,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Hello => "hello",
            PacketKind::HelloReply => "hello_reply",
            PacketKind::NewMonitor => "new_monitor",
            PacketKind::MonitorAliveRequest => "monitor_alive_request",
            PacketKind::MonitorAliveReply => "monitor_alive_reply",
            PacketKind::RouteQuery => "route_query",
            PacketKind::RouteReply => "route_reply",
            PacketKind::DestinationUnreachable => "destination_unreachable",
            PacketKind::Rreq => "rreq",
            PacketKind::Rrep => "rrep",
            PacketKind::Rerr => "rerr",
            PacketKind::TableUpdate => "table_update",
            PacketKind::Data => "data",
        }
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Identifies one monitor route query: `(origin monitor, sequence)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryId {
    pub origin: NodeId,
    pub seq: u32,
}

/// A route query copy travelling towards the next monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteQueryMsg {
    pub id: QueryId,
    pub source: NodeId,
    pub dest: NodeId,
    /// Monitor-hop depth of the monitor this copy is addressed to.
    pub depth: u32,
    pub visited: Vec<NodeId>,
    /// Physical path from the origin monitor to the addressed monitor.
    pub path: Vec<NodeId>,
    /// Index in `path` of the node currently holding this copy.
    pub pos: usize,
    /// Set when the query repairs a broken route rather than discovering one.
    pub repair: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplyKind {
    /// Answer to a route query, travelling back to the origin.
    Discovery,
    /// Route handed back upstream after a discovery or repair.
    Update,
}

/// A route carried back along a reverse path.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteReplyMsg {
    pub id: Option<QueryId>,
    pub kind: ReplyKind,
    pub dest: NodeId,
    /// Route ending at `dest`; its first node is the node the reply is destined for
    /// (origin monitor for discovery replies, data source for updates).
    pub route: Vec<NodeId>,
    /// Hops still to travel, in order; `back[pos]` holds the packet.
    pub back: Vec<NodeId>,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnreachableMsg {
    pub id: Option<QueryId>,
    pub source: NodeId,
    pub dest: NodeId,
    pub back: Vec<NodeId>,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RreqMsg {
    pub origin: NodeId,
    pub seq: u32,
    pub dest: NodeId,
    pub ttl: u32,
    pub path: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrepMsg {
    pub origin: NodeId,
    pub seq: u32,
    pub gratuitous: bool,
    pub dest: NodeId,
    /// Route from its first node (the reply's final recipient) to `dest`.
    pub route: Vec<NodeId>,
    pub back: Vec<NodeId>,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerrMsg {
    pub source: NodeId,
    pub dest: NodeId,
    pub broken: (NodeId, NodeId),
    pub back: Vec<NodeId>,
    pub pos: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DvEntry {
    pub dest: NodeId,
    pub hops: u32,
    pub seq: u64,
}

/// An application data packet with its source route.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMsg {
    pub flow: u32,
    pub seq: u64,
    pub origin: NodeId,
    pub dest: NodeId,
    pub created_at: SimTime,
    /// Nodes visited so far (`route[..=pos]`) followed by the planned remainder.
    pub route: Vec<NodeId>,
    pub pos: usize,
    /// Set once the packet has been handed to a monitor after a link break.
    pub repaired: bool,
}

impl DataMsg {
    pub fn holder(&self) -> NodeId {
        self.route[self.pos]
    }

    pub fn next_hop(&self) -> Option<NodeId> {
        self.route.get(self.pos + 1).copied()
    }

    pub fn hops(&self) -> usize {
        self.pos
    }

    /// Drops the planned remainder and appends `suffix` (which must not start with the holder).
    pub fn reroute(&mut self, suffix: &[NodeId]) {
        self.route.truncate(self.pos + 1);
        self.route.extend_from_slice(suffix);
    }

    /// Nodes already traversed, holder included.
    pub fn upstream(&self) -> &[NodeId] {
        &self.route[..=self.pos]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Hello { session: u32, is_monitor: bool },
    HelloReply { is_monitor: bool },
    NewMonitor { elected_at: SimTime },
    MonitorAliveRequest,
    MonitorAliveReply,
    RouteQuery(RouteQueryMsg),
    RouteReply(RouteReplyMsg),
    DestinationUnreachable(UnreachableMsg),
    Rreq(RreqMsg),
    Rrep(RrepMsg),
    Rerr(RerrMsg),
    TableUpdate { seq_origin: NodeId, entries: Vec<DvEntry> },
    Data(DataMsg),
}

/// A packet as handed to the radio.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub uid: u64,
    /// Monitor the transmitting node is affiliated with (itself when it is a monitor).
    /// Carried in every header; only the monitor protocol reads it.
    pub sender_monitor: Option<NodeId>,
    pub body: Body,
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match &self.body {
            Body::Hello { .. } => PacketKind::Hello,
            Body::HelloReply { .. } => PacketKind::HelloReply,
            Body::NewMonitor { .. } => PacketKind::NewMonitor,
            Body::MonitorAliveRequest => PacketKind::MonitorAliveRequest,
            Body::MonitorAliveReply => PacketKind::MonitorAliveReply,
            Body::RouteQuery(_) => PacketKind::RouteQuery,
            Body::RouteReply(_) => PacketKind::RouteReply,
            Body::DestinationUnreachable(_) => PacketKind::DestinationUnreachable,
            Body::Rreq(_) => PacketKind::Rreq,
            Body::Rrep(_) => PacketKind::Rrep,
            Body::Rerr(_) => PacketKind::Rerr,
            Body::TableUpdate { .. } => PacketKind::TableUpdate,
            Body::Data(_) => PacketKind::Data,
        }
    }

    pub fn class(&self) -> PacketClass {
        self.kind().class()
    }

    /// Size on the air in bytes. Only data has a size fixed by the scenario;
    /// control sizes are per kind, table updates grow with their entries.
    pub fn size_bytes(&self, data_size: u32) -> u32 {
        match &self.body {
            Body::Data(_) => data_size,
            Body::RouteQuery(_) | Body::RouteReply(_) | Body::Rreq(_) | Body::Rrep(_) => 64,
            Body::TableUpdate { entries, .. } => 32 + 12 * entries.len() as u32,
            Body::Hello { .. }
            | Body::HelloReply { .. }
            | Body::NewMonitor { .. }
            | Body::MonitorAliveRequest
            | Body::MonitorAliveReply
            | Body::DestinationUnreachable(_)
            | Body::Rerr(_) => 32,
        }
    }
}

/// Removes loops from a path, keeping the last occurrence of each node, so the
/// result is duplicate-free and starts with the path's first node.
pub fn shortcut(path: &[NodeId]) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = Vec::with_capacity(path.len());
    for &n in path {
        if let Some(i) = out.iter().position(|&m| m == n) {
            out.truncate(i + 1);
        } else {
            out.push(n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn only_data_is_data() {
        for k in PacketKind::ALL {
            assert_eq!(k.class() == PacketClass::Data, k == PacketKind::Data, "{k}");
        }
    }

    #[test]
    fn sizes_match_kind_table() {
        let p = Packet {
            uid: 0,
            sender_monitor: None,
            body: Body::Hello {
                session: 0,
                is_monitor: false,
            },
        };
        assert_eq!(p.size_bytes(512), 32);
        let d = Packet {
            uid: 1,
            sender_monitor: None,
            body: Body::Data(DataMsg {
                flow: 0,
                seq: 0,
                origin: NodeId(0),
                dest: NodeId(1),
                created_at: 0.0,
                route: vec![NodeId(0)],
                pos: 0,
                repaired: false,
            }),
        };
        assert_eq!(d.size_bytes(512), 512);
    }

    #[test]
    fn reroute_keeps_upstream() {
        let mut d = DataMsg {
            flow: 0,
            seq: 0,
            origin: NodeId(0),
            dest: NodeId(9),
            created_at: 0.0,
            route: [0, 1, 2, 3, 9].map(NodeId).to_vec(),
            pos: 2,
            repaired: false,
        };
        d.reroute(&[NodeId(5), NodeId(9)]);
        assert_eq!(d.route, [0, 1, 2, 5, 9].map(NodeId).to_vec());
        assert_eq!(d.next_hop(), Some(NodeId(5)));
        assert_eq!(d.upstream(), &[0, 1, 2].map(NodeId));
    }

    #[test]
    fn shortcut_cuts_loops() {
        let p = [1, 2, 3, 2, 4].map(NodeId);
        assert_eq!(shortcut(&p), [1, 2, 4].map(NodeId).to_vec());
    }

    proptest! {
        #[test]
        fn shortcut_is_duplicate_free_and_keeps_ends(path in proptest::collection::vec(0u32..8, 1..20)) {
            let p: Vec<NodeId> = path.into_iter().map(NodeId).collect();
            let s = shortcut(&p);
            let mut seen = std::collections::HashSet::new();
            prop_assert!(s.iter().all(|n| seen.insert(*n)));
            prop_assert_eq!(s.first(), p.first());
            prop_assert_eq!(s.last(), p.last());
        }
    }
}
