mod common;

use ambrsim::mobility::Point;
use ambrsim::packet::{NodeId, PacketKind};
use ambrsim::protocol::ambr::Role;
use ambrsim::{Ambr, ProtocolKind, SimConfig, Simulation};
use common::{clique, fixed, id, line};

fn sim(mut cfg: SimConfig) -> Simulation<Ambr> {
    cfg.trace = true;
    let proto = Ambr::new(&cfg);
    Simulation::new(cfg, proto).unwrap()
}

fn with_threshold(pts: Vec<Point>, t: usize) -> SimConfig {
    SimConfig {
        monitor_threshold: t,
        ..fixed(pts, ProtocolKind::Ambr)
    }
}

/// Transmissions of `kind` by `node` in `[from, to)`.
fn sends(s: &Simulation<Ambr>, node: NodeId, kind: PacketKind, from: f64, to: f64) -> usize {
    s.net
        .trace()
        .iter()
        .filter(|r| r.action == "send" && r.node == node && r.kind == kind)
        .filter(|r| r.time >= from && r.time < to)
        .count()
}

fn ctl(s: &Simulation<Ambr>, kind: PacketKind) -> u64 {
    s.net.metrics().control_of(kind)
}

/// S(0) - O(1) with two branches A(2) and B(3) that both reach D(4).
fn diamond() -> Vec<Point> {
    vec![
        Point::new(100.0, 300.0),
        Point::new(300.0, 300.0),
        Point::new(500.0, 450.0),
        Point::new(500.0, 150.0),
        Point::new(700.0, 300.0),
    ]
}

#[test]
fn isolated_node_gives_up_after_its_attempts() {
    let cfg = fixed(vec![Point::new(10.0, 10.0)], ProtocolKind::Ambr);
    let attempts = cfg.hello_attempts as u64;
    let mut s = sim(cfg);
    s.run_until(30.0).unwrap();
    s.check().unwrap();
    assert_eq!(ctl(&s, PacketKind::Hello), attempts);
    assert_eq!(ctl(&s, PacketKind::HelloReply), 0);
    assert!(!s.proto.in_session(id(0)));
    assert_eq!(s.proto.role(id(0)), Role::Unaffiliated);
}

#[test]
fn hello_gets_a_single_unicast_reply_per_session() {
    let mut s = sim(fixed(line(2, 100.0), ProtocolKind::Ambr));
    s.run_until(30.0).unwrap();
    s.check().unwrap();
    // Two sessions of three broadcasts each; every session is answered once.
    assert_eq!(ctl(&s, PacketKind::Hello), 6);
    assert_eq!(ctl(&s, PacketKind::HelloReply), 2);
    assert_eq!(sends(&s, id(0), PacketKind::HelloReply, 0.0, 30.0), 1);
    assert_eq!(ctl(&s, PacketKind::NewMonitor), 0);
}

#[test]
fn clique_of_threshold_plus_one_elects_exactly_one() {
    let mut s = sim(fixed(clique(6), ProtocolKind::Ambr));
    s.run_until(20.0).unwrap();
    s.check().unwrap();
    assert_eq!(s.proto.stats().elections, 1);
    assert_eq!(s.proto.monitors(), vec![id(0)]);
    assert_eq!(sends(&s, id(0), PacketKind::NewMonitor, 0.0, 20.0), 1);
    for i in 1..6 {
        assert_eq!(s.proto.role(id(i)), Role::Affiliated(id(0)));
    }
    assert_eq!(s.proto.members(id(0)).len(), 5);
}

#[test]
fn affiliated_nodes_do_not_self_elect() {
    let mut s = sim(fixed(clique(12), ProtocolKind::Ambr));
    s.run_until(60.0).unwrap();
    s.check().unwrap();
    assert_eq!(s.proto.monitors().len(), 1);
    assert_eq!(s.proto.stats().elections, 1);
}

#[test]
fn clique_below_threshold_elects_nobody() {
    let mut s = sim(fixed(clique(5), ProtocolKind::Ambr));
    s.run_until(20.0).unwrap();
    s.check().unwrap();
    assert!(s.proto.monitors().is_empty());
}

#[test]
fn idle_members_send_one_keepalive_per_period() {
    let cfg = fixed(clique(6), ProtocolKind::Ambr);
    let period = cfg.alive_period;
    let mut s = sim(cfg);
    s.run_until(100.0).unwrap();
    s.check().unwrap();
    let (from, to) = (50.0, 50.0 + 5.0 * period);
    for i in 1..6 {
        assert_eq!(sends(&s, id(i), PacketKind::MonitorAliveRequest, from, to), 5, "member {i}");
    }
    assert_eq!(sends(&s, id(0), PacketKind::MonitorAliveReply, from, to), 25);
}

#[test]
fn data_to_the_monitor_replaces_keepalives() {
    let mut s = sim(fixed(clique(6), ProtocolKind::Ambr));
    s.add_flow(id(1), id(0), 40.0, 1.0, None);
    s.run_until(100.0).unwrap();
    s.check().unwrap();
    assert_eq!(sends(&s, id(1), PacketKind::MonitorAliveRequest, 50.0, 100.0), 0);
    assert_eq!(sends(&s, id(2), PacketKind::MonitorAliveRequest, 50.0, 100.0), 5);
}

#[test]
fn monitor_prunes_departed_member_and_rehellos_below_threshold() {
    let cfg = fixed(clique(6), ProtocolKind::Ambr);
    let mut s = sim(cfg);
    s.run_until(20.0).unwrap();
    assert_eq!(s.proto.members(id(0)).len(), 5);
    s.relocate_at(20.0, id(5), Point::new(1200.0, 1200.0));
    s.run_until(100.0).unwrap();
    s.check().unwrap();
    assert!(!s.proto.members(id(0)).contains(&id(5)));
    assert_eq!(s.proto.members(id(0)).len(), 4);
    assert!(sends(&s, id(0), PacketKind::Hello, 20.0, 100.0) >= 1);
    assert_eq!(s.proto.role(id(0)), Role::Monitor);
}

#[test]
fn pruning_above_threshold_starts_no_session() {
    let mut s = sim(fixed(clique(7), ProtocolKind::Ambr));
    s.relocate_at(20.0, id(6), Point::new(1200.0, 1200.0));
    s.run_until(100.0).unwrap();
    s.check().unwrap();
    assert_eq!(s.proto.members(id(0)).len(), 5);
    assert_eq!(sends(&s, id(0), PacketKind::Hello, 1.0, 100.0), 0);
}

#[test]
fn direct_neighbor_gets_one_data_transmission() {
    let mut s = sim(fixed(clique(6), ProtocolKind::Ambr));
    // Within the neighbor timeout of the initial hello exchange.
    s.inject(5.0, id(3), id(4));
    s.run_until(10.0).unwrap();
    s.check().unwrap();
    assert_eq!(s.net.metrics().data_tx(), 1);
    assert_eq!(s.net.metrics().delivered(), 1);
    assert_eq!(ctl(&s, PacketKind::RouteQuery), 0);
}

#[test]
fn monitor_relays_to_its_own_member() {
    let mut s = sim(with_threshold(line(3, 200.0), 2));
    s.run_until(5.0).unwrap();
    assert_eq!(s.proto.monitors(), vec![id(1)]);
    s.inject(5.0, id(0), id(2));
    s.run_until(15.0).unwrap();
    s.check().unwrap();
    assert_eq!(s.net.metrics().data_tx(), 2);
    assert_eq!(s.net.metrics().delivered(), 1);
    assert_eq!(ctl(&s, PacketKind::RouteQuery), 0);
    assert_eq!(ctl(&s, PacketKind::RouteReply), 0);
}

#[test]
fn diamond_query_caches_first_reply_and_discards_second() {
    let mut s = sim(with_threshold(diamond(), 2));
    s.run_until(5.0).unwrap();
    assert_eq!(s.proto.monitors(), vec![id(1), id(2), id(3)]);
    s.inject(5.0, id(0), id(4));
    s.run_until(15.0).unwrap();
    s.check().unwrap();
    let st = s.proto.stats();
    assert_eq!(st.queries, 1);
    assert_eq!(st.discarded_replies, 1);
    // One query per branch, one answer per branch, one update back to the source.
    assert_eq!(ctl(&s, PacketKind::RouteQuery), 2);
    assert_eq!(ctl(&s, PacketKind::RouteReply), 3);
    assert_eq!(s.net.metrics().delivered(), 1);
    let (qid, first) = st.first_replies.iter().next().unwrap();
    assert_eq!(qid.origin, id(1));
    let cached = s.proto.cached_route(id(1), id(4)).unwrap();
    assert_eq!(cached, &first[..]);
    assert_eq!(cached.len(), 3);
    // The source learned the full route and uses it for the next packet.
    let src = s.proto.cached_route(id(0), id(4)).unwrap().to_vec();
    assert_eq!(&src[1..], cached);
    let data_before = s.net.metrics().data_tx();
    s.inject(15.0, id(0), id(4));
    s.run_until(25.0).unwrap();
    assert_eq!(s.net.metrics().data_tx() - data_before, 3);
    assert_eq!(s.proto.stats().queries, 1);
}

#[test]
fn zero_depth_bound_reports_unreachable_immediately() {
    let mut cfg = with_threshold(diamond(), 2);
    cfg.dl_max = 0;
    let mut s = sim(cfg);
    s.inject(5.0, id(0), id(4));
    s.run_until(15.0).unwrap();
    s.check().unwrap();
    assert_eq!(ctl(&s, PacketKind::RouteQuery), 0);
    assert_eq!(ctl(&s, PacketKind::DestinationUnreachable), 1);
    assert_eq!(s.proto.stats().unreachable_at_source, 1);
    assert_eq!(s.net.metrics().delivered(), 0);
}

#[test]
fn mid_path_break_is_repaired_by_the_holder() {
    // Everything happens while B still remembers D from the initial hellos.
    let mut s = sim(with_threshold(diamond(), 2));
    s.inject(2.0, id(0), id(4));
    s.run_until(5.0).unwrap();
    let via = s.proto.cached_route(id(1), id(4)).unwrap()[1];
    let other = if via == id(2) { id(3) } else { id(2) };
    s.relocate_at(5.0, via, Point::new(1250.0, 1250.0));
    let (q0, r0) = (ctl(&s, PacketKind::RouteQuery), ctl(&s, PacketKind::RouteReply));
    s.inject(5.5, id(0), id(4));
    s.run_until(20.0).unwrap();
    s.check().unwrap();
    let st = s.proto.stats();
    assert_eq!(s.net.metrics().delivered(), 2);
    assert_eq!(st.repair_queries, 1);
    assert_eq!(st.repair_queries_at_source, 0);
    // One query to the surviving branch, its answer, and the update to the source.
    assert_eq!(ctl(&s, PacketKind::RouteQuery) - q0, 1);
    assert_eq!(ctl(&s, PacketKind::RouteReply) - r0, 2);
    assert_eq!(s.proto.cached_route(id(1), id(4)).unwrap(), &[id(1), other, id(4)]);
}

#[test]
fn break_without_alternative_reaches_the_source_as_unreachable() {
    let mut s = sim(with_threshold(line(4, 200.0), 2));
    s.inject(5.0, id(0), id(3));
    s.run_until(15.0).unwrap();
    assert_eq!(s.net.metrics().delivered(), 1);
    s.relocate_at(15.0, id(2), Point::new(1250.0, 1250.0));
    s.inject(15.5, id(0), id(3));
    s.run_until(30.0).unwrap();
    s.check().unwrap();
    let st = s.proto.stats();
    assert_eq!(s.net.metrics().delivered(), 1);
    assert_eq!(st.unreachable_at_source, 1);
    assert_eq!(st.repair_queries_at_source, 0);
    assert!(s.proto.cached_route(id(0), id(3)).is_none());
}
