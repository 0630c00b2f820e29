use ambrsim::harness::run_config;
use ambrsim::packet::PacketKind;
use ambrsim::protocol::Protocol;
use ambrsim::{Ambr, FloodReactive, Placement, Proactive, ProtocolKind, SimConfig, Simulation};
use proptest::prelude::*;

fn small(seed: u64, protocol: ProtocolKind) -> SimConfig {
    SimConfig {
        n: 25,
        area_width: 800.0,
        area_height: 800.0,
        sim_time: 60.0,
        num_flows: 4,
        cbr_rate: 2.0,
        v_max: 10.0,
        seed,
        protocol,
        ..SimConfig::default()
    }
}

#[test]
fn equal_seeds_give_identical_runs() {
    for p in ProtocolKind::ALL {
        let cfg = small(7, p);
        let a = run_config(&cfg).unwrap();
        let b = run_config(&cfg).unwrap();
        assert_eq!(a, b, "{p}");
        assert!(a.invariant_checks >= 60, "{p} checked {} times", a.invariant_checks);
    }
}

#[test]
fn different_seeds_give_different_traces() {
    let a = run_config(&small(1, ProtocolKind::Ambr)).unwrap();
    let b = run_config(&small(2, ProtocolKind::Ambr)).unwrap();
    assert_ne!(a.trace_hash, b.trace_hash);
}

fn snapshot<P: Protocol>(cfg: &SimConfig, proto: P) -> Vec<(Vec<(f64, f64)>, u64)> {
    let mut s = Simulation::new(cfg.clone(), proto).unwrap();
    let mut out = Vec::new();
    for k in 1..=6 {
        s.run_until(k as f64 * 10.0).unwrap();
        let pos = s.net.positions().iter().map(|p| (p.x, p.y)).collect();
        out.push((pos, s.net.metrics().generated()));
    }
    out
}

#[test]
fn protocols_see_identical_mobility_and_traffic() {
    let cfg = small(11, ProtocolKind::Ambr);
    let reference = snapshot(&cfg, Ambr::new(&cfg));
    assert_eq!(reference, snapshot(&cfg, FloodReactive::new(&cfg, false)));
    assert_eq!(reference, snapshot(&cfg, FloodReactive::new(&cfg, true)));
    assert_eq!(reference, snapshot(&cfg, Proactive::new(&cfg)));
}

#[test]
fn static_connected_network_delivers_everything() {
    for seed in 1..=4 {
        let cfg = SimConfig {
            n: 30,
            area_width: 400.0,
            area_height: 400.0,
            v_max: 0.0,
            placement: Placement::Connected,
            sim_time: 100.0,
            seed,
            ..SimConfig::default()
        };
        let r = run_config(&cfg).unwrap().report;
        assert!(r.flows_generated > 0);
        assert_eq!(r.flows_delivered, r.flows_generated, "seed {seed}");
    }
}

#[test]
fn counters_reconcile_with_packet_classes() {
    let r = run_config(&small(3, ProtocolKind::FloodReactiveLr)).unwrap().report;
    let sum: u64 = r.control_tx.values().sum();
    assert_eq!(sum, r.control_total);
    assert!(!r.control_tx.contains_key(&PacketKind::Data));
    assert_eq!(r.overhead_per_node, r.control_total as f64 / r.nodes as f64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_runs_keep_every_invariant(
        seed in 1u64..10_000,
        n in 2usize..30,
        v_max in 0.0f64..25.0,
        pause in 0.0f64..20.0,
        loss in prop_oneof![Just(0.0), 0.0f64..0.3],
        t in 1usize..8,
        dl_max in 0u32..6,
        proto in 0usize..4,
    ) {
        let cfg = SimConfig {
            n,
            area_width: 700.0,
            area_height: 700.0,
            sim_time: 40.0,
            num_flows: 3,
            cbr_rate: 4.0,
            v_min: v_max.min(1.0),
            v_max,
            pause,
            loss_prob: loss,
            monitor_threshold: t,
            dl_max,
            seed,
            protocol: ProtocolKind::ALL[proto],
            ..SimConfig::default()
        };
        let run = run_config(&cfg);
        prop_assert!(run.is_ok(), "{:?}", run.err());
        let r = run.unwrap().report;
        prop_assert!(r.flows_delivered <= r.flows_generated);
        prop_assert!((0.0..=1.0).contains(&r.delivery_ratio));
        prop_assert!(r.hop_counts.iter().all(|&h| h >= 1));
    }
}
