//! Prints control transmissions per packet kind for one run.
//!
//! Usage: `cargo run --release --example breakdown -- n=50 protocol=ambr`

use ambrsim::{harness, Ambr, ProtocolKind, SimConfig, Simulation};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cfg = match SimConfig::parse(&args.join(" ")) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    if cfg.protocol == ProtocolKind::Ambr {
        let mut sim = Simulation::new(cfg.clone(), Ambr::new(&cfg)).expect("valid config");
        let mut t = 0.0;
        while t < cfg.sim_time {
            t += 10.0;
            sim.run_until(t).expect("run");
            let n = cfg.n;
            let mons = sim.proto.monitors();
            let pos = sim.net.positions();
            let mut roles = [0usize; 3];
            let mut covered = 0;
            for i in 0..n {
                let id = ambrsim::packet::NodeId(i as u32);
                roles[match sim.proto.role(id) {
                    ambrsim::protocol::ambr::Role::Monitor => 0,
                    ambrsim::protocol::ambr::Role::Affiliated(_) => 1,
                    ambrsim::protocol::ambr::Role::Unaffiliated => 2,
                }] += 1;
                if mons.iter().any(|m| pos[m.idx()].dist(&pos[i]) <= cfg.range) {
                    covered += 1;
                }
            }
            println!("t={t:>5} monitors={} affiliated={} unaffiliated={} geometric_coverage={covered}/{n}", roles[0], roles[1], roles[2]);
        }
        println!("{:#?}", AmbrSummary::from(&sim.proto));
    }
    let run = harness::run_config(&cfg).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(1);
    });
    let r = &run.report;
    for (kind, count) in &r.control_tx {
        println!("{kind:?}\t{count}");
    }
    println!("control_total\t{}", r.control_total);
    println!("data_tx\t{}", r.data_tx);
    println!("overhead_per_node\t{:.3}", r.overhead_per_node);
    println!("delivery_ratio\t{:.4}", r.delivery_ratio);
    println!("mean_hops\t{:.2}", r.mean_hops());
    println!("events\t{}", run.events);
}

#[derive(Debug)]
#[allow(dead_code)]
struct AmbrSummary {
    monitors: usize,
    hello_sessions: u64,
    elections: u64,
    demotions: u64,
    affiliations: u64,
    queries: u64,
    repair_queries: u64,
    unreachable_at_source: u64,
    discarded_replies: u64,
    query_timeouts: u64,
    uncovered_queries: u64,
    dropped: u64,
    drop_reasons: std::collections::BTreeMap<&'static str, u64>,
}

impl From<&Ambr> for AmbrSummary {
    fn from(a: &Ambr) -> Self {
        let s = a.stats();
        AmbrSummary {
            monitors: a.monitors().len(),
            hello_sessions: s.hello_sessions,
            elections: s.elections,
            demotions: s.demotions,
            affiliations: s.affiliations,
            queries: s.queries,
            repair_queries: s.repair_queries,
            unreachable_at_source: s.unreachable_at_source,
            discarded_replies: s.discarded_replies,
            query_timeouts: s.query_timeouts,
            uncovered_queries: s.uncovered_queries,
            dropped: s.dropped,
            drop_reasons: s.drop_reasons.clone(),
        }
    }
}
