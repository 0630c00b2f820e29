#![allow(dead_code)]

use ambrsim::mobility::Point;
use ambrsim::packet::NodeId;
use ambrsim::{Placement, ProtocolKind, SimConfig};

pub fn id(i: u32) -> NodeId {
    NodeId(i)
}

/// `n` nodes on the x axis, `spacing` meters apart.
pub fn line(n: usize, spacing: f64) -> Vec<Point> {
    (0..n).map(|i| Point::new(50.0 + i as f64 * spacing, 50.0)).collect()
}

/// `n` nodes within a few meters of each other.
pub fn clique(n: usize) -> Vec<Point> {
    (0..n)
        .map(|i| Point::new(100.0 + (i % 4) as f64, 100.0 + (i / 4) as f64))
        .collect()
}

/// Static network at fixed positions, no background traffic, nodes up at t = 0.
pub fn fixed(points: Vec<Point>, protocol: ProtocolKind) -> SimConfig {
    SimConfig {
        n: points.len(),
        placement: Placement::Fixed(points),
        v_min: 0.0,
        v_max: 0.0,
        num_flows: 0,
        startup_jitter: 0.0,
        sim_time: 100.0,
        protocol,
        ..SimConfig::default()
    }
}

/// Shortest hop counts from `src` in the unit-disk graph of `pts`.
pub fn bfs_hops(pts: &[Point], range: f64, src: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; pts.len()];
    dist[src] = Some(0);
    let mut queue = std::collections::VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for v in 0..pts.len() {
            if dist[v].is_none() && pts[u].dist(&pts[v]) <= range {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}
