//! Random-waypoint mobility.
//!
//! Each node alternates between a pause at its current waypoint and a
//! straight-line leg at constant speed to a uniformly chosen target. Every
//! node draws from its own substream, so a trajectory depends only on
//! `(seed, node)` and never on how often or in which order positions are
//! queried.

use crate::kernel::{RngStream, SimTime, StreamLabel};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(&self, other: &Point, f: f64) -> Point {
        Point {
            x: self.x + (other.x - self.x) * f,
            y: self.y + (other.y - self.y) * f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn contains(&self, p: &Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn random_point(&self, rng: &mut RngStream) -> Point {
        Point::new(rng.uniform() * self.width, rng.uniform() * self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub arena: Arena,
    pub v_min: f64,
    pub v_max: f64,
    pub pause: f64,
    /// Draw each pause uniformly from `[0, 2p]` instead of exactly `p`.
    pub pause_random: bool,
}

impl MobilityParams {
    /// Nodes never move when there is no speed to move with.
    pub fn is_static(&self) -> bool {
        self.v_max <= 0.0
    }
}

/// One straight-line leg of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub target: Point,
    pub speed: f64,
    pub depart_time: SimTime,
    pub arrive_time: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Segment {
    Paused { at: Point, since: SimTime, until: SimTime },
    Moving { origin: Point, leg: Waypoint },
}

/// Row of the optional trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegRecord {
    pub node: usize,
    pub depart: SimTime,
    pub origin: Point,
    pub target: Point,
    pub speed: f64,
}

/// What the caller must schedule next for a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilityEvent {
    /// Node pauses until the given time, then needs [`Mobility::next_leg`].
    PauseUntil(SimTime),
    /// Node is moving and arrives at the given time; call [`Mobility::arrive`].
    ArriveAt(SimTime),
    /// Node will not move again.
    Never,
}

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Mobility {
    params: MobilityParams,
    segments: Vec<Segment>,
    streams: Vec<RngStream>,
    legs: Vec<LegRecord>,
    record_legs: bool,
}

impl Mobility {
    /// Places nodes at `initial` and starts every node paused for `p`.
    pub fn new(params: MobilityParams, initial: Vec<Point>, seed: u64) -> Self {
        let streams = (0..initial.len())
            .map(|i| RngStream::indexed(seed, StreamLabel::Mobility, i as u64))
            .collect::<Vec<_>>();
        let mut m = Mobility {
            params,
            segments: Vec::with_capacity(initial.len()),
            streams,
            legs: Vec::new(),
            record_legs: false,
        };
        for (i, p) in initial.into_iter().enumerate() {
            let until = if params.is_static() {
                f64::INFINITY
            } else {
                m.draw_pause(i)
            };
            m.segments.push(Segment::Paused { at: p, since: 0.0, until });
        }
        m
    }

    pub fn record_legs(&mut self, on: bool) {
        self.record_legs = on;
    }

    pub fn legs(&self) -> &[LegRecord] {
        &self.legs
    }

    pub fn params(&self) -> &MobilityParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    fn draw_pause(&mut self, node: usize) -> f64 {
        if self.params.pause_random {
            self.streams[node].uniform_range(0.0, 2.0 * self.params.pause)
        } else {
            self.params.pause
        }
    }

    /// The first event to schedule for `node` after construction.
    pub fn initial_event(&self, node: usize) -> MobilityEvent {
        match self.segments[node] {
            Segment::Paused { until, .. } if until.is_finite() => MobilityEvent::PauseUntil(until),
            _ => MobilityEvent::Never,
        }
    }

    /// Position of `node` at time `t`, which must fall inside the node's current segment.
    pub fn position_at(&self, node: usize, t: SimTime) -> Point {
        match self.segments[node] {
            Segment::Paused { at, since, until } => {
                assert!(
                    t + TIME_EPS >= since && t <= until + TIME_EPS,
                    "position query at {t} outside pause [{since}, {until}] of node {node}"
                );
                at
            }
            Segment::Moving { origin, leg } => {
                assert!(
                    t + TIME_EPS >= leg.depart_time && t <= leg.arrive_time + TIME_EPS,
                    "position query at {t} outside leg [{}, {}] of node {node}",
                    leg.depart_time,
                    leg.arrive_time
                );
                let span = leg.arrive_time - leg.depart_time;
                if span <= 0.0 || t >= leg.arrive_time {
                    return leg.target;
                }
                if t <= leg.depart_time {
                    return origin;
                }
                let f = ((t - leg.depart_time) / span).clamp(0.0, 1.0);
                origin.lerp(&leg.target, f)
            }
        }
    }

    /// Starts a new leg from the node's pause point. Returns the arrival time.
    pub fn next_leg(&mut self, node: usize, now: SimTime) -> MobilityEvent {
        let origin = match self.segments[node] {
            Segment::Paused { at, .. } => at,
            Segment::Moving { .. } => panic!("next_leg on moving node {node}"),
        };
        let rng = &mut self.streams[node];
        let target = self.params.arena.random_point(rng);
        let speed = rng.uniform_range(self.params.v_min, self.params.v_max);
        let arrive_time = if speed > 0.0 {
            now + origin.dist(&target) / speed
        } else {
            now
        };
        let leg = Waypoint {
            target,
            speed,
            depart_time: now,
            arrive_time,
        };
        if self.record_legs {
            self.legs.push(LegRecord {
                node,
                depart: now,
                origin,
                target,
                speed,
            });
        }
        self.segments[node] = Segment::Moving { origin, leg };
        MobilityEvent::ArriveAt(arrive_time)
    }

    /// Ends the current leg and starts the pause at its target.
    pub fn arrive(&mut self, node: usize, now: SimTime) -> MobilityEvent {
        let at = match self.segments[node] {
            Segment::Moving { leg, .. } => leg.target,
            Segment::Paused { .. } => panic!("arrive on paused node {node}"),
        };
        let until = now + self.draw_pause(node);
        self.segments[node] = Segment::Paused { at, since: now, until };
        MobilityEvent::PauseUntil(until)
    }

    /// Moves a node instantly and freezes it there; used by scripted scenarios.
    pub fn relocate(&mut self, node: usize, to: Point, now: SimTime) {
        self.segments[node] = Segment::Paused {
            at: to,
            since: now,
            until: f64::INFINITY,
        };
    }

    /// The leg a node is currently travelling, if any.
    pub fn current_leg(&self, node: usize) -> Option<Waypoint> {
        match self.segments[node] {
            Segment::Moving { leg, .. } => Some(leg),
            Segment::Paused { .. } => None,
        }
    }

    pub fn is_paused(&self, node: usize) -> bool {
        matches!(self.segments[node], Segment::Paused { .. })
    }
}
