//! Discrete-event scheduler, simulation clock and seeded random streams.
//!
//! Events are ordered by `(fire_time, seq)` where `seq` is a monotone
//! insertion counter, so two events scheduled for the same instant are
//! dispatched in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BinaryHeap, HashSet};
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::SimError;

/// Simulated time in seconds.
pub type SimTime = f64;

/// Handle returned by [`Scheduler::schedule`]; permits cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(pub u64);

/// A dispatched event.
#[derive(Debug, Clone)]
pub struct Event<E> {
    pub fire_time: SimTime,
    pub seq: u64,
    pub kind: E,
}

struct Pending<E> {
    fire_time: SimTime,
    seq: u64,
    kind: E,
}

impl<E> PartialEq for Pending<E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<E> Eq for Pending<E> {}

impl<E> PartialOrd for Pending<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Pending<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .total_cmp(&self.fire_time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Implemented by event payloads that want to contribute to the dispatch trace hash.
pub trait TraceTag {
    fn trace_tag(&self) -> u64;
}

/// Priority-queue scheduler with cancellation and a running dispatch hash.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Pending<E>>,
    live: HashSet<u64>,
    dispatched: u64,
    trace: DefaultHasher,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: 0.0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            live: HashSet::new(),
            dispatched: 0,
            trace: DefaultHasher::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events dispatched so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Number of live (not cancelled) pending events.
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    /// Schedules `kind` at absolute time `fire_time`.
    ///
    /// Scheduling into the past is a programming error and panics.
    pub fn schedule(&mut self, fire_time: SimTime, kind: E) -> EventId {
        assert!(
            fire_time >= self.now && fire_time.is_finite(),
            "event scheduled into the past: {} < {}",
            fire_time,
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Pending { fire_time, seq, kind });
        self.live.insert(seq);
        EventId(seq)
    }

    /// Schedules `kind` after `delay` seconds.
    pub fn schedule_in(&mut self, delay: SimTime, kind: E) -> EventId {
        self.schedule(self.now + delay, kind)
    }

    /// Cancels a pending event. Returns false when it already fired or was cancelled.
    pub fn cancel(&mut self, id: EventId) -> bool {
        self.live.remove(&id.0)
    }

    /// Pops the next live event with `fire_time <= t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<E>>
    where
        E: TraceTag,
    {
        loop {
            let head = self.queue.peek()?;
            if head.fire_time > t_end {
                return None;
            }
            let p = self.queue.pop().expect("peeked");
            if !self.live.remove(&p.seq) {
                continue;
            }
            debug_assert!(p.fire_time >= self.now);
            self.now = p.fire_time;
            self.dispatched += 1;
            p.fire_time.to_bits().hash(&mut self.trace);
            p.seq.hash(&mut self.trace);
            p.kind.trace_tag().hash(&mut self.trace);
            return Some(Event {
                fire_time: p.fire_time,
                seq: p.seq,
                kind: p.kind,
            });
        }
    }

    /// Moves the clock forward to `t`, which must not precede the clock.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.now, "clock cannot move backwards");
        self.now = t;
    }

    /// Dispatches every event with `fire_time <= t_end` through `handler`,
    /// then sets the clock to `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> SimTime
    where
        E: TraceTag,
        F: FnMut(&mut Self, Event<E>),
    {
        assert!(t_end >= self.now, "run_until into the past");
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
        }
        self.now = t_end;
        self.now
    }

    /// Hash over every dispatched `(fire_time, seq, tag)` triple so far.
    pub fn trace_hash(&self) -> u64 {
        self.trace.finish()
    }
}

/// Purpose tag of an RNG substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    Placement,
    Mobility,
    Traffic,
    Loss,
    Protocol,
    Analytic,
}

impl StreamLabel {
    fn salt(self) -> u64 {
        match self {
            StreamLabel::Placement => 0x706c_6163_656d_656e,
            StreamLabel::Mobility => 0x6d6f_6269_6c69_7479,
            StreamLabel::Traffic => 0x7472_6166_6669_6321,
            StreamLabel::Loss => 0x6c6f_7373_6c6f_7373,
            StreamLabel::Protocol => 0x7072_6f74_6f63_6f6c,
            StreamLabel::Analytic => 0x616e_616c_7974_6963,
        }
    }
}

// splitmix64 finalizer; spreads (seed, label, index) into a 64-bit stream key.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A labelled random stream derived from `(master seed, label, index)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    label: StreamLabel,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, label: StreamLabel) -> Self {
        Self::indexed(master_seed, label, 0)
    }

    /// Independent substream `index` under `label` (e.g. one per node).
    pub fn indexed(master_seed: u64, label: StreamLabel, index: u64) -> Self {
        let key = mix(mix(master_seed ^ label.salt()).wrapping_add(index));
        RngStream {
            label,
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    pub fn label(&self) -> StreamLabel {
        self.label
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in `[lo, hi]`; returns `lo` when the interval is degenerate.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }

    /// Sample from Exp(rate); rejects nonpositive or non-finite rates.
    pub fn exponential(&mut self, rate: f64) -> Result<f64, SimError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(SimError::InvalidParameter(format!(
                "exponential rate must be positive, got {rate}"
            )));
        }
        let exp = Exp::new(rate).map_err(|e| SimError::InvalidParameter(e.to_string()))?;
        loop {
            let x: f64 = exp.sample(&mut self.rng);
            if x > 0.0 {
                return Ok(x);
            }
        }
    }
}

/// Convenience wrapper matching the kernel's `draw_exponential` contract.
pub fn draw_exponential(stream: &mut RngStream, rate: f64) -> Result<f64, SimError> {
    stream.exponential(rate)
}
