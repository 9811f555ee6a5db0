//! Deterministic discrete-event core: virtual clock, event queue and seeded
//! loss randomness.
//!
//! Events are ordered by `(fire_at, seq_no)`. The sequence number is assigned
//! at scheduling time from a monotonic counter, so two events scheduled for
//! the same instant are dispatched in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Virtual time in integer nanoseconds. Used for both instants and spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond; negative or NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            SimTime(0)
        } else {
            SimTime((s * 1e9).round() as u64)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    PacketArrival,
    TimerExpiry,
    AppWrite,
    SampleTick,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PacketArrival => "arrival",
            EventKind::TimerExpiry => "timer",
            EventKind::AppWrite => "app",
            EventKind::SampleTick => "sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent<P> {
    pub fire_at: SimTime,
    pub seq_no: u64,
    pub kind: EventKind,
    pub payload: P,
}

/// Handle returned by [`EventQueue::schedule`]; used to cancel the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("event scheduled in the past: fire_at {fire_at} < now {now}")]
    PastEvent { fire_at: SimTime, now: SimTime },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
}

struct Entry<P>(SimEvent<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq_no == other.0.seq_no
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq_no) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_at
            .cmp(&self.0.fire_at)
            .then_with(|| other.0.seq_no.cmp(&self.0.seq_no))
    }
}

pub struct EventQueue<P> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<P>>,
    cancelled: HashSet<u64>,
    dispatched: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events still pending, cancelled ones included until they
    /// reach the head of the queue.
    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        kind: EventKind,
        payload: P,
    ) -> Result<EventHandle, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::PastEvent {
                fire_at,
                now: self.now,
            });
        }
        let seq_no = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(SimEvent {
            fire_at,
            seq_no,
            kind,
            payload,
        }));
        Ok(EventHandle(seq_no))
    }

    /// Returns false if the handle was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.cancelled.insert(handle.0)
    }

    /// Pops the next live event with `fire_at <= deadline` and advances the
    /// clock to it. Returns `None` once nothing is due before the deadline.
    pub fn pop_due(&mut self, deadline: SimTime) -> Option<SimEvent<P>> {
        loop {
            let due = matches!(self.heap.peek(), Some(e) if e.0.fire_at <= deadline);
            if !due {
                return None;
            }
            let Entry(ev) = self.heap.pop()?;
            if !self.cancelled.is_empty() && self.cancelled.remove(&ev.seq_no) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            self.dispatched += 1;
            return Some(ev);
        }
    }

    /// Moves the clock forward without dispatching. No-op if `t` is in the past.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Dispatches every event due by `deadline` through `handler`, then sets
    /// the clock to `deadline`. The handler may schedule further events.
    pub fn run_until<F>(&mut self, deadline: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut EventQueue<P>, SimEvent<P>),
    {
        let mut count = 0;
        while let Some(ev) = self.pop_due(deadline) {
            count += 1;
            handler(self, ev);
        }
        self.advance_to(deadline);
        count
    }
}

/// Derives a 64-bit seed from a master seed and a label with SHA-256, so the
/// mapping is identical on every platform.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

/// A named, independently seeded pseudo-random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    rng: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: impl Into<String>) -> Self {
        let stream_id = stream_id.into();
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &stream_id));
        RngStream {
            seed,
            stream_id,
            rng,
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn bernoulli(&mut self, p: f64) -> Result<bool, EngineError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(EngineError::BadProbability(p));
        }
        self.draws += 1;
        Ok(self.rng.gen_bool(p))
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_in_range(&mut self, lo: u32, hi: u32) -> u32 {
        self.draws += 1;
        self.rng.gen_range(lo..=hi)
    }
}
