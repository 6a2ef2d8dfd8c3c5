//! Deterministic discrete-event engine.
//!
//! The engine owns a virtual clock in integer nanoseconds and a priority
//! queue of pending events. Events with equal fire times are dispatched in
//! insertion order, so a run is fully determined by its configuration and
//! seed. Randomness comes from [`RngStream`], one independent stream per
//! device.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Simulation time in nanoseconds since the start of the run.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Tenths of a microsecond; the guard interval (0.8 µs) is the finest
    /// protocol quantity.
    pub const fn from_tenth_micros(t: u64) -> Self {
        SimTime(t * 100)
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

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub const fn mul(self, k: u64) -> SimTime {
        SimTime(self.0 * k)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("SimTime subtraction underflow"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Handle returned by [`Scheduler::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// A scheduled event as seen by the dispatcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub payload: E,
}

struct Entry<E> {
    fire_at: SimTime,
    sequence: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.fire_at, self.sequence) == (other.fire_at, other.sequence)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_at, self.sequence).cmp(&(other.fire_at, other.sequence))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub events_fired: u64,
    pub final_clock: SimTime,
}

/// Event queue plus virtual clock.
pub struct Scheduler<E> {
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
    cancelled: HashSet<u64>,
    fired: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            fired: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn events_fired(&self) -> u64 {
        self.fired
    }

    /// Number of pending, uncancelled events.
    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    /// Schedules `payload` to fire at `fire_at`.
    ///
    /// Panics if `fire_at` lies in the past: that is a logic error in the
    /// caller and the run cannot continue meaningfully.
    pub fn schedule(&mut self, fire_at: SimTime, payload: E) -> EventHandle {
        assert!(
            fire_at >= self.now,
            "event scheduled in the past: fire_at={fire_at}, now={}",
            self.now
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse(Entry {
            fire_at,
            sequence,
            payload,
        }));
        EventHandle(sequence)
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> EventHandle {
        self.schedule(self.now + delay, payload)
    }

    /// Cancels a pending event. Cancelling an event that already fired or
    /// was already cancelled is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if handle.0 < self.next_sequence && self.queue.iter().any(|e| e.0.sequence == handle.0) {
            self.cancelled.insert(handle.0);
        }
    }

    fn peek_live(&mut self) -> Option<SimTime> {
        while let Some(Reverse(top)) = self.queue.peek() {
            if self.cancelled.remove(&top.sequence) {
                self.queue.pop();
            } else {
                return Some(top.fire_at);
            }
        }
        None
    }

    /// Pops the next live event if it fires at or before `end`, advancing the
    /// clock to its fire time.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Event<E>> {
        let at = self.peek_live()?;
        if at > end {
            return None;
        }
        let Reverse(entry) = self.queue.pop().expect("peeked entry");
        debug_assert!(entry.fire_at >= self.now, "clock went backwards");
        self.now = entry.fire_at;
        self.fired += 1;
        Some(Event {
            fire_at: entry.fire_at,
            sequence: entry.sequence,
            payload: entry.payload,
        })
    }

    /// Dispatches every event with `fire_at <= end` through `handler`.
    ///
    /// On return the clock equals `end` when the queue still holds later
    /// events (or `end` was reached), and the last dispatch time otherwise.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> RunSummary
    where
        F: FnMut(&mut Self, Event<E>),
    {
        let start_fired = self.fired;
        while let Some(ev) = self.pop_until(end) {
            handler(self, ev);
        }
        if self.peek_live().is_some() && self.now < end {
            self.now = end;
        }
        RunSummary {
            events_fired: self.fired - start_fired,
            final_clock: self.now,
        }
    }
}

/// Independent, reproducible pseudo-random stream.
///
/// Identical `(seed, stream_id)` pairs produce identical draw sequences on
/// every platform. Different stream ids select disjoint ChaCha streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform integer in `[lo, hi]`. Panics when `lo > hi`.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi, "uniform_int: empty range [{lo}, {hi}]");
        self.rng.gen_range(lo..=hi)
    }

    /// Uniform real in `[lo, hi)`.
    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            return lo;
        }
        self.rng.gen_range(lo..hi)
    }
}
