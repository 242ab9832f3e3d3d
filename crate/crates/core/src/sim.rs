//! Discrete-event engine: a microsecond clock, an ordered future-event list
//! with cancellable handles, and seeded random sub-streams.
//!
//! Events are totally ordered by `(fire_at, seq)` where `seq` is assigned at
//! scheduling time, so two events due at the same instant fire in the order
//! they were scheduled.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time in whole microseconds since the start of a run.
///
/// Also used for spans (delays, timer durations).
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond; negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e6).round().max(0.0) as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        SimTime((ms * 1e3).round().max(0.0) as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    /// Index of the whole second this instant falls in.
    pub const fn whole_seconds(self) -> u64 {
        self.0 / 1_000_000
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
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
        *self = *self + rhs;
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
        write!(f, "{}.{:06}s", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("cannot schedule an event at {at} before the current time {now}")]
    InPast { at: SimTime, now: SimTime },
}

/// Instruction from a component that owns a single timer but no clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerCommand {
    /// Leave the timer as it is.
    Keep,
    Stop,
    /// (Re)arm the timer to fire at the given instant, replacing any
    /// running one.
    Start(SimTime),
}

/// Handle returned by [`Scheduler::schedule`]; identifies one scheduled event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

/// One entry of the future-event list.
#[derive(Debug, Clone)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: E,
}

impl<E> PartialEq for Event<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<E> Eq for Event<E> {}

impl<E> PartialOrd for Event<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Event<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub events_processed: u64,
    pub final_time: SimTime,
}

/// Counters for the conservation check: every scheduled event is processed,
/// cancelled, or still pending.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SchedulerCounters {
    pub scheduled: u64,
    pub processed: u64,
    pub cancelled: u64,
    pub pending: u64,
}

/// Future-event list plus the simulation clock.
///
/// Cancellation is lazy: cancelled entries stay in the heap and are skipped
/// when they reach the front.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Event<E>>>,
    pending: HashSet<u64>,
    processed: u64,
    cancelled: u64,
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
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashSet::new(),
            processed: 0,
            cancelled: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: E) -> Result<EventHandle, ScheduleError> {
        if fire_at < self.now {
            return Err(ScheduleError::InPast {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.pending.insert(seq);
        self.heap.push(Reverse(Event {
            fire_at,
            seq,
            payload,
        }));
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` after the current time; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, payload: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, payload)
            .expect("relative schedule is never in the past")
    }

    /// Returns true iff the event was still pending and is now removed.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.pending.remove(&handle.0) {
            self.cancelled += 1;
            true
        } else {
            false
        }
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains(&handle.0)
    }

    /// Removes and returns the next live event due at or before `t_end`,
    /// advancing the clock to its fire time.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<E>> {
        loop {
            let head = self.heap.peek()?;
            if head.0.fire_at > t_end {
                return None;
            }
            let Reverse(ev) = self.heap.pop().expect("peeked");
            if !self.pending.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            self.processed += 1;
            return Some(ev);
        }
    }

    /// Moves the clock forward without processing anything.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.now, "clock cannot move backwards");
        self.now = t;
    }

    /// Processes every event due at or before `t_end` in total order, then
    /// sets the clock to `t_end`. The handler may schedule further events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> RunSummary
    where
        F: FnMut(&mut Self, Event<E>),
    {
        assert!(t_end >= self.now, "run_until target is in the past");
        let before = self.processed;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
        }
        self.now = t_end;
        RunSummary {
            events_processed: self.processed - before,
            final_time: self.now,
        }
    }

    pub fn counters(&self) -> SchedulerCounters {
        SchedulerCounters {
            scheduled: self.next_seq,
            processed: self.processed,
            cancelled: self.cancelled,
            pending: self.pending.len() as u64,
        }
    }
}

/// Name of the generator behind [`RandomStream`].
pub const RNG_ALGORITHM: &str = "chacha8";

/// Seeded pseudo-random stream.
///
/// Sub-streams share the run seed but select distinct ChaCha stream ids
/// derived from a fixed label, so adding a consumer never shifts the draws
/// seen by another.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn substream(seed: u64, label: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(label.as_bytes()));
        RandomStream { rng }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Draws only when `0 < p < 1`; the degenerate probabilities consume nothing.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.rng.gen_range(0..n)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
