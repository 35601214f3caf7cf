//! Discrete-event kernel: virtual clock, ordered event queue and a seeded
//! pseudo-random source.
//!
//! Virtual time is an integer count of nanoseconds. Events that share a fire
//! time are dispatched in insertion order, so a run is fully determined by
//! its inputs and seed.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use thiserror::Error;

const NANOS_PER_SEC: f64 = 1e9;

/// A point in virtual time, in nanoseconds since the start of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(nanos: u64) -> Self {
        SimTime(nanos)
    }

    /// Rounds to the nearest nanosecond. Negative and NaN inputs map to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return SimTime::ZERO;
        }
        let nanos = (secs * NANOS_PER_SEC).round();
        if nanos >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(nanos as u64)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    pub fn saturating_add(self, nanos: u64) -> Self {
        SimTime(self.0.saturating_add(nanos))
    }

    pub fn add_secs(self, secs: f64) -> Self {
        self.saturating_add(SimTime::from_secs_f64(secs).0)
    }

    /// Elapsed time from `earlier` to `self`, zero if `earlier` is later.
    pub fn saturating_since(self, earlier: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(earlier.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("event scheduled in the past: fire time {fire} is before the clock {now}")]
    InThePast { fire: SimTime, now: SimTime },
}

/// Identifies a scheduled event so it can be cancelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle {
    ordinal: u64,
}

/// Returned by an event handler to keep going or halt the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Halt,
}

struct Scheduled<E> {
    fire_time: SimTime,
    ordinal: u64,
    payload: E,
}

impl<E> Scheduled<E> {
    fn key(&self) -> (SimTime, u64) {
        (self.fire_time, self.ordinal)
    }
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Single-threaded event engine. `E` is the simulation's event payload.
pub struct Kernel<E> {
    now: SimTime,
    next_ordinal: u64,
    queue: BinaryHeap<Reverse<Scheduled<E>>>,
    live: HashSet<u64>,
    processed: u64,
}

impl<E> Default for Kernel<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Kernel<E> {
    pub fn new() -> Self {
        Kernel {
            now: SimTime::ZERO,
            next_ordinal: 0,
            queue: BinaryHeap::new(),
            live: HashSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events dispatched so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    /// Number of live (scheduled, not cancelled, not yet fired) events.
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn schedule(&mut self, fire_time: SimTime, payload: E) -> Result<EventHandle, ScheduleError> {
        if fire_time < self.now {
            return Err(ScheduleError::InThePast {
                fire: fire_time,
                now: self.now,
            });
        }
        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        self.live.insert(ordinal);
        self.queue.push(Reverse(Scheduled {
            fire_time,
            ordinal,
            payload,
        }));
        Ok(EventHandle { ordinal })
    }

    /// Schedules `delay_nanos` after the current clock; never fails.
    pub fn schedule_in(&mut self, delay_nanos: u64, payload: E) -> EventHandle {
        let at = self.now.saturating_add(delay_nanos);
        self.schedule(at, payload).expect("relative schedule is never in the past")
    }

    /// Returns true if the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.live.remove(&handle.ordinal)
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.live.contains(&handle.ordinal)
    }

    /// Pops the earliest live event firing at or before `stop` and advances
    /// the clock to its fire time.
    pub fn next_event(&mut self, stop: SimTime) -> Option<(SimTime, E)> {
        loop {
            let head = self.queue.peek()?;
            if !self.live.contains(&head.0.ordinal) {
                self.queue.pop();
                continue;
            }
            if head.0.fire_time > stop {
                return None;
            }
            let Reverse(ev) = self.queue.pop().expect("peeked");
            self.live.remove(&ev.ordinal);
            debug_assert!(ev.fire_time >= self.now);
            self.now = ev.fire_time;
            self.processed += 1;
            return Some((ev.fire_time, ev.payload));
        }
    }

    /// Dispatches events in `(fire_time, ordinal)` order until the queue has
    /// nothing at or before `stop`, or the handler halts. Returns the clock.
    pub fn run_until_idle<F>(&mut self, stop: SimTime, mut handler: F) -> SimTime
    where
        F: FnMut(&mut Kernel<E>, E) -> Flow,
    {
        while let Some((_, payload)) = self.next_event(stop) {
            if handler(self, payload) == Flow::Halt {
                break;
            }
        }
        self.now
    }
}

/// splitmix64 generator.
///
/// Constants: state increment 0x9E3779B97F4A7C15, mixing multipliers
/// 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB with shifts 30, 27, 31.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    state: u64,
}

pub const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 output function applied to an arbitrary word. Used to
/// derive independent per-link and per-sweep-point seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { state: seed }
    }

    /// Stream number `index` derived from `seed`.
    pub fn derived(seed: u64, index: u64) -> Self {
        RandomStream::new(mix64(seed ^ mix64(index.wrapping_add(1).wrapping_mul(SPLITMIX_GAMMA))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(SPLITMIX_GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
