//! Point-to-point link: fixed capacity, one-way propagation delay, Bernoulli
//! loss and a FIFO drop-tail queue.

use std::collections::VecDeque;

use thiserror::Error;

use crate::simkernel::{RandomStream, SimTime};

pub const DEFAULT_QUEUE_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    /// Bits per second.
    pub capacity_bps: f64,
    /// Seconds.
    pub one_way_delay: f64,
    pub loss_rate: f64,
    /// Packets, counting the one being serialized.
    pub queue_limit: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum LinkConfigError {
    #[error("capacity must be positive and finite, got {0}")]
    Capacity(f64),
    #[error("one-way delay must be non-negative and finite, got {0}")]
    Delay(f64),
    #[error("loss rate must lie in [0, 1], got {0}")]
    LossRate(f64),
    #[error("queue limit must be at least 1")]
    QueueLimit,
}

impl LinkConfig {
    /// 0.5 Mbps, 10 ms, lossless.
    pub fn paper_base() -> Self {
        LinkConfig {
            capacity_bps: 500_000.0,
            one_way_delay: 0.010,
            loss_rate: 0.0,
            queue_limit: DEFAULT_QUEUE_LIMIT,
        }
    }

    pub fn validate(&self) -> Result<(), LinkConfigError> {
        if !(self.capacity_bps.is_finite() && self.capacity_bps > 0.0) {
            return Err(LinkConfigError::Capacity(self.capacity_bps));
        }
        if !(self.one_way_delay.is_finite() && self.one_way_delay >= 0.0) {
            return Err(LinkConfigError::Delay(self.one_way_delay));
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return Err(LinkConfigError::LossRate(self.loss_rate));
        }
        if self.queue_limit == 0 {
            return Err(LinkConfigError::QueueLimit);
        }
        Ok(())
    }

    /// Serialization time of `size_bytes` in nanoseconds.
    pub fn serialization_nanos(&self, size_bytes: u32) -> u64 {
        (size_bytes as f64 * 8.0 * 1e9 / self.capacity_bps).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    QueueOverflow,
    RandomLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmitOutcome {
    Delivered(SimTime),
    Dropped(DropReason),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkCounters {
    pub accepted: u64,
    pub delivered: u64,
    pub delivered_bytes: u64,
    pub queue_drops: u64,
    pub random_drops: u64,
}

/// One direction of a link.
#[derive(Debug, Clone)]
pub struct LinkState {
    config: LinkConfig,
    busy_until: SimTime,
    // Serialization finish times of accepted packets, oldest first.
    in_system: VecDeque<SimTime>,
    counters: LinkCounters,
}

impl LinkState {
    pub fn new(config: LinkConfig) -> Self {
        LinkState {
            config,
            busy_until: SimTime::ZERO,
            in_system: VecDeque::new(),
            counters: LinkCounters::default(),
        }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn counters(&self) -> &LinkCounters {
        &self.counters
    }

    /// Packets accepted and not yet fully serialized at `now`.
    pub fn queued(&mut self, now: SimTime) -> usize {
        while self.in_system.front().is_some_and(|&done| done <= now) {
            self.in_system.pop_front();
        }
        self.in_system.len()
    }

    /// Offers a packet of `size_bytes` to the link at `now`.
    ///
    /// A packet that finds `queue_limit` packets ahead of it is dropped on
    /// arrival. An accepted packet occupies the transmitter for its full
    /// serialization time; a random loss is decided after serialization.
    pub fn transmit(&mut self, size_bytes: u32, now: SimTime, rng: &mut RandomStream) -> TransmitOutcome {
        assert!(size_bytes > 0, "zero-length packet offered to link");
        if self.queued(now) >= self.config.queue_limit {
            self.counters.queue_drops += 1;
            return TransmitOutcome::Dropped(DropReason::QueueOverflow);
        }
        let start = now.max(self.busy_until);
        let done = start.saturating_add(self.config.serialization_nanos(size_bytes));
        self.busy_until = done;
        self.in_system.push_back(done);
        self.counters.accepted += 1;

        if rng.next_uniform() < self.config.loss_rate {
            self.counters.random_drops += 1;
            return TransmitOutcome::Dropped(DropReason::RandomLoss);
        }
        self.counters.delivered += 1;
        self.counters.delivered_bytes += size_bytes as u64;
        TransmitOutcome::Delivered(done.add_secs(self.config.one_way_delay))
    }
}
