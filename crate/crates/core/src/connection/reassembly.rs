use std::collections::BTreeMap;

use bytes::Bytes;

use crate::simkernel::SimTime;
use crate::spurious;
use crate::subflow::{Segment, SeqRange, MAX_SACK_BLOCKS};

/// What the receiver puts in the ACK for one data arrival.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AckDescriptor {
    pub data_ack: u64,
    pub sack_blocks: Vec<SeqRange>,
    pub dsack_block: Option<SeqRange>,
    pub ts_echo: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    pub ack: AckDescriptor,
    /// Bytes of the segment not held before.
    pub new_bytes: u64,
    /// Chunks released to the application, in stream order.
    pub delivered: Vec<Bytes>,
}

/// Connection-level receive buffer. Unbounded.
#[derive(Debug, Clone, Default)]
pub struct ReassemblyState {
    rcv_data_next: u64,
    // Out-of-order data keyed by start offset. Disjoint, every key is above
    // `rcv_data_next`.
    chunks: BTreeMap<u64, Bytes>,
}

impl ReassemblyState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Lowest byte not yet received in order.
    pub fn rcv_data_next(&self) -> u64 {
        self.rcv_data_next
    }

    /// Received ranges above `rcv_data_next`, merged, in ascending order.
    pub fn stored_ranges(&self) -> Vec<SeqRange> {
        let mut out: Vec<SeqRange> = Vec::new();
        for (&start, chunk) in &self.chunks {
            let end = start + chunk.len() as u64;
            match out.last_mut() {
                Some(last) if last.end == start => last.end = end,
                _ => out.push(SeqRange::new(start, end)),
            }
        }
        out
    }

    pub fn is_received(&self, pos: u64) -> bool {
        pos < self.rcv_data_next || self.chunk_at(pos).is_some()
    }

    fn chunk_at(&self, pos: u64) -> Option<(u64, u64)> {
        let (&start, chunk) = self.chunks.range(..=pos).next_back()?;
        let end = start + chunk.len() as u64;
        (pos < end).then_some((start, end))
    }

    // End of the contiguous received run starting at `pos`, capped at `limit`.
    fn covered_until(&self, mut pos: u64, limit: u64) -> u64 {
        if pos < self.rcv_data_next {
            pos = self.rcv_data_next.min(limit);
        }
        while pos < limit {
            match self.chunk_at(pos) {
                Some((_, end)) => pos = end.min(limit),
                None => break,
            }
        }
        pos
    }

    /// Lowest contiguous piece of `range` already received.
    pub fn duplicated_part(&self, range: SeqRange) -> Option<SeqRange> {
        let mut pos = range.start;
        while pos < range.end {
            if self.is_received(pos) {
                return Some(SeqRange::new(pos, self.covered_until(pos, range.end)));
            }
            // Skip to the next received byte inside the range.
            pos = match self.chunks.range(pos..).next() {
                Some((&start, _)) if start < range.end => start,
                _ => return None,
            };
        }
        None
    }

    pub fn on_data_arrival(&mut self, seg: &Segment) -> Arrival {
        let payload = &seg.payload;
        let range = SeqRange::new(seg.data_seq, seg.data_seq + payload.len() as u64);
        let dsack_block = if range.is_empty() {
            None
        } else {
            spurious::dsack_receiver_report(self, range)
        };

        let mut new_bytes = 0u64;
        let mut pos = range.start.max(self.rcv_data_next);
        while pos < range.end {
            if let Some((_, end)) = self.chunk_at(pos) {
                pos = end;
                continue;
            }
            let gap_end = self
                .chunks
                .range(pos..)
                .next()
                .map(|(&s, _)| s)
                .unwrap_or(u64::MAX)
                .min(range.end);
            let lo = (pos - range.start) as usize;
            let hi = (gap_end - range.start) as usize;
            self.chunks.insert(pos, payload.slice(lo..hi));
            new_bytes += gap_end - pos;
            pos = gap_end;
        }

        let mut delivered = Vec::new();
        while let Some(chunk) = self.chunks.remove(&self.rcv_data_next) {
            self.rcv_data_next += chunk.len() as u64;
            delivered.push(chunk);
        }

        Arrival {
            ack: AckDescriptor {
                data_ack: self.rcv_data_next,
                sack_blocks: self.sack_blocks(range),
                dsack_block,
                ts_echo: seg.ts_val,
            },
            new_bytes,
            delivered,
        }
    }

    // The block holding the latest arrival goes first, then the highest
    // remaining blocks.
    fn sack_blocks(&self, latest: SeqRange) -> Vec<SeqRange> {
        let ranges = self.stored_ranges();
        let mut out = Vec::with_capacity(MAX_SACK_BLOCKS);
        if let Some(first) = ranges.iter().find(|r| r.start < latest.end && latest.start < r.end) {
            out.push(*first);
        }
        for r in ranges.iter().rev() {
            if out.len() == MAX_SACK_BLOCKS {
                break;
            }
            if !out.contains(r) {
                out.push(*r);
            }
        }
        out
    }
}
