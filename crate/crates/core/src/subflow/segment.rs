use std::fmt;

use bytes::Bytes;

use crate::simkernel::SimTime;

/// Wire size of a pure acknowledgment.
pub const ACK_SIZE_BYTES: u32 = 40;

pub const MAX_SACK_BLOCKS: usize = 3;

/// Half-open range of connection-level (data sequence) bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeqRange {
    pub start: u64,
    pub end: u64,
}

impl SeqRange {
    pub fn new(start: u64, end: u64) -> Self {
        debug_assert!(start <= end);
        SeqRange { start, end }
    }

    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains_range(&self, other: &SeqRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for SeqRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// Why a segment was sent again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RetransmitKind {
    Fast,
    Timeout,
    PartialAck,
}

/// A simulated packet: either data (`size_bytes > 0`) or a pure ACK.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub subflow_id: usize,
    pub data_seq: u64,
    pub subflow_seq: u64,
    pub size_bytes: u32,
    pub ts_val: SimTime,
    pub ts_echo: Option<SimTime>,
    pub data_ack: Option<u64>,
    pub sack_blocks: Vec<SeqRange>,
    pub dsack_block: Option<SeqRange>,
    pub retransmit: Option<RetransmitKind>,
    pub payload: Bytes,
}

impl Segment {
    pub fn data(subflow_id: usize, data_seq: u64, subflow_seq: u64, payload: Bytes, ts_val: SimTime) -> Self {
        Segment {
            subflow_id,
            data_seq,
            subflow_seq,
            size_bytes: payload.len() as u32,
            ts_val,
            ts_echo: None,
            data_ack: None,
            sack_blocks: Vec::new(),
            dsack_block: None,
            retransmit: None,
            payload,
        }
    }

    pub fn ack(subflow_id: usize, data_ack: u64, ts_val: SimTime) -> Self {
        Segment {
            subflow_id,
            data_seq: 0,
            subflow_seq: 0,
            size_bytes: 0,
            ts_val,
            ts_echo: None,
            data_ack: Some(data_ack),
            sack_blocks: Vec::new(),
            dsack_block: None,
            retransmit: None,
            payload: Bytes::new(),
        }
    }

    pub fn is_ack(&self) -> bool {
        self.size_bytes == 0
    }

    pub fn is_retransmission(&self) -> bool {
        self.retransmit.is_some()
    }

    pub fn data_range(&self) -> SeqRange {
        SeqRange::new(self.data_seq, self.data_seq + self.size_bytes as u64)
    }

    /// Bytes occupying the link: the payload for data, a fixed header for ACKs.
    pub fn wire_size(&self) -> u32 {
        if self.is_ack() {
            ACK_SIZE_BYTES
        } else {
            self.size_bytes
        }
    }
}
