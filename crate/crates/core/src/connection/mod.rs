//! Connection layer: the shared data sequence space, round-robin mapping of
//! new data onto subflows, connection-level ACK handling and the receiver.

mod reassembly;

use std::collections::{BTreeMap, VecDeque};

use bytes::Bytes;
use thiserror::Error;

pub use reassembly::{AckDescriptor, Arrival, ReassemblyState};

use crate::coupling::{CouplingMode, CouplingView};
use crate::simkernel::{mix64, SimTime};
use crate::spurious::{self, DetectorChoice, Restoration, SpuriousSnapshot, Verdict};
use crate::subflow::{AckAction, AckInput, MappedSegment, Phase, RetransmitKind, Segment, SeqRange, SubflowConfig, SubflowState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolViolation {
    #[error("segment carries no data ACK")]
    NotAnAck,
    #[error("ACK for data never sent: data_ack {data_ack} beyond {snd_nxt}")]
    AckBeyondSent { data_ack: u64, snd_nxt: u64 },
    #[error("ACK arrived on unknown subflow {0}")]
    UnknownSubflow(usize),
    #[error("range {0} is not a mapped segment")]
    Unmapped(SeqRange),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blocked {
    /// No subflow has room in its window.
    NoWindow,
    /// Everything has been sent at least once.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mapping {
    pub end: u64,
    pub subflow: usize,
    pub subflow_seq: u64,
}

#[derive(Debug, Clone)]
pub struct ConnectionState {
    pub data_snd_nxt: u64,
    pub data_una: u64,
    pub mappings: BTreeMap<u64, Mapping>,
    /// Index of the subflow served last.
    pub scheduler_cursor: usize,
    pub transfer_size: u64,
    pub mss: u32,
}

impl ConnectionState {
    pub fn new(transfer_size: u64, mss: u32, subflows: usize) -> Self {
        ConnectionState {
            data_snd_nxt: 0,
            data_una: 0,
            mappings: BTreeMap::new(),
            scheduler_cursor: subflows.saturating_sub(1),
            transfer_size,
            mss,
        }
    }

    pub fn transfer_complete(&self) -> bool {
        self.data_una == self.transfer_size
    }

    /// Subflow that carries retransmissions of `range`: always the subflow
    /// the range was first mapped on.
    pub fn retransmit_policy(&self, range: SeqRange) -> Result<usize, ProtocolViolation> {
        match self.mappings.get(&range.start) {
            Some(m) if m.end == range.end => Ok(m.subflow),
            _ => Err(ProtocolViolation::Unmapped(range)),
        }
    }
}

/// Deterministic application byte stream: byte `i` is a fixed function of `i`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DataSource;

impl DataSource {
    pub fn bytes(&self, start: u64, len: u32) -> Bytes {
        let mut out = Vec::with_capacity(len as usize);
        let mut word_idx = u64::MAX;
        let mut word = 0u64;
        for pos in start..start + len as u64 {
            if pos / 8 != word_idx {
                word_idx = pos / 8;
                word = mix64(word_idx);
            }
            out.push((word >> ((pos % 8) * 8)) as u8);
        }
        Bytes::from(out)
    }
}

/// FNV-1a over a byte stream; chunking does not affect the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamChecksum {
    hash: u64,
    len: u64,
}

impl Default for StreamChecksum {
    fn default() -> Self {
        StreamChecksum {
            hash: 0xcbf2_9ce4_8422_2325,
            len: 0,
        }
    }
}

impl StreamChecksum {
    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.hash ^= b as u64;
            self.hash = self.hash.wrapping_mul(0x0100_0000_01b3);
        }
        self.len += bytes.len() as u64;
    }

    pub fn value(&self) -> u64 {
        self.hash
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConnEventKind {
    FastRetransmit,
    Rto,
    SpuriousDetected {
        detector: DetectorChoice,
        snapshot: SpuriousSnapshot,
    },
    Restore(Restoration),
}

/// A protocol event with the subflow's congestion state right after it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnEvent {
    pub subflow: usize,
    pub kind: ConnEventKind,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
}

/// Sending side of a multipath connection.
#[derive(Debug, Clone)]
pub struct Connection {
    pub state: ConnectionState,
    pub subflows: Vec<SubflowState>,
    pub mode: CouplingMode,
    pub detector: DetectorChoice,
    source: DataSource,
    checksum: StreamChecksum,
    outbox: VecDeque<Segment>,
    events: Vec<ConnEvent>,
    pub protocol_violations: u64,
}

impl Connection {
    pub fn new(
        transfer_size: u64,
        subflows: usize,
        cfg: SubflowConfig,
        mode: CouplingMode,
        detector: DetectorChoice,
    ) -> Self {
        assert!(subflows > 0, "a connection needs at least one subflow");
        Connection {
            state: ConnectionState::new(transfer_size, cfg.mss, subflows),
            subflows: (0..subflows).map(|i| SubflowState::new(i, cfg.clone())).collect(),
            mode,
            detector,
            source: DataSource,
            checksum: StreamChecksum::default(),
            outbox: VecDeque::new(),
            events: Vec::new(),
            protocol_violations: 0,
        }
    }

    pub fn transfer_complete(&self) -> bool {
        self.state.transfer_complete()
    }

    /// Checksum of every byte handed to the network so far, in stream order.
    pub fn sender_checksum(&self) -> StreamChecksum {
        self.checksum
    }

    pub fn take_events(&mut self) -> Vec<ConnEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn coupling_view(&self) -> CouplingView {
        CouplingView::new(
            self.subflows.iter().map(|s| s.cwnd).collect(),
            self.subflows.iter().map(|s| s.coupling_rtt()).collect(),
        )
    }

    /// Maps the next chunk of new data onto the next window-eligible subflow
    /// in round-robin order.
    pub fn schedule_next(&mut self, now: SimTime) -> Result<(usize, Segment), Blocked> {
        let st = &mut self.state;
        if st.data_snd_nxt >= st.transfer_size {
            return Err(Blocked::Exhausted);
        }
        let n = self.subflows.len();
        let chosen = (1..=n)
            .map(|k| (st.scheduler_cursor + k) % n)
            .find(|&i| self.subflows[i].can_send())
            .ok_or(Blocked::NoWindow)?;
        st.scheduler_cursor = chosen;

        let data_seq = st.data_snd_nxt;
        let len = (st.transfer_size - data_seq).min(st.mss as u64) as u32;
        let sf = &mut self.subflows[chosen];
        let mapped = sf.on_new_segment(data_seq, len, now);
        st.mappings.insert(
            data_seq,
            Mapping {
                end: data_seq + len as u64,
                subflow: chosen,
                subflow_seq: mapped.subflow_seq,
            },
        );
        st.data_snd_nxt += len as u64;

        let payload = self.source.bytes(data_seq, len);
        self.checksum.update(&payload);
        Ok((chosen, Segment::data(chosen, data_seq, mapped.subflow_seq, payload, now)))
    }

    /// Everything ready to go at `now`: queued retransmissions first, then as
    /// much new data as the windows allow.
    pub fn poll_transmit(&mut self, now: SimTime) -> Vec<Segment> {
        let mut out: Vec<Segment> = self.outbox.drain(..).collect();
        while let Ok((_, seg)) = self.schedule_next(now) {
            out.push(seg);
        }
        out
    }

    pub fn on_ack(&mut self, ack: &Segment, now: SimTime) -> Result<(), ProtocolViolation> {
        let data_ack = ack.data_ack.ok_or(ProtocolViolation::NotAnAck)?;
        if ack.subflow_id >= self.subflows.len() {
            return Err(ProtocolViolation::UnknownSubflow(ack.subflow_id));
        }
        if data_ack > self.state.data_snd_nxt {
            return Err(ProtocolViolation::AckBeyondSent {
                data_ack,
                snd_nxt: self.state.data_snd_nxt,
            });
        }
        let advanced = data_ack > self.state.data_una;
        let stale = data_ack < self.state.data_una;
        if advanced {
            self.state.data_una = data_ack;
        }

        self.run_detectors(ack);

        let mut view = self.coupling_view();
        for i in 0..self.subflows.len() {
            let input = AckInput {
                data_ack,
                ts_echo: ack.ts_echo,
                arrived_here: i == ack.subflow_id,
                conn_advanced: advanced,
                stale,
            };
            let actions = self.subflows[i].on_ack(&input, self.mode, &mut view, now);
            for action in actions {
                match action {
                    AckAction::FastRetransmit(seg) => {
                        self.push_event(i, ConnEventKind::FastRetransmit);
                        self.queue_retransmission(i, seg, RetransmitKind::Fast, now);
                    }
                    AckAction::PartialAckRetransmit(seg) => {
                        self.queue_retransmission(i, seg, RetransmitKind::PartialAck, now);
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn on_rto(&mut self, subflow: usize, now: SimTime) {
        if let Some(seg) = self.subflows[subflow].on_rto(now) {
            self.push_event(subflow, ConnEventKind::Rto);
            self.queue_retransmission(subflow, seg, RetransmitKind::Timeout, now);
        }
    }

    fn run_detectors(&mut self, ack: &Segment) {
        for i in 0..self.subflows.len() {
            let Some(snap) = self.subflows[i].saved else { continue };
            let verdict = match self.detector {
                DetectorChoice::None => continue,
                DetectorChoice::Eifel => spurious::eifel_check(&snap, ack),
                DetectorChoice::Dsack => spurious::dsack_sender_check(&snap, ack),
            };
            match verdict {
                Verdict::Spurious => {
                    self.push_event(
                        i,
                        ConnEventKind::SpuriousDetected {
                            detector: self.detector,
                            snapshot: snap,
                        },
                    );
                    let sf = &mut self.subflows[i];
                    let restored = match self.detector {
                        DetectorChoice::Eifel => spurious::eifel_respond(sf),
                        _ => spurious::dsack_respond(sf),
                    };
                    if let Some(r) = restored {
                        self.push_event(i, ConnEventKind::Restore(r));
                    }
                }
                Verdict::Genuine => {
                    if let Some(s) = self.subflows[i].saved.as_mut() {
                        s.resolved = true;
                    }
                }
                Verdict::NoVerdict => {}
            }
        }
    }

    fn queue_retransmission(&mut self, subflow: usize, seg: MappedSegment, kind: RetransmitKind, now: SimTime) {
        let range = seg.data_range();
        debug_assert_eq!(self.state.retransmit_policy(range), Ok(subflow));
        let payload = self.source.bytes(seg.data_seq, seg.len);
        let mut out = Segment::data(subflow, seg.data_seq, seg.subflow_seq, payload, now);
        out.retransmit = Some(kind);
        self.outbox.push_back(out);
    }

    fn push_event(&mut self, subflow: usize, kind: ConnEventKind) {
        let sf = &self.subflows[subflow];
        self.events.push(ConnEvent {
            subflow,
            kind,
            cwnd: sf.cwnd,
            ssthresh: sf.ssthresh,
            phase: sf.phase,
        });
    }
}

/// Receiving side: reassembly, in-order delivery checksum and ACK generation.
#[derive(Debug, Clone)]
pub struct Receiver {
    pub reassembly: ReassemblyState,
    checksum: StreamChecksum,
    timestamps: bool,
    pub duplicate_segments: u64,
    pub spurious_fast_retransmits: u64,
    pub spurious_timeout_retransmits: u64,
}

impl Receiver {
    pub fn new(timestamps: bool) -> Self {
        Receiver {
            reassembly: ReassemblyState::new(),
            checksum: StreamChecksum::default(),
            timestamps,
            duplicate_segments: 0,
            spurious_fast_retransmits: 0,
            spurious_timeout_retransmits: 0,
        }
    }

    pub fn checksum(&self) -> StreamChecksum {
        self.checksum
    }

    /// Consumes a data segment and returns the ACK to send back on the same
    /// subflow, plus the number of previously unseen bytes.
    pub fn on_data_arrival(&mut self, seg: &Segment, now: SimTime) -> (Segment, u64) {
        let arrival = self.reassembly.on_data_arrival(seg);
        for chunk in &arrival.delivered {
            self.checksum.update(chunk);
        }
        if arrival.new_bytes == 0 && seg.size_bytes > 0 {
            self.duplicate_segments += 1;
            match seg.retransmit {
                Some(RetransmitKind::Fast) => self.spurious_fast_retransmits += 1,
                Some(RetransmitKind::Timeout) => self.spurious_timeout_retransmits += 1,
                _ => {}
            }
        }
        let d = arrival.ack;
        let mut ack = Segment::ack(seg.subflow_id, d.data_ack, now);
        ack.ts_echo = self.timestamps.then_some(d.ts_echo);
        ack.sack_blocks = d.sack_blocks;
        ack.dsack_block = d.dsack_block;
        (ack, arrival.new_bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conn(n: usize, size: u64) -> Connection {
        Connection::new(size, n, SubflowConfig::default(), CouplingMode::Uncoupled, DetectorChoice::None)
    }

    #[test]
    fn round_robin_alternates() {
        let mut c = conn(2, 1_000_000);
        let order: Vec<usize> = (0..4).map(|_| c.schedule_next(SimTime::ZERO).unwrap().0).collect();
        assert_eq!(order, vec![0, 1, 0, 1]);
    }

    #[test]
    fn full_window_is_skipped() {
        let mut c = conn(2, 1_000_000);
        c.subflows[0].cwnd = 1.0;
        let order: Vec<usize> = (0..3).map(|_| c.schedule_next(SimTime::ZERO).unwrap().0).collect();
        assert_eq!(order, vec![0, 1, 1]);
        assert_eq!(c.schedule_next(SimTime::ZERO), Err(Blocked::NoWindow));
    }

    #[test]
    fn tail_segment_is_short() {
        let mut c = conn(1, 1900);
        let (_, a) = c.schedule_next(SimTime::ZERO).unwrap();
        let (_, b) = c.schedule_next(SimTime::ZERO).unwrap();
        assert_eq!((a.size_bytes, b.size_bytes), (1400, 500));
        assert_eq!(c.schedule_next(SimTime::ZERO), Err(Blocked::Exhausted));
    }

    #[test]
    fn retransmit_goes_to_original_subflow() {
        let mut c = conn(2, 10_000);
        c.poll_transmit(SimTime::ZERO);
        assert_eq!(c.state.retransmit_policy(SeqRange::new(0, 1400)), Ok(0));
        assert_eq!(c.state.retransmit_policy(SeqRange::new(1400, 2800)), Ok(1));
        c.subflows[0].phase = Phase::FastRecovery;
        assert_eq!(c.state.retransmit_policy(SeqRange::new(0, 1400)), Ok(0));
        assert!(matches!(
            c.state.retransmit_policy(SeqRange::new(0, 700)),
            Err(ProtocolViolation::Unmapped(_))
        ));
    }

    #[test]
    fn completion_predicate() {
        let mut st = ConnectionState::new(5000, 1400, 2);
        st.data_una = 4999;
        assert!(!st.transfer_complete());
        st.data_una = 5000;
        assert!(st.transfer_complete());
        assert!(ConnectionState::new(0, 1400, 1).transfer_complete());
    }

    #[test]
    fn ack_beyond_sent_is_a_violation() {
        let mut c = conn(1, 10_000);
        c.poll_transmit(SimTime::ZERO);
        let ack = Segment::ack(0, 9_999, SimTime::ZERO);
        assert!(matches!(c.on_ack(&ack, SimTime::ZERO), Err(ProtocolViolation::AckBeyondSent { .. })));
        let ack = Segment::ack(5, 0, SimTime::ZERO);
        assert_eq!(c.on_ack(&ack, SimTime::ZERO), Err(ProtocolViolation::UnknownSubflow(5)));
    }

    #[test]
    fn cross_path_reordering_triggers_fast_retransmit_on_fast_path() {
        // Hole on subflow 1's first segment while subflow 0 keeps delivering.
        let mut c = conn(2, 1_000_000);
        for sf in &mut c.subflows {
            sf.cwnd = 10.0;
        }
        let segs = c.poll_transmit(SimTime::ZERO);
        let mut rx = Receiver::new(true);
        let t = SimTime::from_secs_f64(0.05);
        rx.on_data_arrival(&segs[0], t);
        let (ack, _) = rx.on_data_arrival(&segs[0], t);
        c.on_ack(&ack, t).unwrap();
        // segs[1] (subflow 1) is still in flight; subflow 0 data overtakes it.
        for s in segs.iter().filter(|s| s.subflow_id == 0).skip(1).take(3) {
            let (ack, _) = rx.on_data_arrival(s, t);
            c.on_ack(&ack, t).unwrap();
        }
        assert_eq!(c.subflows[0].phase, Phase::FastRecovery);
        let events = c.take_events();
        assert!(events.iter().any(|e| e.subflow == 0 && e.kind == ConnEventKind::FastRetransmit));
        let resent = c.poll_transmit(t);
        assert!(resent[0].is_retransmission() && resent[0].subflow_id == 0);
    }

    #[test]
    fn checksum_is_chunking_independent() {
        let src = DataSource;
        let mut whole = StreamChecksum::default();
        whole.update(&src.bytes(0, 5000));
        let mut parts = StreamChecksum::default();
        parts.update(&src.bytes(0, 1400));
        parts.update(&src.bytes(1400, 1));
        parts.update(&src.bytes(1401, 3599));
        assert_eq!(whole, parts);
    }
}
