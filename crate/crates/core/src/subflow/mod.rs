//! Per-path TCP sender machinery: window accounting, duplicate-ACK driven
//! fast retransmit and recovery, retransmission timeout.
//!
//! Acknowledgments are connection-level (`data_ack`). Data mapped onto a
//! subflow is released when the cumulative data ACK passes it, no matter
//! which subflow carried the ACK. An ACK that arrives on a subflow without
//! advancing the connection's cumulative point is a duplicate for that
//! subflow, so reordering across paths looks like loss.

mod rtt;
mod segment;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

pub use rtt::{InvalidRttSample, RttEstimator};
pub use segment::{RetransmitKind, Segment, SeqRange, ACK_SIZE_BYTES, MAX_SACK_BLOCKS};

use crate::coupling::{self, CouplingMode, CouplingView};
use crate::simkernel::SimTime;
use crate::spurious::{self, SpuriousSnapshot};

pub const DUP_ACK_THRESHOLD: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::SlowStart => "SlowStart",
            Phase::CongestionAvoidance => "CongestionAvoidance",
            Phase::FastRecovery => "FastRecovery",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SlowStart" => Ok(Phase::SlowStart),
            "CongestionAvoidance" => Ok(Phase::CongestionAvoidance),
            "FastRecovery" => Ok(Phase::FastRecovery),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

/// TCP parameters shared by all subflows of a connection.
#[derive(Debug, Clone, PartialEq)]
pub struct SubflowConfig {
    pub mss: u32,
    /// MSS.
    pub initial_cwnd: f64,
    /// MSS.
    pub initial_ssthresh: f64,
    pub initial_rto: f64,
    pub rto_min: f64,
    pub rto_max: f64,
    /// Stand-in smoothed RTT for the coupling rules before the first sample.
    pub initial_rtt: f64,
    pub timestamps: bool,
    /// Retransmit the next hole on a partial ACK during fast recovery.
    pub partial_ack_retransmit: bool,
}

impl Default for SubflowConfig {
    fn default() -> Self {
        SubflowConfig {
            mss: 1400,
            initial_cwnd: 2.0,
            initial_ssthresh: 65535.0 / 1400.0,
            initial_rto: 1.0,
            rto_min: 0.2,
            rto_max: 60.0,
            initial_rtt: 0.1,
            timestamps: true,
            partial_ack_retransmit: false,
        }
    }
}

/// A data segment mapped onto this subflow and not yet acknowledged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MappedSegment {
    pub data_seq: u64,
    pub subflow_seq: u64,
    pub len: u32,
    pub first_sent: SimTime,
    pub last_sent: SimTime,
    pub transmissions: u32,
}

impl MappedSegment {
    pub fn data_range(&self) -> SeqRange {
        SeqRange::new(self.data_seq, self.data_seq + self.len as u64)
    }

    pub fn subflow_end(&self) -> u64 {
        self.subflow_seq + self.len as u64
    }
}

/// The parts of an incoming ACK a subflow needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckInput {
    pub data_ack: u64,
    pub ts_echo: Option<SimTime>,
    /// The ACK travelled on this subflow's path.
    pub arrived_here: bool,
    /// The ACK moved the connection's cumulative point forward.
    pub conn_advanced: bool,
    /// The ACK is below the connection's cumulative point (overtaken by a
    /// later ACK on a faster path).
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AckAction {
    Advance { bytes: u64, segments: u32 },
    DupAck { count: u32 },
    FastRetransmit(MappedSegment),
    PartialAckRetransmit(MappedSegment),
    ExitRecovery,
    RttSample(f64),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubflowCounters {
    pub segments_sent: u64,
    pub bytes_mapped: u64,
    pub retransmissions: u64,
    pub fast_retransmits: u64,
    pub rtos: u64,
    pub spurious_detections: u64,
}

#[derive(Debug, Clone)]
pub struct SubflowState {
    pub id: usize,
    pub cfg: SubflowConfig,
    /// MSS, real-valued.
    pub cwnd: f64,
    /// MSS.
    pub ssthresh: f64,
    pub phase: Phase,
    pub snd_una: u64,
    pub snd_nxt: u64,
    /// Outstanding bytes.
    pub flight: u64,
    pub dup_ack_count: u32,
    pub rtt: RttEstimator,
    /// Data-sequence end of the data outstanding when recovery began.
    pub recover_point: u64,
    pub retransmit_queue: VecDeque<MappedSegment>,
    pub saved: Option<SpuriousSnapshot>,
    pub rto_deadline: Option<SimTime>,
    pub counters: SubflowCounters,
}

impl SubflowState {
    pub fn new(id: usize, cfg: SubflowConfig) -> Self {
        SubflowState {
            id,
            cwnd: cfg.initial_cwnd.max(1.0),
            ssthresh: cfg.initial_ssthresh.max(2.0),
            phase: Phase::SlowStart,
            snd_una: 0,
            snd_nxt: 0,
            flight: 0,
            dup_ack_count: 0,
            rtt: RttEstimator::new(cfg.initial_rto, cfg.rto_min, cfg.rto_max),
            recover_point: 0,
            retransmit_queue: VecDeque::new(),
            saved: None,
            rto_deadline: None,
            counters: SubflowCounters::default(),
            cfg,
        }
    }

    pub fn mss(&self) -> u64 {
        self.cfg.mss as u64
    }

    /// True iff one more full segment fits in the window.
    pub fn can_send(&self) -> bool {
        (self.flight + self.mss()) as f64 <= self.cwnd * self.mss() as f64
    }

    pub fn flight_mss(&self) -> f64 {
        self.flight as f64 / self.mss() as f64
    }

    pub fn has_unacked(&self) -> bool {
        !self.retransmit_queue.is_empty()
    }

    /// Smoothed RTT, or the configured stand-in before the first sample.
    pub fn coupling_rtt(&self) -> f64 {
        self.rtt.srtt().unwrap_or(self.cfg.initial_rtt)
    }

    /// Records a new segment of `len` bytes mapped at `data_seq`.
    pub fn on_new_segment(&mut self, data_seq: u64, len: u32, now: SimTime) -> MappedSegment {
        let mapped = MappedSegment {
            data_seq,
            subflow_seq: self.snd_nxt,
            len,
            first_sent: now,
            last_sent: now,
            transmissions: 1,
        };
        self.snd_nxt += len as u64;
        self.flight += len as u64;
        self.retransmit_queue.push_back(mapped);
        self.counters.segments_sent += 1;
        self.counters.bytes_mapped += len as u64;
        self.arm_timer_if_idle(now);
        mapped
    }

    pub fn on_ack(&mut self, ack: &AckInput, mode: CouplingMode, view: &mut CouplingView, now: SimTime) -> Vec<AckAction> {
        let mut actions = Vec::new();
        let mut bytes = 0u64;
        let mut segments = 0u32;
        let mut oldest = None;
        while let Some(front) = self.retransmit_queue.front() {
            if front.data_range().end > ack.data_ack {
                break;
            }
            let seg = self.retransmit_queue.pop_front().expect("front exists");
            oldest.get_or_insert(seg);
            bytes += seg.len as u64;
            segments += 1;
            self.snd_una = seg.subflow_end();
        }

        if segments > 0 {
            self.flight -= bytes;
            self.dup_ack_count = 0;
            if let Some(sample) = self.rtt_sample(ack, oldest.as_ref(), now) {
                if self.rtt.update(sample).is_ok() {
                    actions.push(AckAction::RttSample(sample));
                }
            }
            actions.push(AckAction::Advance { bytes, segments });
            if self.phase == Phase::FastRecovery {
                if ack.data_ack >= self.recover_point {
                    self.cwnd = self.ssthresh;
                    self.phase = Phase::CongestionAvoidance;
                    actions.push(AckAction::ExitRecovery);
                } else if self.cfg.partial_ack_retransmit {
                    self.cwnd = (self.cwnd - segments as f64 + 1.0).max(self.ssthresh);
                    if let Some(seg) = self.retransmit_front(now) {
                        actions.push(AckAction::PartialAckRetransmit(seg));
                    }
                }
            } else {
                self.grow(segments, mode, view);
            }
            if self.has_unacked() {
                self.rto_deadline = Some(now.add_secs(self.rtt.rto()));
            } else {
                self.rto_deadline = None;
            }
        } else if ack.arrived_here && !ack.conn_advanced && !ack.stale && self.has_unacked() {
            self.dup_ack_count += 1;
            actions.push(AckAction::DupAck {
                count: self.dup_ack_count,
            });
            if self.phase == Phase::FastRecovery {
                self.cwnd += 1.0;
            } else if self.dup_ack_count == DUP_ACK_THRESHOLD {
                let seg = self.enter_fast_recovery(mode, view, now);
                actions.push(AckAction::FastRetransmit(seg));
            }
        }
        view.set_window(self.id, self.cwnd);
        actions
    }

    /// Handles expiry of the retransmission timer. Returns the segment to
    /// resend, or `None` (timer disarmed) if nothing is outstanding.
    pub fn on_rto(&mut self, now: SimTime) -> Option<MappedSegment> {
        let Some(front) = self.retransmit_queue.front().copied() else {
            self.rto_deadline = None;
            return None;
        };
        spurious::on_retransmit_record(self, front.data_range(), now);
        self.ssthresh = (self.flight_mss() / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.phase = Phase::SlowStart;
        self.dup_ack_count = 0;
        self.counters.rtos += 1;
        self.rtt.backoff();
        let seg = self.retransmit_front(now);
        self.rto_deadline = Some(now.add_secs(self.rtt.rto()));
        seg
    }

    fn enter_fast_recovery(&mut self, mode: CouplingMode, view: &mut CouplingView, now: SimTime) -> MappedSegment {
        let front = *self.retransmit_queue.front().expect("duplicate ACK implies unacked data");
        spurious::on_retransmit_record(self, front.data_range(), now);
        view.set_window(self.id, self.cwnd);
        let (w, ssthresh) = coupling::on_loss_decrease(mode, self.id, view);
        self.ssthresh = ssthresh.max(2.0);
        self.cwnd = w.max(1.0);
        self.phase = Phase::FastRecovery;
        self.recover_point = self
            .retransmit_queue
            .back()
            .map(|s| s.data_range().end)
            .unwrap_or(front.data_range().end);
        self.counters.fast_retransmits += 1;
        self.retransmit_front(now).expect("front exists")
    }

    fn retransmit_front(&mut self, now: SimTime) -> Option<MappedSegment> {
        let seg = self.retransmit_queue.front_mut()?;
        seg.transmissions += 1;
        seg.last_sent = now;
        let seg = *seg;
        self.counters.retransmissions += 1;
        self.arm_timer_if_idle(now);
        Some(seg)
    }

    fn grow(&mut self, segments: u32, mode: CouplingMode, view: &mut CouplingView) {
        for _ in 0..segments {
            if self.phase == Phase::SlowStart {
                self.cwnd = (self.cwnd + 1.0).min(self.ssthresh.max(self.cwnd));
                if self.cwnd >= self.ssthresh {
                    self.phase = Phase::CongestionAvoidance;
                }
            } else {
                view.set_window(self.id, self.cwnd);
                self.cwnd += coupling::on_ack_increase(mode, self.id, view);
            }
        }
    }

    // With timestamps, time the segment whose arrival produced this ACK, on
    // whichever path it travelled: that is how long our data actually waited
    // for the cumulative point. Otherwise time the oldest newly acked
    // segment, unless it was retransmitted (Karn).
    fn rtt_sample(&self, ack: &AckInput, oldest: Option<&MappedSegment>, now: SimTime) -> Option<f64> {
        if self.cfg.timestamps {
            if let Some(echo) = ack.ts_echo {
                let s = now.saturating_since(echo).as_secs_f64();
                return (s > 0.0).then_some(s);
            }
        }
        let seg = oldest?;
        if seg.transmissions > 1 {
            return None;
        }
        let s = now.saturating_since(seg.first_sent).as_secs_f64();
        (s > 0.0).then_some(s)
    }

    fn arm_timer_if_idle(&mut self, now: SimTime) {
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now.add_secs(self.rtt.rto()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MSS: u32 = 1400;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    fn view1(sf: &SubflowState) -> CouplingView {
        CouplingView::new(vec![sf.cwnd], vec![sf.coupling_rtt()])
    }

    /// A subflow in congestion avoidance with `n` segments outstanding.
    fn loaded(cwnd: f64, n: u64) -> SubflowState {
        let mut sf = SubflowState::new(0, SubflowConfig::default());
        sf.cwnd = cwnd;
        sf.ssthresh = cwnd;
        sf.phase = Phase::CongestionAvoidance;
        for k in 0..n {
            sf.on_new_segment(k * MSS as u64, MSS, t(0.0));
        }
        sf
    }

    fn dup(sf: &SubflowState) -> AckInput {
        AckInput {
            data_ack: sf.retransmit_queue.front().map(|s| s.data_seq).unwrap_or(0),
            ts_echo: Some(t(0.0)),
            arrived_here: true,
            conn_advanced: false,
            stale: false,
        }
    }

    #[test]
    fn can_send_gate() {
        let mut sf = SubflowState::new(0, SubflowConfig::default());
        sf.cwnd = 2.0;
        sf.flight = MSS as u64;
        assert!(sf.can_send());
        sf.flight = 2 * MSS as u64;
        assert!(!sf.can_send());
        sf.cwnd = 1.0;
        sf.flight = 0;
        assert!(sf.can_send());
    }

    #[test]
    fn third_duplicate_triggers_fast_retransmit() {
        let mut sf = loaded(10.0, 10);
        let mut v = view1(&sf);
        for i in 1..=2 {
            let a = sf.on_ack(&dup(&sf), CouplingMode::Uncoupled, &mut v, t(0.1));
            assert_eq!(a, vec![AckAction::DupAck { count: i }]);
        }
        let a = sf.on_ack(&dup(&sf), CouplingMode::Uncoupled, &mut v, t(0.1));
        assert!(matches!(a[1], AckAction::FastRetransmit(s) if s.data_seq == 0 && s.transmissions == 2));
        assert_eq!(sf.phase, Phase::FastRecovery);
        assert_eq!((sf.cwnd, sf.ssthresh), (5.0, 5.0));
        let snap = sf.saved.as_ref().unwrap();
        assert_eq!((snap.cwnd_before, snap.ssthresh_before), (10.0, 10.0));
        assert_eq!(sf.recover_point, 10 * MSS as u64);
        // Further duplicates inflate the window.
        sf.on_ack(&dup(&sf), CouplingMode::Uncoupled, &mut v, t(0.1));
        assert_eq!(sf.cwnd, 6.0);
    }

    #[test]
    fn advance_resets_duplicate_count() {
        let mut sf = loaded(10.0, 4);
        let mut v = view1(&sf);
        sf.on_ack(&dup(&sf), CouplingMode::Uncoupled, &mut v, t(0.1));
        sf.on_ack(&dup(&sf), CouplingMode::Uncoupled, &mut v, t(0.1));
        assert_eq!(sf.dup_ack_count, 2);
        let ack = AckInput {
            data_ack: MSS as u64,
            ts_echo: Some(t(0.0)),
            arrived_here: true,
            conn_advanced: true,
            stale: false,
        };
        let a = sf.on_ack(&ack, CouplingMode::Uncoupled, &mut v, t(0.1));
        assert_eq!(sf.dup_ack_count, 0);
        assert!(!a.iter().any(|x| matches!(x, AckAction::FastRetransmit(_))));
        assert_eq!(sf.snd_una, MSS as u64);
        assert_eq!(sf.flight, 3 * MSS as u64);
    }

    #[test]
    fn full_ack_exits_recovery() {
        let mut sf = loaded(10.0, 10);
        let mut v = view1(&sf);
        for _ in 0..3 {
            sf.on_ack(&dup(&sf), CouplingMode::Uncoupled, &mut v, t(0.1));
        }
        let ack = AckInput {
            data_ack: sf.recover_point,
            ts_echo: Some(t(0.1)),
            arrived_here: true,
            conn_advanced: true,
            stale: false,
        };
        let a = sf.on_ack(&ack, CouplingMode::Uncoupled, &mut v, t(0.2));
        assert!(a.contains(&AckAction::ExitRecovery));
        assert_eq!(sf.phase, Phase::CongestionAvoidance);
        assert_eq!(sf.cwnd, sf.ssthresh);
        assert_eq!(sf.rto_deadline, None);
    }

    #[test]
    fn partial_ack_retransmits_only_when_enabled() {
        for enabled in [false, true] {
            let mut sf = loaded(10.0, 10);
            sf.cfg.partial_ack_retransmit = enabled;
            let mut v = view1(&sf);
            for _ in 0..3 {
                sf.on_ack(&dup(&sf), CouplingMode::Uncoupled, &mut v, t(0.1));
            }
            let ack = AckInput {
                data_ack: 2 * MSS as u64,
                ts_echo: Some(t(0.1)),
                arrived_here: true,
                conn_advanced: true,
                stale: false,
            };
            let a = sf.on_ack(&ack, CouplingMode::Uncoupled, &mut v, t(0.2));
            assert_eq!(sf.phase, Phase::FastRecovery);
            let resent = a.iter().any(|x| matches!(x, AckAction::PartialAckRetransmit(s) if s.data_seq == 2 * MSS as u64));
            assert_eq!(resent, enabled);
        }
    }

    #[test]
    fn rto_halves_flight_and_collapses_window() {
        let mut sf = loaded(16.0, 16);
        for _ in 0..10 {
            sf.rtt.update(0.01).unwrap();
        }
        assert_eq!(sf.rtt.rto(), 0.2);
        let seg = sf.on_rto(t(1.0)).unwrap();
        assert_eq!(seg.data_seq, 0);
        assert_eq!((sf.ssthresh, sf.cwnd, sf.phase), (8.0, 1.0, Phase::SlowStart));
        assert!((sf.rtt.rto() - 0.4).abs() < 1e-12);
        assert_eq!(sf.rto_deadline, Some(t(1.4)));
        assert!(sf.saved.is_some());
    }

    #[test]
    fn rto_with_nothing_outstanding_disarms() {
        let mut sf = SubflowState::new(0, SubflowConfig::default());
        sf.rto_deadline = Some(t(1.0));
        assert_eq!(sf.on_rto(t(1.0)), None);
        assert_eq!(sf.rto_deadline, None);
        assert_eq!(sf.counters.rtos, 0);
    }

    #[test]
    fn slow_start_adds_one_per_acked_segment_up_to_ssthresh() {
        let mut sf = SubflowState::new(0, SubflowConfig::default());
        sf.ssthresh = 5.0;
        for k in 0..4 {
            sf.on_new_segment(k * MSS as u64, MSS, t(0.0));
        }
        let mut v = view1(&sf);
        let ack = AckInput {
            data_ack: 3 * MSS as u64,
            ts_echo: Some(t(0.0)),
            arrived_here: true,
            conn_advanced: true,
            stale: false,
        };
        sf.on_ack(&ack, CouplingMode::RttCompensator, &mut v, t(0.1));
        assert_eq!(sf.cwnd, 5.0);
        assert_eq!(sf.phase, Phase::CongestionAvoidance);
    }

    #[test]
    fn karn_without_timestamps() {
        let cfg = SubflowConfig {
            timestamps: false,
            ..SubflowConfig::default()
        };
        let mut sf = SubflowState::new(0, cfg);
        sf.on_new_segment(0, MSS, t(0.0));
        sf.on_rto(t(1.0));
        let mut v = view1(&sf);
        let ack = AckInput {
            data_ack: MSS as u64,
            ts_echo: Some(t(1.0)),
            arrived_here: true,
            conn_advanced: true,
            stale: false,
        };
        let a = sf.on_ack(&ack, CouplingMode::Uncoupled, &mut v, t(1.5));
        assert!(!a.iter().any(|x| matches!(x, AckAction::RttSample(_))));
        assert!(!sf.rtt.is_initialized());
    }

    #[test]
    fn ack_from_other_path_is_not_a_duplicate() {
        let mut sf = loaded(10.0, 4);
        let mut v = view1(&sf);
        let mut ack = dup(&sf);
        ack.arrived_here = false;
        for _ in 0..5 {
            assert!(sf.on_ack(&ack, CouplingMode::Uncoupled, &mut v, t(0.1)).is_empty());
        }
        assert_eq!(sf.dup_ack_count, 0);
    }

    #[test]
    fn overtaken_ack_is_not_a_duplicate() {
        let mut sf = loaded(10.0, 4);
        let mut v = view1(&sf);
        let mut ack = dup(&sf);
        ack.stale = true;
        for _ in 0..5 {
            assert!(sf.on_ack(&ack, CouplingMode::Uncoupled, &mut v, t(0.1)).is_empty());
        }
        assert_eq!(sf.phase, Phase::CongestionAvoidance);
    }

    #[test]
    fn phase_parses_from_name() {
        for p in [Phase::SlowStart, Phase::CongestionAvoidance, Phase::FastRecovery] {
            assert_eq!(p.name().parse::<Phase>().unwrap(), p);
        }
    }
}
