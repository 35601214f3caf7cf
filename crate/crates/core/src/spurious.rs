//! Spurious retransmission detection and state reconciliation.
//!
//! Before a retransmission reduces the window the subflow records a
//! [`SpuriousSnapshot`]. Two detectors can later decide the retransmission
//! was unnecessary:
//!
//! * Eifel compares the echoed timestamp of the first ACK covering the
//!   retransmitted range with the retransmission time. An older echo means
//!   the original transmission got through. The response restores the
//!   window and threshold in one step.
//! * DSACK waits for the receiver to report the retransmitted range as a
//!   duplicate. The response restores only the threshold and lets slow start
//!   regrow the window.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::connection::ReassemblyState;
use crate::simkernel::SimTime;
use crate::subflow::{Phase, Segment, SeqRange, SubflowState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorChoice {
    None,
    Eifel,
    Dsack,
}

impl DetectorChoice {
    pub const ALL: [DetectorChoice; 3] = [DetectorChoice::None, DetectorChoice::Eifel, DetectorChoice::Dsack];

    pub fn name(self) -> &'static str {
        match self {
            DetectorChoice::None => "none",
            DetectorChoice::Eifel => "eifel",
            DetectorChoice::Dsack => "dsack",
        }
    }
}

impl fmt::Display for DetectorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown detector {0:?} (expected none, eifel or dsack)")]
pub struct UnknownDetector(pub String);

impl FromStr for DetectorChoice {
    type Err = UnknownDetector;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "none" | "off" => Ok(DetectorChoice::None),
            "eifel" => Ok(DetectorChoice::Eifel),
            "dsack" => Ok(DetectorChoice::Dsack),
            _ => Err(UnknownDetector(s.to_string())),
        }
    }
}

/// Congestion state captured when a retransmission is decided, before the
/// window is reduced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpuriousSnapshot {
    pub cwnd_before: f64,
    pub ssthresh_before: f64,
    pub phase_before: Phase,
    pub retransmit_ts: SimTime,
    pub retransmit_range: SeqRange,
    pub retransmit_count: u32,
    /// A verdict has been reached; later detections are no-ops.
    pub resolved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Spurious,
    Genuine,
    /// The ACK says nothing about this retransmission.
    NoVerdict,
}

impl Verdict {
    pub fn is_spurious(self) -> bool {
        self == Verdict::Spurious
    }
}

/// Window and threshold after a reconciliation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Restoration {
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
}

/// Records a retransmission of `range` on `sf`. Must run before the window
/// reduction. A repeat of the tracked range only bumps the count; anything
/// else starts a new snapshot.
pub fn on_retransmit_record(sf: &mut SubflowState, range: SeqRange, now: SimTime) -> SpuriousSnapshot {
    match sf.saved.as_mut() {
        Some(snap) if snap.retransmit_range == range => {
            snap.retransmit_count += 1;
        }
        _ => {
            sf.saved = Some(SpuriousSnapshot {
                cwnd_before: sf.cwnd,
                ssthresh_before: sf.ssthresh,
                phase_before: sf.phase,
                retransmit_ts: now,
                retransmit_range: range,
                retransmit_count: 1,
                resolved: false,
            });
        }
    }
    *sf.saved.as_ref().expect("just stored")
}

/// Eifel test. Applies to the first ACK whose cumulative point covers the
/// retransmitted range; an echo older than the retransmission means the
/// original was acknowledged.
pub fn eifel_check(snap: &SpuriousSnapshot, ack: &Segment) -> Verdict {
    if snap.resolved {
        return Verdict::NoVerdict;
    }
    match ack.data_ack {
        Some(cum) if cum >= snap.retransmit_range.end => {}
        _ => return Verdict::NoVerdict,
    }
    match ack.ts_echo {
        None => Verdict::NoVerdict,
        Some(echo) if echo < snap.retransmit_ts => Verdict::Spurious,
        Some(_) => Verdict::Genuine,
    }
}

/// Restores the window, threshold and phase from the snapshot. Returns
/// `None` if the snapshot was already resolved.
pub fn eifel_respond(sf: &mut SubflowState) -> Option<Restoration> {
    let snap = sf.saved.as_mut().filter(|s| !s.resolved)?;
    snap.resolved = true;
    let snap = *snap;
    sf.cwnd = snap.cwnd_before;
    sf.ssthresh = snap.ssthresh_before;
    sf.phase = match snap.phase_before {
        Phase::FastRecovery => Phase::CongestionAvoidance,
        p => p,
    };
    sf.dup_ack_count = 0;
    sf.counters.spurious_detections += 1;
    Some(Restoration {
        cwnd: sf.cwnd,
        ssthresh: sf.ssthresh,
        phase: sf.phase,
    })
}

/// The part of `range` the receiver already holds, reported as a DSACK
/// block. With several duplicated pieces the lowest one is reported.
pub fn dsack_receiver_report(recv: &ReassemblyState, range: SeqRange) -> Option<SeqRange> {
    recv.duplicated_part(range)
}

/// DSACK test: the report must match a range retransmitted exactly once.
pub fn dsack_sender_check(snap: &SpuriousSnapshot, ack: &Segment) -> Verdict {
    match ack.dsack_block {
        Some(block) if !snap.resolved && block == snap.retransmit_range && snap.retransmit_count == 1 => {
            Verdict::Spurious
        }
        _ => Verdict::NoVerdict,
    }
}

/// Restores the threshold and re-enters slow start from the current window.
/// Returns `None` if the snapshot was already resolved.
pub fn dsack_respond(sf: &mut SubflowState) -> Option<Restoration> {
    let snap = sf.saved.as_mut().filter(|s| !s.resolved)?;
    snap.resolved = true;
    sf.ssthresh = snap.ssthresh_before.max(2.0);
    sf.phase = if sf.cwnd >= sf.ssthresh {
        Phase::CongestionAvoidance
    } else {
        Phase::SlowStart
    };
    sf.dup_ack_count = 0;
    sf.counters.spurious_detections += 1;
    Some(Restoration {
        cwnd: sf.cwnd,
        ssthresh: sf.ssthresh,
        phase: sf.phase,
    })
}
