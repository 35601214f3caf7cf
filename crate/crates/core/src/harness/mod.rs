//! Scenario loading, simulation runs, sweeps and trace output.

mod engine;
mod output;
mod plot;
mod scenario;
mod sweep;

use std::fmt;
use std::str::FromStr;

pub use engine::{run_scenario, DeliveryRecord, Detection, RunOutput, SendRecord};
pub use output::{
    emit_csv, format_sig6, parse_trace_csv, write_sweep_csv, write_trace_csv, CsvTable, OutputError, TraceCsvError,
    SWEEP_CSV_HEADER, TRACE_CSV_HEADER,
};
pub use plot::{emit_plot, render_svg};
pub use scenario::{
    load_scenario, parse_scenario, ScenarioConfig, ScenarioError, TcpOptions, DEFAULT_MSS, DEFAULT_TRANSFER_SIZE,
};
pub use sweep::{point_seed, run_sweep, SweepParam, SweepRow, SweepSpec};

use crate::subflow::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Sample,
    FastRetransmit,
    Rto,
    SpuriousDetected,
    Restore,
}

impl TraceEvent {
    pub fn name(self) -> &'static str {
        match self {
            TraceEvent::Sample => "Sample",
            TraceEvent::FastRetransmit => "FastRetransmit",
            TraceEvent::Rto => "Rto",
            TraceEvent::SpuriousDetected => "SpuriousDetected",
            TraceEvent::Restore => "Restore",
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TraceEvent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Sample" => Ok(TraceEvent::Sample),
            "FastRetransmit" => Ok(TraceEvent::FastRetransmit),
            "Rto" => Ok(TraceEvent::Rto),
            "SpuriousDetected" => Ok(TraceEvent::SpuriousDetected),
            "Restore" => Ok(TraceEvent::Restore),
            other => Err(format!("unknown trace event {other:?}")),
        }
    }
}

/// One congestion-window sample or protocol event.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Seconds.
    pub time: f64,
    /// 1-based subflow number.
    pub subflow: usize,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubflowSummary {
    /// Unique payload bytes that first reached the receiver on this subflow.
    pub bytes: u64,
    pub retransmissions: u64,
    pub fast_retransmits: u64,
    pub rtos: u64,
    pub spurious_detections: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub transfer_size: u64,
    /// Seconds; `None` if the run hit its stop time first.
    pub completion_time: Option<f64>,
    /// Bits per second of in-order delivered data.
    pub goodput: f64,
    pub delivered_bytes: u64,
    pub subflows: Vec<SubflowSummary>,
    /// Fast retransmissions whose data the receiver already held.
    pub spurious_fast_retransmits: u64,
    /// Timeout retransmissions whose data the receiver already held.
    pub spurious_timeout_retransmits: u64,
    pub sender_checksum: u64,
    pub receiver_checksum: u64,
    pub protocol_violations: u64,
    pub events_processed: u64,
}

impl SummaryStats {
    pub fn completed(&self) -> bool {
        self.completion_time.is_some()
    }

    /// Receiver saw exactly the sender's stream.
    pub fn integrity_ok(&self) -> bool {
        self.delivered_bytes == self.transfer_size && self.sender_checksum == self.receiver_checksum
    }

    pub fn fast_retransmits(&self) -> u64 {
        self.subflows.iter().map(|s| s.fast_retransmits).sum()
    }

    pub fn rtos(&self) -> u64 {
        self.subflows.iter().map(|s| s.rtos).sum()
    }

    pub fn retransmissions(&self) -> u64 {
        self.subflows.iter().map(|s| s.retransmissions).sum()
    }

    pub fn spurious_detections(&self) -> u64 {
        self.subflows.iter().map(|s| s.spurious_detections).sum()
    }
}
