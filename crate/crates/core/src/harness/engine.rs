use log::{debug, warn};

use super::{ScenarioConfig, SubflowSummary, SummaryStats, TraceEvent, TraceRecord};
use crate::connection::{ConnEvent, ConnEventKind, Connection, Receiver};
use crate::netmodel::{LinkConfig, LinkState, TransmitOutcome};
use crate::simkernel::{EventHandle, Flow, Kernel, RandomStream, SimTime};
use crate::spurious::{DetectorChoice, Restoration, SpuriousSnapshot};
use crate::subflow::{Segment, SubflowState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug)]
enum SimEvent {
    SegmentDelivery {
        path: usize,
        dir: Direction,
        segment: Segment,
    },
    RtoExpiry {
        subflow: usize,
    },
    TraceSample,
    TransferDeadline,
}

/// A spurious-retransmission verdict and what it restored.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub time: f64,
    /// 0-based subflow index.
    pub subflow: usize,
    pub detector: DetectorChoice,
    pub snapshot: SpuriousSnapshot,
    pub cwnd_at_detection: f64,
    pub restored: Option<Restoration>,
    /// Smoothed RTT of the subflow at detection time, seconds.
    pub srtt: f64,
}

/// A data segment handed to a link (accepted or not).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendRecord {
    pub time: f64,
    pub subflow: usize,
    pub data_seq: u64,
    pub len: u32,
    pub retransmission: bool,
}

/// Previously unseen payload reaching the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    pub time: f64,
    pub subflow: usize,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub stats: SummaryStats,
    pub trace: Vec<TraceRecord>,
    pub detections: Vec<Detection>,
    pub sends: Vec<SendRecord>,
    pub deliveries: Vec<DeliveryRecord>,
}

struct World {
    trace_interval_nanos: u64,
    conn: Connection,
    rx: Receiver,
    forward: Vec<LinkState>,
    reverse: Vec<LinkState>,
    forward_rng: Vec<RandomStream>,
    reverse_rng: Vec<RandomStream>,
    timers: Vec<Option<(SimTime, EventHandle)>>,
    completion: Option<SimTime>,
    bytes_by_subflow: Vec<u64>,
    trace: Vec<TraceRecord>,
    detections: Vec<Detection>,
    sends: Vec<SendRecord>,
    deliveries: Vec<DeliveryRecord>,
}

/// Runs one scenario to completion or its stop time. Assumes `cfg` is valid.
pub fn run_scenario(cfg: &ScenarioConfig) -> RunOutput {
    let paths = cfg.links.len();
    let reverse_cfg = |l: &LinkConfig| LinkConfig {
        loss_rate: if cfg.ack_loss { l.loss_rate } else { 0.0 },
        ..l.clone()
    };
    let mut world = World {
        trace_interval_nanos: SimTime::from_secs_f64(cfg.trace_interval).as_nanos().max(1),
        conn: Connection::new(cfg.transfer_size, paths, cfg.subflow_config(), cfg.coupling, cfg.detector),
        rx: Receiver::new(cfg.tcp.timestamps),
        forward: cfg.links.iter().cloned().map(LinkState::new).collect(),
        reverse: cfg.links.iter().map(reverse_cfg).map(LinkState::new).collect(),
        forward_rng: (0..paths).map(|i| RandomStream::derived(cfg.seed, 2 * i as u64)).collect(),
        reverse_rng: (0..paths).map(|i| RandomStream::derived(cfg.seed, 2 * i as u64 + 1)).collect(),
        timers: vec![None; paths],
        completion: None,
        bytes_by_subflow: vec![0; paths],
        trace: Vec::new(),
        detections: Vec::new(),
        sends: Vec::new(),
        deliveries: Vec::new(),
    };

    let mut kernel: Kernel<SimEvent> = Kernel::new();
    let stop = SimTime::from_secs_f64(cfg.stop_time);
    if world.conn.transfer_complete() {
        world.completion = Some(SimTime::ZERO);
    } else {
        kernel.schedule(SimTime::ZERO, SimEvent::TraceSample).expect("t=0");
        kernel.schedule(stop, SimEvent::TransferDeadline).expect("stop >= 0");
        world.pump(&mut kernel);
        kernel.run_until_idle(stop, |k, ev| world.handle(k, ev));
    }
    let end = kernel.now();
    world.finish(end, kernel.processed())
}

impl World {
    fn handle(&mut self, k: &mut Kernel<SimEvent>, ev: SimEvent) -> Flow {
        let now = k.now();
        match ev {
            SimEvent::SegmentDelivery {
                path,
                dir: Direction::Forward,
                segment,
            } => {
                let (ack, new_bytes) = self.rx.on_data_arrival(&segment, now);
                if new_bytes > 0 {
                    self.bytes_by_subflow[path] += new_bytes;
                    self.deliveries.push(DeliveryRecord {
                        time: now.as_secs_f64(),
                        subflow: path,
                        bytes: new_bytes,
                    });
                }
                self.send_on(k, path, Direction::Reverse, ack);
            }
            SimEvent::SegmentDelivery {
                dir: Direction::Reverse,
                segment,
                ..
            } => {
                if let Err(v) = self.conn.on_ack(&segment, now) {
                    warn!("t={now}: ignoring ACK: {v}");
                    self.conn.protocol_violations += 1;
                }
                self.drain_events(now);
                if self.conn.transfer_complete() {
                    self.completion = Some(now);
                    self.sample(now);
                    return Flow::Halt;
                }
                self.pump(k);
            }
            SimEvent::RtoExpiry { subflow } => {
                self.timers[subflow] = None;
                debug!("t={now}: RTO on subflow {}", subflow + 1);
                self.conn.on_rto(subflow, now);
                self.drain_events(now);
                self.pump(k);
            }
            SimEvent::TraceSample => {
                self.sample(now);
                k.schedule_in(self.trace_interval_nanos, SimEvent::TraceSample);
            }
            SimEvent::TransferDeadline => return Flow::Halt,
        }
        Flow::Continue
    }

    fn pump(&mut self, k: &mut Kernel<SimEvent>) {
        let now = k.now();
        for seg in self.conn.poll_transmit(now) {
            self.sends.push(SendRecord {
                time: now.as_secs_f64(),
                subflow: seg.subflow_id,
                data_seq: seg.data_seq,
                len: seg.size_bytes,
                retransmission: seg.is_retransmission(),
            });
            self.send_on(k, seg.subflow_id, Direction::Forward, seg);
        }
        self.sync_timers(k);
    }

    fn send_on(&mut self, k: &mut Kernel<SimEvent>, path: usize, dir: Direction, segment: Segment) {
        let now = k.now();
        let (link, rng) = match dir {
            Direction::Forward => (&mut self.forward[path], &mut self.forward_rng[path]),
            Direction::Reverse => (&mut self.reverse[path], &mut self.reverse_rng[path]),
        };
        match link.transmit(segment.wire_size(), now, rng) {
            TransmitOutcome::Delivered(at) => {
                k.schedule(at, SimEvent::SegmentDelivery { path, dir, segment })
                    .expect("delivery is never in the past");
            }
            TransmitOutcome::Dropped(reason) => {
                debug!("t={now}: {dir:?} path {} dropped ({reason:?})", path + 1);
            }
        }
    }

    fn sync_timers(&mut self, k: &mut Kernel<SimEvent>) {
        let now = k.now();
        for (i, sf) in self.conn.subflows.iter().enumerate() {
            let wanted = sf.rto_deadline;
            let current = self.timers[i].map(|(at, _)| at);
            if wanted == current {
                continue;
            }
            if let Some((_, handle)) = self.timers[i].take() {
                k.cancel(handle);
            }
            if let Some(at) = wanted {
                let at = at.max(now);
                let handle = k.schedule(at, SimEvent::RtoExpiry { subflow: i }).expect("not in the past");
                self.timers[i] = Some((at, handle));
            }
        }
    }

    fn drain_events(&mut self, now: SimTime) {
        let t = now.as_secs_f64();
        for ConnEvent {
            subflow,
            kind,
            cwnd,
            ssthresh,
            phase,
        } in self.conn.take_events()
        {
            let event = match &kind {
                ConnEventKind::FastRetransmit => TraceEvent::FastRetransmit,
                ConnEventKind::Rto => TraceEvent::Rto,
                ConnEventKind::SpuriousDetected { .. } => TraceEvent::SpuriousDetected,
                ConnEventKind::Restore(_) => TraceEvent::Restore,
            };
            match kind {
                ConnEventKind::SpuriousDetected { detector, snapshot } => {
                    self.detections.push(Detection {
                        time: t,
                        subflow,
                        detector,
                        snapshot,
                        cwnd_at_detection: cwnd,
                        restored: None,
                        srtt: self.conn.subflows[subflow].coupling_rtt(),
                    });
                }
                ConnEventKind::Restore(r) => {
                    if let Some(d) = self.detections.last_mut().filter(|d| d.subflow == subflow) {
                        d.restored = Some(r);
                    }
                }
                _ => {}
            }
            self.trace.push(TraceRecord {
                time: t,
                subflow: subflow + 1,
                cwnd,
                ssthresh,
                phase,
                event,
            });
        }
    }

    fn sample(&mut self, now: SimTime) {
        let t = now.as_secs_f64();
        for sf in &self.conn.subflows {
            self.trace.push(sample_record(t, sf));
        }
    }

    fn finish(self, end: SimTime, events_processed: u64) -> RunOutput {
        let transfer_size = self.conn.state.transfer_size;
        let delivered = self.rx.reassembly.rcv_data_next();
        let completion_time = self.completion.map(SimTime::as_secs_f64);
        let goodput = match completion_time {
            Some(t) if t > 0.0 => transfer_size as f64 * 8.0 / t,
            Some(_) => 0.0,
            None => {
                let t = end.as_secs_f64();
                if t > 0.0 {
                    delivered as f64 * 8.0 / t
                } else {
                    0.0
                }
            }
        };
        let subflows = self
            .conn
            .subflows
            .iter()
            .zip(&self.bytes_by_subflow)
            .map(|(sf, &bytes)| SubflowSummary {
                bytes,
                retransmissions: sf.counters.retransmissions,
                fast_retransmits: sf.counters.fast_retransmits,
                rtos: sf.counters.rtos,
                spurious_detections: sf.counters.spurious_detections,
            })
            .collect();
        RunOutput {
            stats: SummaryStats {
                transfer_size,
                completion_time,
                goodput,
                delivered_bytes: delivered,
                subflows,
                spurious_fast_retransmits: self.rx.spurious_fast_retransmits,
                spurious_timeout_retransmits: self.rx.spurious_timeout_retransmits,
                sender_checksum: self.conn.sender_checksum().value(),
                receiver_checksum: self.rx.checksum().value(),
                protocol_violations: self.conn.protocol_violations,
                events_processed,
            },
            trace: self.trace,
            detections: self.detections,
            sends: self.sends,
            deliveries: self.deliveries,
        }
    }
}

fn sample_record(t: f64, sf: &SubflowState) -> TraceRecord {
    TraceRecord {
        time: t,
        subflow: sf.id + 1,
        cwnd: sf.cwnd,
        ssthresh: sf.ssthresh,
        phase: sf.phase,
        event: TraceEvent::Sample,
    }
}
