//! End-to-end acceptance checks. Runs as a plain binary so every check can
//! print its own PASS/FAIL line; exits nonzero if any check fails.

use std::time::Instant;

use mpsim::coupling::{compute_alpha, on_ack_increase, on_loss_decrease, CouplingMode, CouplingView};
use mpsim::harness::{run_scenario, CsvTable, RunOutput, ScenarioConfig, TraceEvent, TraceRecord};
use mpsim::netmodel::{LinkConfig, LinkState, TransmitOutcome};
use mpsim::simkernel::{RandomStream, SimTime};
use mpsim::spurious::DetectorChoice;
use rayon::prelude::*;

type Check = Result<String, String>;

const TWO_MB: u64 = 2_000_000;
// Fine sampling so per-RTT window ratios are measured on fresh values.
const FINE_TRACE_INTERVAL: f64 = 0.005;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn grid_config(capacity_mbps: f64, delay_ms: f64, loss: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("paper-base").expect("bundled preset");
    cfg.transfer_size = TWO_MB;
    let l2 = &mut cfg.links[1];
    l2.capacity_bps = capacity_mbps * 1e6;
    l2.one_way_delay = delay_ms / 1e3;
    l2.loss_rate = loss;
    cfg
}

fn grid() -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for c in [0.5, 4.0, 16.0] {
        for d in [10.0, 160.0, 320.0] {
            for l in [0.0, 0.01, 0.05] {
                out.push((c, d, l));
            }
        }
    }
    out
}

fn asymmetric(detector: DetectorChoice) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::preset("asymmetric").expect("bundled preset");
    cfg.transfer_size = TWO_MB;
    cfg.coupling = CouplingMode::RttCompensator;
    cfg.detector = detector;
    cfg.trace_interval = FINE_TRACE_INTERVAL;
    cfg
}

fn integrity_grid() -> Check {
    let start = Instant::now();
    let mut jobs = Vec::new();
    for p in grid() {
        for mode in CouplingMode::ALL {
            for det in DetectorChoice::ALL {
                jobs.push((p, mode, det));
            }
        }
    }
    let failures: Vec<String> = jobs
        .par_iter()
        .filter_map(|&((c, d, l), mode, det)| {
            let mut cfg = grid_config(c, d, l);
            cfg.coupling = mode;
            cfg.detector = det;
            let s = run_scenario(&cfg).stats;
            (!(s.completed() && s.integrity_ok())).then(|| {
                format!(
                    "{c} Mbps/{d} ms/{l} {mode}/{det}: completed={} delivered={} checksums {:x}/{:x}",
                    s.completed(),
                    s.delivered_bytes,
                    s.sender_checksum,
                    s.receiver_checksum
                )
            })
        })
        .collect();
    let wall = start.elapsed().as_secs_f64();
    ensure(failures.is_empty(), || failures.join("; "))?;
    ensure(wall <= 60.0, || format!("took {wall:.1} s"))?;
    Ok(format!("{} runs intact in {wall:.1} s", jobs.len()))
}

fn determinism() -> Check {
    let mismatches: Vec<String> = grid()
        .par_iter()
        .flat_map_iter(|&(c, d, l)| DetectorChoice::ALL.map(move |det| (c, d, l, det)))
        .filter_map(|(c, d, l, det)| {
            let mut cfg = grid_config(c, d, l);
            cfg.detector = det;
            let a = CsvTable::from_trace(&run_scenario(&cfg).trace).to_csv_string();
            let b = CsvTable::from_trace(&run_scenario(&cfg).trace).to_csv_string();
            (a != b).then(|| format!("{c}/{d}/{l}/{det}"))
        })
        .collect();
    ensure(mismatches.is_empty(), || format!("differing traces: {}", mismatches.join(", ")))?;
    Ok(format!("{} grid points byte-identical", grid().len() * 3))
}

// Direct evaluation of the aggressiveness factor, written independently of
// the library.
fn oracle_alpha(w: &[f64], rtt: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let best = w.iter().zip(rtt).map(|(w, r)| w / (r * r)).fold(f64::MIN, f64::max);
    let denom: f64 = w.iter().zip(rtt).map(|(w, r)| w / r).sum();
    total * best / (denom * denom)
}

fn coupling_math() -> Check {
    let single = compute_alpha(&CouplingView::new(vec![17.0], vec![0.123])).map_err(|e| e.to_string())?;
    ensure(single == 1.0, || format!("single-subflow alpha = {single}"))?;
    for n in 2..=4 {
        let v = CouplingView::new(vec![10.0; n], vec![0.1; n]);
        let a = compute_alpha(&v).map_err(|e| e.to_string())?;
        let expect = 1.0 / n as f64;
        ensure((a - expect).abs() <= 1e-12, || format!("n={n}: alpha {a}"))?;
        let o = oracle_alpha(&vec![10.0; n], &vec![0.1; n]);
        ensure((o - expect).abs() <= 1e-12, || format!("n={n}: oracle {o}"))?;
    }
    let mut rng = RandomStream::new(0xC0FFEE);
    let mut max_rel = 0.0f64;
    for k in 0..10_000 {
        let n = 1 + (rng.next_u64() % 4) as usize;
        let w: Vec<f64> = (0..n).map(|_| 1.0 + 200.0 * rng.next_uniform()).collect();
        let rtt: Vec<f64> = (0..n).map(|_| 0.001 + 2.0 * rng.next_uniform()).collect();
        let v = CouplingView::new(w.clone(), rtt.clone());
        let i = (rng.next_u64() % n as u64) as usize;
        let inc = on_ack_increase(CouplingMode::RttCompensator, i, &v);
        ensure(inc <= 1.0 / w[i], || format!("view {k}: increase {inc} > 1/{}", w[i]))?;
        let a = compute_alpha(&v).map_err(|e| e.to_string())?;
        max_rel = max_rel.max(((a - oracle_alpha(&w, &rtt)) / a).abs());
    }
    ensure(max_rel < 1e-9, || format!("alpha disagrees with oracle, rel err {max_rel:e}"))?;
    let v = CouplingView::new(vec![10.0, 10.0], vec![0.1, 0.1]);
    let (w1, _) = on_loss_decrease(CouplingMode::FullyCoupled, 0, &v);
    ensure(w1 == 1.0, || format!("fully coupled decrease gave {w1}"))?;
    Ok(format!("identities exact, 10^4 views capped, oracle rel err {max_rel:.1e}"))
}

fn delivered_share_second_half(out: &RunOutput) -> (usize, f64) {
    let end = out.stats.completion_time.unwrap_or(0.0);
    let mut per = vec![0u64; out.stats.subflows.len()];
    for d in out.deliveries.iter().filter(|d| d.time >= end / 2.0) {
        per[d.subflow] += d.bytes;
    }
    let total: u64 = per.iter().sum();
    let (top, bytes) = per.iter().enumerate().max_by_key(|(_, b)| **b).expect("two subflows");
    (top, *bytes as f64 / total.max(1) as f64)
}

fn dominance() -> Check {
    let out = run_scenario(&asymmetric(DetectorChoice::None));
    let s = &out.stats;
    ensure(s.completed() && s.integrity_ok(), || "transfer incomplete".into())?;
    ensure(s.spurious_fast_retransmits > 0, || "no spurious fast retransmit".into())?;
    let (top, share) = delivered_share_second_half(&out);
    ensure(share >= 0.8, || format!("top subflow carries only {:.1}%", share * 100.0))?;
    Ok(format!(
        "{} spurious fast retransmits; subflow {} carries {:.1}% of second-half bytes",
        s.spurious_fast_retransmits,
        top + 1,
        share * 100.0
    ))
}

fn eifel_regime() -> Check {
    let base = run_scenario(&asymmetric(DetectorChoice::None));
    let out = run_scenario(&asymmetric(DetectorChoice::Eifel));
    ensure(out.stats.integrity_ok(), || "transfer incomplete".into())?;
    ensure(!out.detections.is_empty(), || "no detection".into())?;
    for (i, rec) in out.trace.iter().enumerate() {
        if rec.event != TraceEvent::SpuriousDetected {
            continue;
        }
        let det = out
            .detections
            .iter()
            .find(|d| d.time == rec.time && d.subflow + 1 == rec.subflow)
            .ok_or_else(|| format!("no detection record for event at {}", rec.time))?;
        let next = out.trace.get(i + 1).ok_or("trace ends at detection")?;
        ensure(
            next.event == TraceEvent::Restore && next.subflow == rec.subflow,
            || format!("detection at {} not followed by Restore", rec.time),
        )?;
        ensure(next.cwnd == det.snapshot.cwnd_before, || {
            format!("restored cwnd {} != snapshot {}", next.cwnd, det.snapshot.cwnd_before)
        })?;
    }
    let (g, g0) = (out.stats.goodput, base.stats.goodput);
    ensure(g >= g0, || format!("goodput {g:.0} < detector-less {g0:.0}"))?;
    Ok(format!(
        "{} detections restored exactly; goodput {:.0} vs {:.0} bit/s",
        out.detections.len(),
        g,
        g0
    ))
}

// Window of `subflow` in effect at time `t`.
fn cwnd_at(trace: &[&TraceRecord], t: f64) -> f64 {
    let idx = trace.partition_point(|r| r.time <= t);
    trace[idx.saturating_sub(1)].cwnd
}

fn dsack_regime() -> Check {
    let out = run_scenario(&asymmetric(DetectorChoice::Dsack));
    ensure(out.stats.integrity_ok(), || "transfer incomplete".into())?;
    ensure(!out.detections.is_empty(), || "no detection".into())?;
    let mut intervals = 0;
    let mut min_ratio = f64::INFINITY;
    for det in &out.detections {
        let restored = det.restored.as_ref().ok_or("detection without restoration")?;
        let target = restored.ssthresh;
        let sf = det.subflow + 1;
        let trace: Vec<&TraceRecord> = out.trace.iter().filter(|r| r.subflow == sf).collect();
        // The regrowth ends at the next loss response on this subflow.
        let stop = out
            .trace
            .iter()
            .filter(|r| r.subflow == sf && r.time > det.time)
            .find(|r| matches!(r.event, TraceEvent::FastRetransmit | TraceEvent::Rto))
            .map(|r| r.time)
            .unwrap_or(f64::INFINITY);
        let rtt = det.srtt;
        let mut t = det.time;
        let mut w = cwnd_at(&trace, t);
        while w < target {
            let t_next = t + rtt;
            if t_next > stop || out.stats.completion_time.is_some_and(|c| t_next > c) {
                break;
            }
            let w_next = cwnd_at(&trace, t_next);
            let needed = (1.8 * w).min(target);
            ensure(w_next > w && w_next >= needed, || {
                format!(
                    "subflow {sf} after detection at {:.3}: cwnd {w:.2} -> {w_next:.2} over srtt {rtt:.3} (target {target:.2})",
                    det.time
                )
            })?;
            min_ratio = min_ratio.min(w_next / w);
            intervals += 1;
            t = t_next;
            w = w_next;
        }
    }
    Ok(format!(
        "{} detections, {intervals} regrowth intervals, min ratio {}",
        out.detections.len(),
        if intervals > 0 { format!("{min_ratio:.2}") } else { "n/a".into() }
    ))
}

fn max_sends_per_100ms(out: &RunOutput) -> usize {
    let mut best = 0;
    for det in &out.detections {
        let times: Vec<f64> = out
            .sends
            .iter()
            .filter(|s| s.subflow == det.subflow && s.time >= det.time && s.time < det.time + 1.0)
            .map(|s| s.time)
            .collect();
        for (i, &t0) in times.iter().enumerate() {
            let n = times[i..].iter().take_while(|&&t| t < t0 + 0.1).count();
            best = best.max(n);
        }
    }
    best
}

fn burst_contrast() -> Check {
    let eifel = max_sends_per_100ms(&run_scenario(&asymmetric(DetectorChoice::Eifel)));
    let dsack = max_sends_per_100ms(&run_scenario(&asymmetric(DetectorChoice::Dsack)));
    ensure(eifel > dsack, || format!("Eifel peak {eifel} <= DSACK peak {dsack}"))?;
    Ok(format!("peak packets per 100 ms: Eifel {eifel}, DSACK {dsack}"))
}

fn link_model() -> Check {
    let mut link = LinkState::new(LinkConfig::paper_base());
    let mut rng = RandomStream::new(1);
    let at = match link.transmit(1000, SimTime::ZERO, &mut rng) {
        TransmitOutcome::Delivered(at) => at,
        other => return Err(format!("1000-byte packet not delivered: {other:?}")),
    };
    // 8000 bits at 500 kbit/s plus 10 ms.
    let expect = SimTime::from_nanos(16_000_000 + 10_000_000);
    ensure(at == expect, || format!("delivered at {at}, expected {expect}"))?;

    let (n, p) = (10_000u64, 0.05);
    let mut lossy = LinkState::new(LinkConfig {
        loss_rate: p,
        ..LinkConfig::paper_base()
    });
    let mut rng = RandomStream::derived(7, 0);
    let gap = LinkConfig::paper_base().serialization_nanos(1000);
    let drops = (0..n)
        .filter(|&k| {
            let now = SimTime::from_nanos(k * gap);
            matches!(lossy.transmit(1000, now, &mut rng), TransmitOutcome::Dropped(_))
        })
        .count() as f64;
    let mean = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    ensure((drops - mean).abs() <= 3.0 * sigma, || {
        format!("{drops} drops, expected {mean} +- {:.1}", 3.0 * sigma)
    })?;
    Ok(format!("26 ms delivery exact; {drops} drops vs {mean} +- {:.1}", 3.0 * sigma))
}

fn fairness() -> Check {
    let mut multi = ScenarioConfig::preset("paper-base").expect("bundled preset");
    multi.transfer_size = TWO_MB;
    multi.coupling = CouplingMode::RttCompensator;
    let mut single = multi.clone();
    single.links.truncate(1);
    single.coupling = CouplingMode::Uncoupled;

    let m = run_scenario(&multi).stats;
    let s = run_scenario(&single).stats;
    let (tm, ts) = (
        m.completion_time.ok_or("multipath run incomplete")?,
        s.completion_time.ok_or("single-path run incomplete")?,
    );
    let single_goodput = s.transfer_size as f64 * 8.0 / ts;
    let mut worst = 0.0f64;
    for (i, sf) in m.subflows.iter().enumerate() {
        let g = sf.bytes as f64 * 8.0 / tm;
        worst = worst.max(g / single_goodput);
        ensure(g <= 1.05 * single_goodput, || {
            format!("subflow {} goodput {g:.0} > 1.05 x {single_goodput:.0}", i + 1)
        })?;
    }
    Ok(format!("worst per-subflow / single-path goodput = {worst:.3}"))
}

type CheckFn = fn() -> Check;

fn main() {
    let checks: [(&str, CheckFn); 9] = [
        ("integrity grid", integrity_grid),
        ("determinism", determinism),
        ("coupling math", coupling_math),
        ("dominance without detector", dominance),
        ("Eifel restoration", eifel_regime),
        ("DSACK slow-start regrowth", dsack_regime),
        ("burst contrast", burst_contrast),
        ("link model", link_model),
        ("fairness", fairness),
    ];
    let mut failed = 0;
    for (n, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
