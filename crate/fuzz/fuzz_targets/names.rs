#![no_main]

use libfuzzer_sys::fuzz_target;
use mpsim::harness::{SweepParam, TraceEvent};
use mpsim::spurious::DetectorChoice;
use mpsim::subflow::Phase;
use mpsim::CouplingMode;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = s.parse::<CouplingMode>() {
        assert_eq!(m.name().parse::<CouplingMode>().ok(), Some(m));
    }
    if let Ok(d) = s.parse::<DetectorChoice>() {
        assert_eq!(d.to_string().parse::<DetectorChoice>().ok(), Some(d));
    }
    if let Ok(p) = s.parse::<SweepParam>() {
        assert_eq!(p.name().parse::<SweepParam>().ok(), Some(p));
    }
    let _ = s.parse::<TraceEvent>();
    let _ = s.parse::<Phase>();
});
