#![no_main]

use libfuzzer_sys::fuzz_target;
use mpsim::harness::{parse_trace_csv, render_svg, CsvTable};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_trace_csv(text) {
        let csv = CsvTable::from_trace(&records).to_csv_string();
        let again = parse_trace_csv(&csv).expect("re-emitted trace parses");
        assert_eq!(again.len(), records.len());
        let _ = render_svg(&records);
    }
});
