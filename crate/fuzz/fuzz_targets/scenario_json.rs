#![no_main]

use libfuzzer_sys::fuzz_target;
use mpsim::harness::parse_scenario;

// Forces the JSON branch by wrapping arbitrary input in an object.
fuzz_target!(|data: &[u8]| {
    let Ok(body) = std::str::from_utf8(data) else {
        return;
    };
    let text = format!("{{{body}}}");
    if let Ok(cfg) = parse_scenario(&text) {
        cfg.validate().expect("parsed config is valid");
    }
});
