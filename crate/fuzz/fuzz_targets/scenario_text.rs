#![no_main]

use libfuzzer_sys::fuzz_target;
use mpsim::harness::parse_scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = parse_scenario(text) {
        // Anything accepted must also pass validation on its own.
        cfg.validate().expect("parsed config is valid");
    }
});
