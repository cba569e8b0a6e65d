#![no_main]

use fwswarm_core::sim::runlog::parse_record;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        let _ = parse_record(line);
    }
});
