#![no_main]

use fwswarm_core::sim::replay;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = replay(data);
});
