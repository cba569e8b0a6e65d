#![no_main]

use fwswarm_core::planning::{export_plans, import_plans};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(plans) = import_plans(text) {
            import_plans(&export_plans(&plans)).expect("exported plans import");
        }
    }
});
