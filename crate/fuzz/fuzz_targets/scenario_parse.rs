#![no_main]

use fwswarm_core::sim::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ScenarioConfig::parse(text) {
            ScenarioConfig::parse(&cfg.to_toml()).expect("serialized scenario parses");
        }
    }
});
