#![no_main]

use fwswarm_core::swarmnet::{decode, decode_frame, Parsed};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(Parsed::Frame(frame, used)) = decode_frame(data) {
        assert!(used <= data.len());
        assert_eq!(frame.encode().unwrap(), data[..used]);
    }
    let _ = decode(data);
});
