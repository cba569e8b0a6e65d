#![no_main]

use fwswarm_core::swarmnet::StreamDecoder;
use libfuzzer_sys::fuzz_target;

// The first byte picks the chunk size so frames get split at odd places.
fuzz_target!(|data: &[u8]| {
    let Some((&k, rest)) = data.split_first() else {
        return;
    };
    let mut dec = StreamDecoder::new();
    let mut frames = Vec::new();
    for chunk in rest.chunks(usize::from(k).max(1)) {
        dec.push(chunk);
        frames.extend(dec.drain_frames());
    }
    let mut whole = StreamDecoder::new();
    whole.push(rest);
    assert_eq!(frames, whole.drain_frames());
    assert!(dec.buffered() <= rest.len());
});
