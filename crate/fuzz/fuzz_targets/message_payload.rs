#![no_main]

use fwswarm_core::swarmnet::SwarmMessage;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&msgid, payload)) = data.split_first() else {
        return;
    };
    let Ok(msg) = SwarmMessage::decode_payload(msgid, payload) else {
        return;
    };
    assert_eq!(msg.message_id(), msgid);
    let bytes = msg.encode_payload().expect("decoded messages re-encode");
    let again = SwarmMessage::decode_payload(msgid, &bytes).expect("re-encoded payload decodes");
    assert_eq!(again.encode_payload().unwrap(), bytes);
});
