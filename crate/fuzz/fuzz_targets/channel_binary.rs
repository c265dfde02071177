#![no_main]

use dma_uplink::channel_file::{decode_binary, encode_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // anything that decodes must re-encode to the same bytes
    if let Ok(mats) = decode_binary(data) {
        if let Ok(bytes) = encode_binary(&mats) {
            assert_eq!(decode_binary(&bytes).unwrap(), mats);
        }
    }
});
