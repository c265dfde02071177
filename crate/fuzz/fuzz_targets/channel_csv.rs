#![no_main]

use dma_uplink::channel_file::{encode_csv, parse_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mats) = parse_csv(text) {
        assert_eq!(parse_csv(&encode_csv(&mats)).unwrap(), mats);
    }
});
