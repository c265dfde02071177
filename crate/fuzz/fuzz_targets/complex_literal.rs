#![no_main]

use dma_uplink::channel_file::{format_complex, parse_complex};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Some(z) = parse_complex(text) {
        assert!(z.re.is_finite() && z.im.is_finite());
        assert_eq!(parse_complex(&format_complex(z)), Some(z));
    }
});
