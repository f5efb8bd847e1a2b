#![no_main]

use libfuzzer_sys::fuzz_target;
use step_orch_core::wav::{parse_wav_or_raw, write_wav};

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = parse_wav_or_raw(data) {
        // Anything accepted must survive a write/parse round trip.
        let rewritten = write_wav(&samples);
        assert_eq!(parse_wav_or_raw(&rewritten).expect("writer output parses"), samples);
    }
});
