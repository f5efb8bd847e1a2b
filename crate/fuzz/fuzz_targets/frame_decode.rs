#![no_main]

use libfuzzer_sys::fuzz_target;
use step_orch_gateway::frame::{decode_frame, encode_frame, DecodeOutcome, FrameDecoder};

fuzz_target!(|data: &[u8]| {
    // One-shot decode must never panic, and a decoded frame must re-encode
    // to the exact bytes it was parsed from.
    if let Ok(DecodeOutcome::Frame { frame, consumed }) = decode_frame(data) {
        let bytes = encode_frame(frame.kind, &frame.payload).expect("decoded frame re-encodes");
        assert_eq!(bytes, &data[..consumed]);
    }

    // The streaming decoder must agree with one-shot decoding regardless of
    // how the bytes are sliced. Derive a chunk size from the input itself.
    let cut = data.first().map(|b| (*b as usize % 16) + 1).unwrap_or(1);
    let mut streaming = FrameDecoder::new();
    let mut streamed = Vec::new();
    for chunk in data.chunks(cut) {
        match streaming.push(chunk) {
            Ok(frames) => streamed.extend(frames),
            Err(_) => return, // oversize length prefix; one-shot errors too
        }
    }

    let mut offset = 0usize;
    let mut whole = Vec::new();
    while let Ok(DecodeOutcome::Frame { frame, consumed }) = decode_frame(&data[offset..]) {
        offset += consumed;
        whole.push(frame);
    }
    assert_eq!(streamed, whole);
});
