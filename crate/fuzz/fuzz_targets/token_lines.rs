#![no_main]

use libfuzzer_sys::fuzz_target;
use step_orch_core::tokens::{parse_token_lines, write_token_lines};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(tokens) = parse_token_lines(text) {
        // Write/parse is a fixpoint for anything that parsed.
        let written = write_token_lines(&tokens);
        let reparsed = parse_token_lines(&written).expect("writer output parses");
        assert_eq!(reparsed, tokens);
    }
});
