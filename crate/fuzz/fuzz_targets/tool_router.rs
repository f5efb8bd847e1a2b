#![no_main]

use libfuzzer_sys::fuzz_target;
use step_orch_core::router::{route_model_chunk, RoutedChunk, StreamRouter};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let whole = route_model_chunk(text);

    // Streaming routing under an input-derived chunking must agree with
    // one-shot routing, including on the error case.
    let cut = data.first().map(|b| (*b as usize % 7) + 1).unwrap_or(1);
    let mut router = StreamRouter::new();
    let mut streamed = RoutedChunk::default();
    let mut rest = text;
    let mut stream_err = None;
    while !rest.is_empty() {
        let mut take = cut.min(rest.len());
        while !rest.is_char_boundary(take) {
            take += 1;
        }
        match router.push(&rest[..take]) {
            Ok(chunk) => {
                for item in chunk.items {
                    match item {
                        step_orch_core::router::RoutedItem::Text(t) => {
                            if let Some(step_orch_core::router::RoutedItem::Text(last)) =
                                streamed.items.last_mut()
                            {
                                last.push_str(&t);
                            } else {
                                streamed.items.push(step_orch_core::router::RoutedItem::Text(t));
                            }
                        }
                        d => streamed.items.push(d),
                    }
                }
            }
            Err(e) => {
                stream_err = Some(e);
                break;
            }
        }
        rest = &rest[take..];
    }

    match (stream_err, whole) {
        (Some(e), Err(we)) => assert_eq!(e, we),
        (Some(e), Ok(_)) => panic!("streaming errored but one-shot succeeded: {e:?}"),
        (None, whole) => match (router.finish(), whole) {
            (Ok(tail), Ok(expected)) => {
                for item in tail.items {
                    match item {
                        step_orch_core::router::RoutedItem::Text(t) => {
                            if let Some(step_orch_core::router::RoutedItem::Text(last)) =
                                streamed.items.last_mut()
                            {
                                last.push_str(&t);
                            } else {
                                streamed.items.push(step_orch_core::router::RoutedItem::Text(t));
                            }
                        }
                        d => streamed.items.push(d),
                    }
                }
                assert_eq!(streamed, expected);
            }
            (Err(e), Err(we)) => assert_eq!(e, we),
            (a, b) => panic!("streaming/one-shot disagree: {a:?} vs {b:?}"),
        },
    }
});
