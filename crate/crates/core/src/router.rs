//! Splits a streamed model response into speakable text and tool-call
//! directives.
//!
//! Tool calls are delimited by the literal markers `<tool_call>` and
//! `</tool_call>`; the body is `name` followed by opaque argument text
//! (conventionally a JSON object). Text outside markers is forwarded for
//! synthesis in order, and a directive is emitted the moment its close
//! marker is seen — the preceding text never waits on it.
//!
//! The streaming router keeps marker-spanning carry-over so that a chunk
//! boundary inside a marker yields exactly the same routing as unsplit
//! input. A held-back suffix that merely *looks like* the start of a marker
//! is flushed as plain text at end of stream; only an opened marker that is
//! never closed is an error.

use thiserror::Error;

pub const TOOL_CALL_OPEN: &str = "<tool_call>";
pub const TOOL_CALL_CLOSE: &str = "</tool_call>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RouterError {
    #[error("tool-call directive with empty name: {body:?}")]
    EmptyName { body: String },
    #[error("unterminated tool-call marker at stream end: {pending:?}")]
    UnterminatedMarker { pending: String },
}

/// One routed piece of the response stream, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoutedItem {
    /// Speakable text, destined for TTS.
    Text(String),
    /// A parsed tool-call directive (name, opaque argument text).
    Directive { name: String, args: String },
}

/// The routing result for one pushed chunk (or a whole response).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoutedChunk {
    pub items: Vec<RoutedItem>,
}

impl RoutedChunk {
    /// All speakable text, concatenated in order.
    pub fn tts_text(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            if let RoutedItem::Text(t) = item {
                out.push_str(t);
            }
        }
        out
    }

    /// All directives, in order.
    pub fn directives(&self) -> Vec<(&str, &str)> {
        self.items
            .iter()
            .filter_map(|i| match i {
                RoutedItem::Directive { name, args } => Some((name.as_str(), args.as_str())),
                RoutedItem::Text(_) => None,
            })
            .collect()
    }

    fn push_text(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(RoutedItem::Text(last)) = self.items.last_mut() {
            last.push_str(text);
        } else {
            self.items.push(RoutedItem::Text(text.to_string()));
        }
    }

    fn extend(&mut self, other: RoutedChunk) {
        for item in other.items {
            match item {
                RoutedItem::Text(t) => self.push_text(&t),
                d => self.items.push(d),
            }
        }
    }
}

fn parse_directive(body: &str) -> Result<RoutedItem, RouterError> {
    let (name, args) = match body.find('{') {
        Some(i) => (body[..i].trim(), &body[i..]),
        None => (body.trim(), ""),
    };
    if name.is_empty() {
        return Err(RouterError::EmptyName { body: body.to_string() });
    }
    Ok(RoutedItem::Directive { name: name.to_string(), args: args.to_string() })
}

/// Longest suffix of `s` that is a proper prefix of `marker`, in bytes.
/// Both markers are ASCII so byte indexing is safe.
fn partial_marker_suffix(s: &str, marker: &str) -> usize {
    let max = (marker.len() - 1).min(s.len());
    for take in (1..=max).rev() {
        if s.is_char_boundary(s.len() - take) && marker.as_bytes().starts_with(&s.as_bytes()[s.len() - take..]) {
            return take;
        }
    }
    0
}

/// Stateful router for a streamed response. One per committed response.
#[derive(Debug, Clone, Default)]
pub struct StreamRouter {
    pending: String,
    in_marker: bool,
    finished: bool,
}

impl StreamRouter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Route the next contiguous slice of the response stream.
    pub fn push(&mut self, chunk: &str) -> Result<RoutedChunk, RouterError> {
        debug_assert!(!self.finished, "push after finish");
        self.pending.push_str(chunk);
        let mut out = RoutedChunk::default();
        loop {
            if self.in_marker {
                match self.pending.find(TOOL_CALL_CLOSE) {
                    Some(i) => {
                        let body: String = self.pending.drain(..i + TOOL_CALL_CLOSE.len()).collect();
                        out.items.push(parse_directive(&body[..i])?);
                        self.in_marker = false;
                    }
                    None => break,
                }
            } else {
                match self.pending.find(TOOL_CALL_OPEN) {
                    Some(i) => {
                        let text: String = self.pending.drain(..i + TOOL_CALL_OPEN.len()).collect();
                        out.push_text(&text[..i]);
                        self.in_marker = true;
                    }
                    None => {
                        let hold = partial_marker_suffix(&self.pending, TOOL_CALL_OPEN);
                        let emit_len = self.pending.len() - hold;
                        let text: String = self.pending.drain(..emit_len).collect();
                        out.push_text(&text);
                        break;
                    }
                }
            }
        }
        Ok(out)
    }

    /// End of stream. A tail that never formed a complete open marker is
    /// flushed as text; an open marker without its close is an error.
    pub fn finish(&mut self) -> Result<RoutedChunk, RouterError> {
        self.finished = true;
        if self.in_marker {
            return Err(RouterError::UnterminatedMarker { pending: std::mem::take(&mut self.pending) });
        }
        let mut out = RoutedChunk::default();
        let tail = std::mem::take(&mut self.pending);
        out.push_text(&tail);
        Ok(out)
    }
}

/// Route one complete chunk of response text: speakable text plus the
/// directives parsed from marker-delimited regions.
pub fn route_model_chunk(chunk: &str) -> Result<RoutedChunk, RouterError> {
    let mut router = StreamRouter::new();
    let mut out = router.push(chunk)?;
    out.extend(router.finish()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn plain_text_passes_through() {
        let routed = route_model_chunk("Today is sunny.").unwrap();
        assert_eq!(routed.tts_text(), "Today is sunny.");
        assert!(routed.directives().is_empty());
    }

    #[test]
    fn marker_region_becomes_directive() {
        let routed =
            route_model_chunk("Let me check.<tool_call>weather{\"city\":\"HK\"}</tool_call>")
                .unwrap();
        assert_eq!(routed.tts_text(), "Let me check.");
        assert_eq!(routed.directives(), vec![("weather", "{\"city\":\"HK\"}")]);
    }

    #[test]
    fn text_around_directive_keeps_order() {
        let routed =
            route_model_chunk("One.<tool_call>a{}</tool_call>Two.<tool_call>b{}</tool_call>Three.")
                .unwrap();
        assert_eq!(
            routed.items,
            vec![
                RoutedItem::Text("One.".into()),
                RoutedItem::Directive { name: "a".into(), args: "{}".into() },
                RoutedItem::Text("Two.".into()),
                RoutedItem::Directive { name: "b".into(), args: "{}".into() },
                RoutedItem::Text("Three.".into()),
            ]
        );
    }

    #[test]
    fn directive_without_args() {
        let routed = route_model_chunk("<tool_call>ping</tool_call>").unwrap();
        assert_eq!(routed.directives(), vec![("ping", "")]);
    }

    #[test]
    fn empty_name_is_an_error() {
        assert_eq!(
            route_model_chunk("<tool_call>{\"x\":1}</tool_call>"),
            Err(RouterError::EmptyName { body: "{\"x\":1}".into() })
        );
        assert_eq!(
            route_model_chunk("<tool_call>  </tool_call>"),
            Err(RouterError::EmptyName { body: "  ".into() })
        );
    }

    #[test]
    fn unterminated_marker_is_an_error() {
        let mut r = StreamRouter::new();
        r.push("hello <tool_call>weather{").unwrap();
        assert!(matches!(r.finish(), Err(RouterError::UnterminatedMarker { .. })));
    }

    #[test]
    fn lone_partial_open_flushes_as_text() {
        let mut r = StreamRouter::new();
        let first = r.push("it is 1<tool_c").unwrap();
        assert_eq!(first.tts_text(), "it is 1");
        let rest = r.finish().unwrap();
        assert_eq!(rest.tts_text(), "<tool_c");
    }

    #[test]
    fn split_mid_marker_matches_unsplit() {
        let text = "Check.<tool_call>weather{\"city\":\"HK\"}</tool_call> Done.";
        let want = route_model_chunk(text).unwrap();
        for split in 1..text.len() {
            if !text.is_char_boundary(split) {
                continue;
            }
            let mut r = StreamRouter::new();
            let mut got = r.push(&text[..split]).unwrap();
            got.extend(r.push(&text[split..]).unwrap());
            got.extend(r.finish().unwrap());
            assert_eq!(got, want, "split at {split}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            /// Streaming/batch router equivalence over random inputs and
            /// random chunkings.
            #[test]
            fn chunked_routing_matches_one_shot(
                parts in proptest::collection::vec("[a-z <>/{}_\"]{0,12}", 0..8),
                seed in any::<u64>(),
            ) {
                let mut text = String::new();
                for (i, p) in parts.iter().enumerate() {
                    text.push_str(p);
                    if i % 3 == 1 {
                        text.push_str("<tool_call>t{}</tool_call>");
                    }
                }
                let want = route_model_chunk(&text);

                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut r = StreamRouter::new();
                let mut got = RoutedChunk::default();
                let mut rest = text.as_str();
                let mut failed = None;
                while !rest.is_empty() {
                    let mut cut = rng.gen_range(1..=rest.len());
                    while !rest.is_char_boundary(cut) {
                        cut += 1;
                    }
                    match r.push(&rest[..cut]) {
                        Ok(c) => got.extend(c),
                        Err(e) => {
                            failed = Some(e);
                            break;
                        }
                    }
                    rest = &rest[cut..];
                }
                match (failed, want) {
                    (Some(e), Err(we)) => prop_assert_eq!(e, we),
                    (Some(e), Ok(_)) => prop_assert!(false, "stream errored, batch ok: {e:?}"),
                    (None, want) => match (r.finish(), want) {
                        (Ok(tail), Ok(w)) => {
                            got.extend(tail);
                            prop_assert_eq!(got, w);
                        }
                        (Err(e), Err(we)) => prop_assert_eq!(e, we),
                        (a, b) => prop_assert!(false, "mismatch: {a:?} vs {b:?}"),
                    },
                }
            }
        }
    }
}
