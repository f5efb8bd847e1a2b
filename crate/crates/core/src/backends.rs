//! Deterministic backend mocks with configurable latency.
//!
//! The neural components behind the pipeline (chat model, ASR, speech
//! synthesis, tools) appear here only as scheduling behavior: scripted
//! content delivered at configured virtual-clock offsets. Given the same
//! seed and scenario, every unit's content and timing is identical across
//! runs. HTTP-backed variants live in the gateway crate and honor the same
//! contracts.
//!
//! Cancellation contract: once a stream is cancelled, no further units are
//! delivered and the stream terminates with a single `Cancelled` marker.

use crate::context::estimate_tokens;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

/// Chat responses stream in chunks of this many code points.
pub const TEXT_CHUNK_CHARS: usize = 8;
/// One synthesized audio chunk per this many estimated text tokens.
pub const TTS_WINDOW_TOKENS: usize = 4;
/// Code points per TTS window (4 tokens × 4 chars/token).
pub const TTS_WINDOW_CHARS: usize = 16;
/// Duration metadata of every synthesized audio chunk.
pub const AUDIO_CHUNK_MS: u64 = 320;
/// Average audio-to-text token compaction enforced by the mock ASR.
pub const ASR_COMPACTION_RATIO: usize = 14;

/// Latency shape for one backend. With `jitter_ms == 0` (the default) the
/// first-unit latency is fixed; otherwise a uniform jitter in
/// `[0, jitter_ms]` is added, sampled reproducibly from (seed, request
/// index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatencyModel {
    pub first_unit_ms: u64,
    pub per_unit_ms: u64,
    pub jitter_ms: u64,
    pub seed: u64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { first_unit_ms: 500, per_unit_ms: 0, jitter_ms: 0, seed: 0 }
    }
}

impl LatencyModel {
    pub fn fixed(first_unit_ms: u64, per_unit_ms: u64) -> Self {
        Self { first_unit_ms, per_unit_ms, jitter_ms: 0, seed: 0 }
    }

    /// First-unit latency for the given request index.
    pub fn sample_first(&self, request_index: u64) -> u64 {
        if self.jitter_ms == 0 {
            return self.first_unit_ms;
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.seed ^ request_index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        self.first_unit_ms + rng.gen_range(0..=self.jitter_ms)
    }
}

/// One delivery from a scheduled stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamItem<T> {
    Unit(T),
    Done,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledUnit<T> {
    pub at_ms: u64,
    pub item: StreamItem<T>,
}

/// A backend response as a precomputed delivery schedule on the virtual
/// clock. `poll_until` hands out everything due; `cancel` drops all
/// undelivered units and terminates the stream with one `Cancelled` marker.
#[derive(Debug, Clone)]
pub struct ScheduledStream<T> {
    pending: VecDeque<(u64, T)>,
    done_at: Option<u64>,
    cancelled_at: Option<u64>,
    terminated: bool,
}

impl<T> ScheduledStream<T> {
    pub fn new(units: Vec<(u64, T)>, done_at: u64) -> Self {
        debug_assert!(units.windows(2).all(|w| w[0].0 <= w[1].0), "units must be time-ordered");
        Self { pending: units.into(), done_at: Some(done_at), cancelled_at: None, terminated: false }
    }

    /// Timestamps at which this stream wants to be polled.
    pub fn wake_times(&self) -> Vec<u64> {
        let mut times: Vec<u64> = self.pending.iter().map(|(at, _)| *at).collect();
        if let Some(d) = self.done_at {
            times.push(d);
        }
        times
    }

    pub fn cancel(&mut self, at_ms: u64) {
        if self.terminated || self.cancelled_at.is_some() {
            return;
        }
        self.cancelled_at = Some(at_ms);
        self.pending.clear();
        self.done_at = None;
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    /// Deliver everything due at or before `now`, in order.
    pub fn poll_until(&mut self, now_ms: u64) -> Vec<ScheduledUnit<T>> {
        let mut out = Vec::new();
        if self.terminated {
            return out;
        }
        if let Some(at) = self.cancelled_at {
            if at <= now_ms {
                out.push(ScheduledUnit { at_ms: at, item: StreamItem::Cancelled });
                self.terminated = true;
            }
            return out;
        }
        while let Some((at, _)) = self.pending.front() {
            if *at > now_ms {
                return out;
            }
            let (at, unit) = self.pending.pop_front().unwrap();
            out.push(ScheduledUnit { at_ms: at, item: StreamItem::Unit(unit) });
        }
        if let Some(done) = self.done_at {
            if done <= now_ms {
                out.push(ScheduledUnit { at_ms: done, item: StreamItem::Done });
                self.done_at = None;
                self.terminated = true;
            }
        }
        out
    }
}

/// Units of a chat generation stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChatUnit {
    FirstToken,
    Text(String),
}

/// Scripted chat backend: returns the response scripted for the turn,
/// chunked at [`TEXT_CHUNK_CHARS`] code points, the first chunk after the
/// first-unit latency and each subsequent chunk one per-unit interval
/// later.
#[derive(Debug, Clone)]
pub struct MockChatBackend {
    latency: LatencyModel,
    responses: Vec<String>,
    requests: u64,
}

impl MockChatBackend {
    pub fn new(latency: LatencyModel, responses: Vec<String>) -> Self {
        Self { latency, responses, requests: 0 }
    }

    fn response_for(&self, turn_index: usize) -> &str {
        if self.responses.is_empty() {
            return "";
        }
        &self.responses[turn_index % self.responses.len()]
    }

    /// Plan the generation stream for a request issued at `issued_at_ms`.
    pub fn generate(&mut self, turn_index: usize, issued_at_ms: u64) -> ScheduledStream<ChatUnit> {
        let request_index = self.requests;
        self.requests += 1;
        let first = issued_at_ms + self.latency.sample_first(request_index);
        let per = self.latency.per_unit_ms;
        let response = self.response_for(turn_index);

        let chars: Vec<char> = response.chars().collect();
        let mut units = Vec::new();
        let mut last = first;
        if !chars.is_empty() {
            units.push((first, ChatUnit::FirstToken));
            for (k, chunk) in chars.chunks(TEXT_CHUNK_CHARS).enumerate() {
                let at = first + k as u64 * per;
                units.push((at, ChatUnit::Text(chunk.iter().collect())));
                last = at;
            }
        }
        ScheduledStream::new(units, last)
    }
}

/// Force a transcript to estimate exactly `ceil(token_count / 14)` text
/// tokens: truncate or pad the scripted text to 4·k code points, cycling
/// the script itself (or a filler) as padding.
pub fn pad_transcript(script: &str, token_count: usize) -> String {
    let target_tokens = (token_count + ASR_COMPACTION_RATIO - 1) / ASR_COMPACTION_RATIO;
    let target_chars = 4 * target_tokens;
    if target_chars == 0 {
        return String::new();
    }
    let mut out: String = script.chars().take(target_chars).collect();
    let mut have = out.chars().count();
    if have < target_chars {
        let filler: Vec<char> = if script.is_empty() {
            "mm ".chars().collect()
        } else {
            let mut f: Vec<char> = script.chars().collect();
            f.push(' ');
            f
        };
        let mut i = 0usize;
        while have < target_chars {
            out.push(filler[i % filler.len()]);
            i += 1;
            have += 1;
        }
    }
    debug_assert_eq!(estimate_tokens(&out), target_tokens);
    out
}

/// Scripted ASR backend: one asynchronous completion per closed turn whose
/// transcript estimates exactly ceil(tokens / 14) text tokens.
#[derive(Debug, Clone)]
pub struct MockAsrBackend {
    latency: LatencyModel,
    transcripts: Vec<String>,
    requests: u64,
}

impl MockAsrBackend {
    pub fn new(latency: LatencyModel, transcripts: Vec<String>) -> Self {
        Self { latency, transcripts, requests: 0 }
    }

    /// Returns (completion time, transcript text).
    pub fn transcribe(
        &mut self,
        turn_index: usize,
        token_count: usize,
        requested_at_ms: u64,
    ) -> (u64, String) {
        let request_index = self.requests;
        self.requests += 1;
        let script = if self.transcripts.is_empty() {
            ""
        } else {
            &self.transcripts[turn_index % self.transcripts.len()]
        };
        let at = requested_at_ms + self.latency.sample_first(request_index);
        (at, pad_transcript(script, token_count))
    }
}

/// Availability plan for one synthesized audio chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AudioChunkPlan {
    pub index: u64,
    pub avail_ms: u64,
    pub duration_ms: u64,
}

/// Streaming TTS mock. Text accumulates into 16-code-point windows; window
/// `k` becomes an audio chunk available `first_unit_ms + k·per_unit_ms`
/// after its source text arrived. A partial window flushes at end of text.
#[derive(Debug, Clone)]
pub struct TtsScheduler {
    latency: LatencyModel,
    pending_chars: usize,
    chunk_index: u64,
    finished: bool,
    cancelled: bool,
}

impl TtsScheduler {
    pub fn new(latency: LatencyModel) -> Self {
        Self { latency, pending_chars: 0, chunk_index: 0, finished: false, cancelled: false }
    }

    fn emit(&mut self, src_at_ms: u64) -> AudioChunkPlan {
        let k = self.chunk_index;
        self.chunk_index += 1;
        AudioChunkPlan {
            index: k,
            avail_ms: src_at_ms + self.latency.first_unit_ms + k * self.latency.per_unit_ms,
            duration_ms: AUDIO_CHUNK_MS,
        }
    }

    pub fn push_text(&mut self, at_ms: u64, text: &str) -> Vec<AudioChunkPlan> {
        if self.cancelled || self.finished {
            return Vec::new();
        }
        self.pending_chars += text.chars().count();
        let mut plans = Vec::new();
        while self.pending_chars >= TTS_WINDOW_CHARS {
            self.pending_chars -= TTS_WINDOW_CHARS;
            plans.push(self.emit(at_ms));
        }
        plans
    }

    /// End of source text: flush any partial window.
    pub fn finish(&mut self, at_ms: u64) -> Vec<AudioChunkPlan> {
        if self.cancelled || self.finished {
            return Vec::new();
        }
        self.finished = true;
        if self.pending_chars > 0 {
            self.pending_chars = 0;
            return vec![self.emit(at_ms)];
        }
        Vec::new()
    }

    pub fn cancel(&mut self) {
        self.cancelled = true;
    }

    pub fn chunks_planned(&self) -> u64 {
        self.chunk_index
    }
}

/// Scripted tool executor: per-name latency and payload, an optional global
/// timeout, and an error payload for unknown tools. Errors are results, not
/// crashes.
#[derive(Debug, Clone, Default)]
pub struct MockToolExecutor {
    scripted: BTreeMap<String, (u64, String)>,
    timeout_ms: Option<u64>,
}

impl MockToolExecutor {
    pub fn new(scripted: BTreeMap<String, (u64, String)>, timeout_ms: Option<u64>) -> Self {
        Self { scripted, timeout_ms }
    }

    pub fn script(&mut self, name: &str, latency_ms: u64, payload: &str) {
        self.scripted.insert(name.to_string(), (latency_ms, payload.to_string()));
    }

    /// Returns (completion time, result payload).
    pub fn invoke(&self, name: &str, dispatched_at_ms: u64) -> (u64, String) {
        match self.scripted.get(name) {
            Some((latency, payload)) => match self.timeout_ms {
                Some(t) if *latency > t => {
                    (dispatched_at_ms + t, "{\"error\":\"timeout\"}".to_string())
                }
                _ => (dispatched_at_ms + latency, payload.clone()),
            },
            None => (dispatched_at_ms, "{\"error\":\"unknown_tool\"}".to_string()),
        }
    }
}
