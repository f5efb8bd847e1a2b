//! Streaming PCM-to-token conversion.
//!
//! Two parallel fixed-duration segmenters share a 120 ms grid: at 16 kHz
//! one segment is 1920 samples and yields exactly two linguistic and three
//! semantic tokens, so one segment is one interleave group and the emitted
//! stream is always a whole number of `[L, L, S, S, S]` groups. Per-second
//! totals match the nominal codebook rates: 2 / 0.12 s ≈ 16.7 Hz linguistic
//! and 3 / 0.12 s = 25 Hz semantic.
//!
//! The codecs are deterministic stand-ins for real quantizers: each token id
//! is a salted FNV-1a-64 hash of the segment bytes reduced modulo the
//! codebook size. Identical audio delivered under any chunking produces a
//! byte-identical token sequence.

use crate::audio::{PcmFrame, SAMPLES_PER_MS, SAMPLE_RATE};
use crate::tokens::{AudioToken, GROUP_LINGUISTIC, GROUP_SEMANTIC, LINGUISTIC_CODEBOOK, SEMANTIC_CODEBOOK};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Segment duration. The unique duration that yields exactly 2 linguistic
/// and 3 semantic tokens per segment at the nominal rates.
pub const SEGMENT_MS: u32 = 120;
/// Samples per segment at 16 kHz.
pub const SAMPLES_PER_SEGMENT: usize = SEGMENT_MS as usize * SAMPLES_PER_MS;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    /// Duration of one interleave group in milliseconds; fixed at 120.
    pub segment_ms: u32,
    /// Salt for the linguistic codec.
    pub salt_ling: u64,
    /// Salt for the semantic codec.
    pub salt_sem: u64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self { segment_ms: SEGMENT_MS, salt_ling: 0, salt_sem: 1 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenizerError {
    #[error("segment_ms must be {SEGMENT_MS} (got {0})")]
    Config(u32),
    #[error("unsupported sample rate {0} Hz (expected {SAMPLE_RATE} Hz)")]
    SampleRate(u32),
    #[error("empty frame")]
    EmptyFrame,
    #[error("frame timestamp {at_ms} ms precedes previous frame at {prev_ms} ms")]
    TimestampRegression { at_ms: u64, prev_ms: u64 },
    #[error("push after flush")]
    PushAfterFlush,
    #[error("double flush")]
    DoubleFlush,
}

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a_64(data: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in data {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Deterministic mock codec: `FNV-1a-64(salt ‖ index ‖ pcm_bytes)` reduced
/// modulo the codebook size. Salt and index are hashed as little-endian
/// 64-bit values. Byte-exact across platforms.
pub fn encode_segment(pcm_bytes: &[u8], codebook_size: u32, salt: u64, index: u64) -> u32 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in salt.to_le_bytes().into_iter().chain(index.to_le_bytes()) {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    for &b in pcm_bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (hash % codebook_size as u64) as u32
}

/// Incremental tokenizer state. One per audio stream; pushes and flush must
/// be serialized per stream. Distinct streams are independent.
#[derive(Debug, Clone)]
pub struct StreamTokenizer {
    cfg: SegmenterConfig,
    buf: Vec<i16>,
    segments_emitted: u64,
    last_frame_ms: Option<u64>,
    flushed: bool,
}

impl StreamTokenizer {
    pub fn new(cfg: SegmenterConfig) -> Result<Self, TokenizerError> {
        if cfg.segment_ms != SEGMENT_MS {
            return Err(TokenizerError::Config(cfg.segment_ms));
        }
        Ok(Self { cfg, buf: Vec::new(), segments_emitted: 0, last_frame_ms: None, flushed: false })
    }

    /// Buffered audio not yet covering a whole segment, in samples.
    pub fn buffered_samples(&self) -> usize {
        self.buf.len()
    }

    /// Complete groups emitted so far.
    pub fn groups_emitted(&self) -> u64 {
        self.segments_emitted
    }

    /// Feed a frame; returns zero or more complete `[L, L, S, S, S]` groups.
    pub fn push_pcm(&mut self, frame: &PcmFrame) -> Result<Vec<AudioToken>, TokenizerError> {
        if self.flushed {
            return Err(TokenizerError::PushAfterFlush);
        }
        if frame.sample_rate != SAMPLE_RATE {
            return Err(TokenizerError::SampleRate(frame.sample_rate));
        }
        if frame.samples.is_empty() {
            return Err(TokenizerError::EmptyFrame);
        }
        if let Some(prev) = self.last_frame_ms {
            if frame.timestamp_ms < prev {
                return Err(TokenizerError::TimestampRegression {
                    at_ms: frame.timestamp_ms,
                    prev_ms: prev,
                });
            }
        }
        self.last_frame_ms = Some(frame.timestamp_ms);
        self.buf.extend_from_slice(&frame.samples);
        Ok(self.emit_ready())
    }

    /// Terminate the stream. A non-empty remainder is zero-padded to a full
    /// segment so the final partial audio still produces one group.
    pub fn flush(&mut self) -> Result<Vec<AudioToken>, TokenizerError> {
        if self.flushed {
            return Err(TokenizerError::DoubleFlush);
        }
        self.flushed = true;
        if self.buf.is_empty() {
            return Ok(Vec::new());
        }
        self.buf.resize(SAMPLES_PER_SEGMENT, 0);
        Ok(self.emit_ready())
    }

    fn emit_ready(&mut self) -> Vec<AudioToken> {
        let mut out = Vec::new();
        while self.buf.len() >= SAMPLES_PER_SEGMENT {
            let segment: Vec<i16> = self.buf.drain(..SAMPLES_PER_SEGMENT).collect();
            let mut bytes = Vec::with_capacity(SAMPLES_PER_SEGMENT * 2);
            for s in &segment {
                bytes.extend_from_slice(&s.to_le_bytes());
            }
            let seg = self.segments_emitted;
            for j in 0..GROUP_LINGUISTIC as u64 {
                let id = encode_segment(
                    &bytes,
                    LINGUISTIC_CODEBOOK,
                    self.cfg.salt_ling,
                    seg * GROUP_LINGUISTIC as u64 + j,
                );
                out.push(AudioToken::linguistic(id).expect("mod keeps id in range"));
            }
            for j in 0..GROUP_SEMANTIC as u64 {
                let id = encode_segment(
                    &bytes,
                    SEMANTIC_CODEBOOK,
                    self.cfg.salt_sem,
                    seg * GROUP_SEMANTIC as u64 + j,
                );
                out.push(AudioToken::semantic(id).expect("mod keeps id in range"));
            }
            self.segments_emitted += 1;
        }
        out
    }
}
