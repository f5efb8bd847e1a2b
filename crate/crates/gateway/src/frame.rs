//! Length-prefixed wire framing.
//!
//! ```text
//! +----------------+------+------------------+
//! | length (u32 BE)| type | payload ...      |
//! +----------------+------+------------------+
//! ```
//!
//! `length` counts payload bytes only; the whole frame is `length + 5`
//! bytes. Payloads are capped at 1 MiB. Unknown type codes decode fine but
//! are flagged so sessions can reject them explicitly. Non-audio payloads
//! are UTF-8 text (JSON for everything except STATE, which carries the bare
//! state name).

use thiserror::Error;

/// Hard cap on payload size.
pub const MAX_FRAME_PAYLOAD: usize = 1 << 20;
/// Header bytes preceding the payload.
pub const FRAME_HEADER_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    AudioIn,
    TextPartial,
    AudioOut,
    State,
    ToolCall,
    ToolResult,
    Control,
    Metrics,
    /// Decoded but not understood; flagged for the session to reject.
    Unknown(u8),
}

impl FrameKind {
    pub fn code(self) -> u8 {
        match self {
            FrameKind::AudioIn => 0x01,
            FrameKind::TextPartial => 0x02,
            FrameKind::AudioOut => 0x03,
            FrameKind::State => 0x04,
            FrameKind::ToolCall => 0x05,
            FrameKind::ToolResult => 0x06,
            FrameKind::Control => 0x07,
            FrameKind::Metrics => 0x08,
            FrameKind::Unknown(code) => code,
        }
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            0x01 => FrameKind::AudioIn,
            0x02 => FrameKind::TextPartial,
            0x03 => FrameKind::AudioOut,
            0x04 => FrameKind::State,
            0x05 => FrameKind::ToolCall,
            0x06 => FrameKind::ToolResult,
            0x07 => FrameKind::Control,
            0x08 => FrameKind::Metrics,
            other => FrameKind::Unknown(other),
        }
    }

    pub fn is_unknown(self) -> bool {
        matches!(self, FrameKind::Unknown(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameKind, payload: Vec<u8>) -> Self {
        Self { kind, payload }
    }

    pub fn text(kind: FrameKind, payload: &str) -> Self {
        Self { kind, payload: payload.as_bytes().to_vec() }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("payload of {len} bytes exceeds the {MAX_FRAME_PAYLOAD}-byte cap")]
    Oversize { len: usize },
}

/// Encode a frame. Fails only on oversize payloads.
pub fn encode_frame(kind: FrameKind, payload: &[u8]) -> Result<Vec<u8>, FrameError> {
    if payload.len() > MAX_FRAME_PAYLOAD {
        return Err(FrameError::Oversize { len: payload.len() });
    }
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.push(kind.code());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Outcome of decoding from a buffer: either a complete frame and the byte
/// count consumed, or a need-more-bytes signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    NeedMoreBytes,
    Frame { frame: Frame, consumed: usize },
}

/// Decode one frame from the head of `buf`.
pub fn decode_frame(buf: &[u8]) -> Result<DecodeOutcome, FrameError> {
    if buf.len() < FRAME_HEADER_LEN {
        return Ok(DecodeOutcome::NeedMoreBytes);
    }
    let len = u32::from_be_bytes(buf[0..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME_PAYLOAD {
        return Err(FrameError::Oversize { len });
    }
    if buf.len() < FRAME_HEADER_LEN + len {
        return Ok(DecodeOutcome::NeedMoreBytes);
    }
    let kind = FrameKind::from_code(buf[4]);
    let payload = buf[FRAME_HEADER_LEN..FRAME_HEADER_LEN + len].to_vec();
    Ok(DecodeOutcome::Frame { frame: Frame { kind, payload }, consumed: FRAME_HEADER_LEN + len })
}

/// Incremental decoder over a byte stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append bytes and pop every complete frame.
    pub fn push(&mut self, bytes: &[u8]) -> Result<Vec<Frame>, FrameError> {
        self.buf.extend_from_slice(bytes);
        let mut frames = Vec::new();
        loop {
            match decode_frame(&self.buf)? {
                DecodeOutcome::NeedMoreBytes => break,
                DecodeOutcome::Frame { frame, consumed } => {
                    self.buf.drain(..consumed);
                    frames.push(frame);
                }
            }
        }
        Ok(frames)
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}
