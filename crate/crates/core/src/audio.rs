//! PCM carrier types and small synthesis helpers.
//!
//! All audio in this crate is signed 16-bit mono at 16 kHz. Frames carry a
//! millisecond timestamp relative to the start of their stream; consumers
//! (VAD, tokenizer) require timestamps to be non-decreasing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The only sample rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 16_000;

/// Samples per millisecond at [`SAMPLE_RATE`].
pub const SAMPLES_PER_MS: usize = (SAMPLE_RATE / 1000) as usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AudioError {
    #[error("unsupported sample rate {0} Hz (expected {SAMPLE_RATE} Hz)")]
    SampleRate(u32),
    #[error("empty frame")]
    EmptyFrame,
    #[error("frame timestamp {at_ms} ms precedes previous frame at {prev_ms} ms")]
    TimestampRegression { at_ms: u64, prev_ms: u64 },
}

/// A chunk of mono PCM with its position on the stream timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcmFrame {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
    pub timestamp_ms: u64,
}

impl PcmFrame {
    pub fn new(samples: Vec<i16>, timestamp_ms: u64) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::EmptyFrame);
        }
        Ok(Self { samples, sample_rate: SAMPLE_RATE, timestamp_ms })
    }

    /// Frame duration in milliseconds; exact only when the sample count is
    /// a multiple of [`SAMPLES_PER_MS`].
    pub fn duration_ms(&self) -> u64 {
        (self.samples.len() as u64 * 1000) / self.sample_rate as u64
    }
}

/// `ms` milliseconds of a sine tone at `freq_hz`, peak amplitude
/// `amplitude` (of full scale). Used by the simulator and fixtures to
/// stand in for speech.
pub fn tone(ms: u64, freq_hz: f64, amplitude: f64) -> Vec<i16> {
    let n = ms as usize * SAMPLES_PER_MS;
    (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            (amplitude * (2.0 * std::f64::consts::PI * freq_hz * t).sin() * 32767.0) as i16
        })
        .collect()
}

/// `ms` milliseconds of digital silence.
pub fn silence(ms: u64) -> Vec<i16> {
    vec![0i16; ms as usize * SAMPLES_PER_MS]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rejects_empty() {
        assert_eq!(PcmFrame::new(vec![], 0), Err(AudioError::EmptyFrame));
    }

    #[test]
    fn tone_and_silence_lengths() {
        assert_eq!(tone(20, 440.0, 0.5).len(), 320);
        assert_eq!(silence(120).len(), 1920);
        assert_eq!(PcmFrame::new(silence(20), 0).unwrap().duration_ms(), 20);
    }
}
