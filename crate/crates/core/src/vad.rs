//! Energy-based voice activity detection.
//!
//! The detector consumes fixed 20 ms frames and classifies each by mean
//! squared amplitude against a threshold. Per utterance the emitted events
//! follow the grammar
//!
//! ```text
//! SpeechStart (PauseDetected SpeechResume)* PauseDetected EndOfSpeech
//! ```
//!
//! `SpeechStart` and `SpeechResume` are stamped at the start of the frame
//! that crossed the threshold; `PauseDetected` and `EndOfSpeech` are stamped
//! at the moment the silence run reached its threshold, so with the default
//! 200 ms / 700 ms configuration every `EndOfSpeech` at `t` is preceded by a
//! `PauseDetected` at exactly `t - 500` ms.

use crate::audio::PcmFrame;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    /// Analysis frame duration; every pushed frame must be exactly this long.
    pub frame_ms: u32,
    /// Mean-square amplitude threshold on normalized [-1, 1] samples.
    pub energy_threshold: f64,
    /// Consecutive silence needed to report a pause.
    pub pause_threshold_ms: u32,
    /// Consecutive silence needed to report end of speech.
    pub end_threshold_ms: u32,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self { frame_ms: 20, energy_threshold: 0.01, pause_threshold_ms: 200, end_threshold_ms: 700 }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<(), VadError> {
        if self.frame_ms == 0 {
            return Err(VadError::Config("frame_ms must be positive".into()));
        }
        if !(self.pause_threshold_ms > 0 && self.pause_threshold_ms < self.end_threshold_ms) {
            return Err(VadError::Config(
                "need 0 < pause_threshold_ms < end_threshold_ms".into(),
            ));
        }
        if self.pause_threshold_ms % self.frame_ms != 0 || self.end_threshold_ms % self.frame_ms != 0
        {
            return Err(VadError::Config("frame_ms must divide both thresholds".into()));
        }
        if !(self.energy_threshold.is_finite() && self.energy_threshold > 0.0) {
            return Err(VadError::Config("energy_threshold must be positive".into()));
        }
        Ok(())
    }

    /// The latency saved by speculating at a pause instead of waiting for
    /// the end-of-speech confirmation.
    pub fn pause_to_end_gap_ms(&self) -> u64 {
        (self.end_threshold_ms - self.pause_threshold_ms) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VadEventKind {
    SpeechStart,
    PauseDetected,
    SpeechResume,
    EndOfSpeech,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VadEvent {
    pub kind: VadEventKind,
    pub at_ms: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum VadError {
    #[error("invalid VAD config: {0}")]
    Config(String),
    #[error("frame duration {got_ms} ms does not match configured {want_ms} ms")]
    FrameDuration { got_ms: u64, want_ms: u64 },
    #[error("empty frame")]
    EmptyFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Speech,
    /// A pause has been reported; silence is still accumulating toward the
    /// end threshold.
    Paused,
}

/// Streaming detector state. One instance per audio stream; callers must
/// serialize pushes per stream.
#[derive(Debug, Clone)]
pub struct Vad {
    cfg: VadConfig,
    phase: Phase,
    silence_ms: u32,
}

impl Vad {
    pub fn new(cfg: VadConfig) -> Result<Self, VadError> {
        cfg.validate()?;
        Ok(Self { cfg, phase: Phase::Idle, silence_ms: 0 })
    }

    pub fn config(&self) -> &VadConfig {
        &self.cfg
    }

    /// Mean of squared normalized samples, in [0, 1].
    pub fn frame_energy(frame: &PcmFrame) -> Result<f64, VadError> {
        if frame.samples.is_empty() {
            return Err(VadError::EmptyFrame);
        }
        let sum: f64 = frame
            .samples
            .iter()
            .map(|&s| {
                let x = s as f64 / 32768.0;
                x * x
            })
            .sum();
        Ok(sum / frame.samples.len() as f64)
    }

    pub fn push_frame(&mut self, frame: &PcmFrame) -> Result<Vec<VadEvent>, VadError> {
        let want = self.cfg.frame_ms as u64;
        let got = frame.duration_ms();
        if got != want || frame.samples.len() % crate::audio::SAMPLES_PER_MS != 0 {
            return Err(VadError::FrameDuration { got_ms: got, want_ms: want });
        }
        let energy = Self::frame_energy(frame)?;
        let mut events = Vec::new();
        let frame_end = frame.timestamp_ms + want;

        if energy >= self.cfg.energy_threshold {
            match self.phase {
                Phase::Idle => {
                    events.push(VadEvent { kind: VadEventKind::SpeechStart, at_ms: frame.timestamp_ms });
                }
                Phase::Speech => {}
                Phase::Paused => {
                    events.push(VadEvent { kind: VadEventKind::SpeechResume, at_ms: frame.timestamp_ms });
                }
            }
            self.phase = Phase::Speech;
            self.silence_ms = 0;
        } else if self.phase != Phase::Idle {
            self.silence_ms += self.cfg.frame_ms;
            if self.phase == Phase::Speech && self.silence_ms >= self.cfg.pause_threshold_ms {
                events.push(VadEvent { kind: VadEventKind::PauseDetected, at_ms: frame_end });
                self.phase = Phase::Paused;
            }
            if self.silence_ms >= self.cfg.end_threshold_ms {
                events.push(VadEvent { kind: VadEventKind::EndOfSpeech, at_ms: frame_end });
                self.phase = Phase::Idle;
                self.silence_ms = 0;
            }
        }
        Ok(events)
    }
}
