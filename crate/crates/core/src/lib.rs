//! Orchestration engine for real-time duplex speech interaction.
//!
//! The pipeline is built from small, independently testable pieces:
//!
//! - [`tokens`] — the dual-codebook token model (1024-entry linguistic,
//!   4096-entry semantic), the unified 5,120-id vocabulary, and the
//!   2:3 interleaving transform.
//! - [`tokenizer`] — a streaming PCM-to-token converter backed by two
//!   fixed-duration segmenters and a deterministic mock codec.
//! - [`vad`] — energy-based voice activity detection emitting the
//!   endpointing events (speech start, pause, resume, end) that drive
//!   the controller.
//! - [`controller`] — the four-state interaction machine: speculative
//!   response generation at pauses, commit on end-of-speech, cancel on
//!   resume, barge-in handling, and streaming tool-call routing.
//! - [`context`] — text-compacted conversation history with the
//!   final-turn-audio exception and budgeted prompt snapshots.
//! - [`backends`] — deterministic seeded mocks for chat, ASR, TTS and
//!   tool execution with configurable latency models.
//! - [`session`] — the discrete-event engine that wires everything to a
//!   single audio-driven virtual clock.
//! - [`sim`] — scenario scripting, scenario generation, and measured
//!   latency / commit-rate reports.
//!
//! Everything is deterministic: given the same scenario, seed and
//! configuration, runs produce byte-identical traces.

pub mod audio;
pub mod backends;
pub mod context;
pub mod controller;
pub mod router;
pub mod session;
pub mod sim;
pub mod tokenizer;
pub mod tokens;
pub mod trace;
pub mod vad;
pub mod wav;
