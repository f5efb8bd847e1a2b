//! Framed TCP gateway and CLI for the duplex speech pipeline.
//!
//! One TCP connection is one session. The client streams raw PCM in
//! `AUDIO_IN` frames; the server runs the full pipeline (VAD, tokenizer,
//! controller, backends) on the audio-driven virtual clock and streams back
//! `STATE`, `TEXT_PARTIAL`, `AUDIO_OUT`, `TOOL_CALL`, `TOOL_RESULT` and
//! `METRICS` frames. Sessions are isolated and, with mock backends,
//! byte-deterministic: the same input bytes, configuration and seed always
//! produce the same output frame sequence.

pub mod cli;
pub mod config;
pub mod frame;
pub mod http;
pub mod server;
