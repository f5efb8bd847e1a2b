//! The framed TCP service.
//!
//! One connection is one session with its own pipeline instance; the accept
//! loop spawns a thread per connection and sessions never share state.
//! Inbound frames are `AUDIO_IN` (raw little-endian s16 mono PCM) and
//! `CONTROL` (`{"op":"end"}` for a clean close). Every other inbound kind,
//! any frame after `end`, and any malformed frame produces an error
//! `CONTROL` frame and closes the connection.
//!
//! Outbound frames are flushed after each inbound frame is processed, so
//! the output sequence depends only on the input bytes, configuration and
//! seed — never on TCP fragmentation. A session buffers at most
//! [`OUTBOUND_WINDOW`] outbound frames per burst; beyond that the oldest
//! `AUDIO_OUT` frames are dropped and a `METRICS` frame records the count.

use crate::config::{BackendMode, GatewayConfig};
use crate::frame::{encode_frame, Frame, FrameDecoder, FrameKind};
use crate::http::{HttpBackendClient, TtsResult};
use serde_json::json;
use std::collections::{BTreeSet, VecDeque};
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::Duration;
use step_orch_core::controller::{ControllerEvent, SpecId};
use step_orch_core::session::{Session, SessionOutput};

/// Maximum buffered outbound frames per session burst.
pub const OUTBOUND_WINDOW: usize = 64;

/// A running service; dropping the handle leaves the server running until
/// `shutdown` is called.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stop accepting and join the accept loop. Active sessions finish on
    /// their own threads.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr); // unblock accept
        if let Some(join) = self.join.take() {
            let _ = join.join();
        }
    }
}

/// Bind and serve. `bind` is an address like `0.0.0.0:7070` or
/// `127.0.0.1:0` (port 0 picks a free port, reported by the handle).
pub fn serve(bind: &str, config: GatewayConfig) -> anyhow::Result<ServerHandle> {
    config.validate()?;
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stop_accept = stop.clone();
    let join = std::thread::spawn(move || {
        for stream in listener.incoming() {
            if stop_accept.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let config = config.clone();
            std::thread::spawn(move || {
                let _ = run_session(stream, config);
            });
        }
    });
    Ok(ServerHandle { addr, stop, join: Some(join) })
}

/// Outbound frame queue with the drop-oldest-audio overflow policy.
struct Outbound {
    queue: VecDeque<Frame>,
    dropped_total: u64,
}

impl Outbound {
    fn new() -> Self {
        Self { queue: VecDeque::new(), dropped_total: 0 }
    }

    fn push(&mut self, frame: Frame) {
        self.queue.push_back(frame);
    }

    fn flush(&mut self, writer: &mut impl Write) -> std::io::Result<()> {
        let mut dropped = 0u64;
        while self.queue.len() > OUTBOUND_WINDOW {
            match self.queue.iter().position(|f| f.kind == FrameKind::AudioOut) {
                Some(pos) => {
                    self.queue.remove(pos);
                    dropped += 1;
                }
                None => break,
            }
        }
        if dropped > 0 {
            self.dropped_total += dropped;
            let payload = json!({
                "dropped_audio_frames": dropped,
                "dropped_audio_frames_total": self.dropped_total,
            });
            self.queue.push_back(Frame::text(FrameKind::Metrics, &payload.to_string()));
        }
        for frame in self.queue.drain(..) {
            let bytes = encode_frame(frame.kind, &frame.payload)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
            writer.write_all(&bytes)?;
        }
        writer.flush()
    }
}

/// Deterministic placeholder waveform for mock AUDIO_OUT payloads: a quiet
/// 440 Hz sine with phase continuous across chunks.
struct AudioSynth {
    phase: f64,
}

impl AudioSynth {
    fn new() -> Self {
        Self { phase: 0.0 }
    }

    fn chunk(&mut self, duration_ms: u64) -> Vec<u8> {
        let samples = duration_ms as usize * 16;
        let step = 2.0 * std::f64::consts::PI * 440.0 / 16_000.0;
        let mut out = Vec::with_capacity(samples * 2);
        for _ in 0..samples {
            let v = (0.1 * self.phase.sin() * 32767.0) as i16;
            out.extend_from_slice(&v.to_le_bytes());
            self.phase += step;
        }
        self.phase %= 2.0 * std::f64::consts::PI;
        out
    }
}

enum Completion {
    Chat { spec_id: SpecId, result: Result<String, String> },
    Asr { turn_id: u64, result: Result<String, String> },
    Tts { result: Result<TtsResult, String> },
    Tool { call_id: u64, payload: String },
}

/// Dispatches backend work to HTTP services on worker threads and feeds
/// completions back into the session as events.
struct HttpDriver {
    client: Arc<HttpBackendClient>,
    tx: mpsc::Sender<Completion>,
    rx: mpsc::Receiver<Completion>,
    inflight: usize,
    cancelled: BTreeSet<SpecId>,
}

impl HttpDriver {
    fn new(client: HttpBackendClient) -> Self {
        let (tx, rx) = mpsc::channel();
        Self { client: Arc::new(client), tx, rx, inflight: 0, cancelled: BTreeSet::new() }
    }

    /// Start the HTTP work an output demands, if any.
    fn dispatch(&mut self, output: &SessionOutput) {
        match output {
            SessionOutput::SpeculationRequested { spec_id, snapshot, .. } => {
                let client = self.client.clone();
                let tx = self.tx.clone();
                let spec_id = *spec_id;
                let snapshot = snapshot.clone();
                self.inflight += 1;
                std::thread::spawn(move || {
                    let result = client.chat(&snapshot).map_err(|e| e.to_string());
                    let _ = tx.send(Completion::Chat { spec_id, result });
                });
            }
            SessionOutput::SpeculationCancelled { spec_id, .. } => {
                self.cancelled.insert(*spec_id);
            }
            SessionOutput::TranscriptRequested { turn_id, token_ids, .. } => {
                let client = self.client.clone();
                let tx = self.tx.clone();
                let turn_id = *turn_id;
                let token_ids = token_ids.clone();
                self.inflight += 1;
                std::thread::spawn(move || {
                    let result = client.asr(&token_ids).map_err(|e| e.to_string());
                    let _ = tx.send(Completion::Asr { turn_id, result });
                });
            }
            SessionOutput::SynthesisRequested { text, .. } => {
                let client = self.client.clone();
                let tx = self.tx.clone();
                let text = text.clone();
                self.inflight += 1;
                std::thread::spawn(move || {
                    let result = client.tts(&text).map_err(|e| e.to_string());
                    let _ = tx.send(Completion::Tts { result });
                });
            }
            SessionOutput::ToolDispatched { directive, .. } => {
                let client = self.client.clone();
                let tx = self.tx.clone();
                let directive = directive.clone();
                self.inflight += 1;
                std::thread::spawn(move || {
                    let payload = client
                        .tool(&directive)
                        .unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string());
                    let _ = tx.send(Completion::Tool { call_id: directive.call_id, payload });
                });
            }
            _ => {}
        }
    }

    fn apply_completion(
        &mut self,
        completion: Completion,
        session: &mut Session,
        out: &mut Outbound,
    ) -> Result<Vec<SessionOutput>, step_orch_core::session::SessionError> {
        let mut outputs = Vec::new();
        match completion {
            Completion::Chat { spec_id, result } => {
                if self.cancelled.remove(&spec_id) {
                    return Ok(outputs);
                }
                match result {
                    Ok(text) => {
                        outputs.extend(
                            session.inject_event(ControllerEvent::BackendFirstToken { spec_id })?,
                        );
                        outputs.extend(session.inject_event(ControllerEvent::BackendTextChunk {
                            spec_id,
                            text,
                        })?);
                        outputs.extend(session.inject_event(ControllerEvent::BackendDone { spec_id })?);
                    }
                    Err(message) => {
                        outputs.extend(
                            session
                                .inject_event(ControllerEvent::BackendFailed { spec_id, message })?,
                        );
                    }
                }
            }
            Completion::Asr { turn_id, result } => match result {
                Ok(text) => {
                    outputs.extend(session.inject_event(ControllerEvent::AsrTranscript { turn_id, text })?);
                }
                Err(e) => {
                    out.push(Frame::text(
                        FrameKind::Metrics,
                        &json!({ "error": format!("asr: {e}") }).to_string(),
                    ));
                }
            },
            Completion::Tts { result } => match result {
                Ok(tts) => {
                    out.push(Frame::new(FrameKind::AudioOut, tts.pcm));
                    session.inject_event_after(tts.duration_ms, ControllerEvent::PlaybackFinished);
                }
                Err(e) => {
                    out.push(Frame::text(
                        FrameKind::Metrics,
                        &json!({ "error": format!("tts: {e}") }).to_string(),
                    ));
                    outputs.extend(session.inject_event(ControllerEvent::PlaybackFinished)?);
                }
            },
            Completion::Tool { call_id, payload } => {
                outputs.extend(session.inject_event(ControllerEvent::ToolResult { call_id, payload })?);
            }
        }
        self.inflight -= 1;
        Ok(outputs)
    }
}

fn run_session(stream: TcpStream, config: GatewayConfig) -> anyhow::Result<()> {
    stream.set_read_timeout(Some(Duration::from_millis(20)))?;
    stream.set_nodelay(true).ok();
    let mut reader = stream.try_clone()?;
    let mut writer = stream;

    let mut session = Session::new(config.session_config(), config.scripted_content())
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut http = match config.backends.mode {
        BackendMode::Http => Some(HttpDriver::new(HttpBackendClient::new(&config.backends.http)?)),
        BackendMode::Mock => None,
    };
    let mut out = Outbound::new();
    let mut synth = AudioSynth::new();
    let mut decoder = FrameDecoder::new();

    out.push(Frame::text(FrameKind::State, session.state().as_str()));
    out.flush(&mut writer)?;

    let close_with_error = |out: &mut Outbound, writer: &mut TcpStream, detail: &str| {
        out.push(Frame::text(FrameKind::Control, &json!({ "error": detail }).to_string()));
        let _ = out.flush(writer);
    };

    let mut buf = [0u8; 8192];
    loop {
        // Deliver any backend completions that have arrived.
        if http.is_some() {
            let mut pending = Vec::new();
            while let Ok(c) = http.as_mut().unwrap().rx.try_recv() {
                pending.push(c);
            }
            for completion in pending {
                let result =
                    http.as_mut().unwrap().apply_completion(completion, &mut session, &mut out);
                let outputs = match result {
                    Ok(o) => o,
                    Err(e) => {
                        close_with_error(&mut out, &mut writer, &e.to_string());
                        return Ok(());
                    }
                };
                emit_outputs(&outputs, &mut out, &mut synth, http.as_mut());
            }
            out.flush(&mut writer)?;
        }

        let n = match reader.read(&mut buf) {
            Ok(0) => return Ok(()), // client hung up
            Ok(n) => n,
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                continue;
            }
            Err(e) => return Err(e.into()),
        };

        let frames = match decoder.push(&buf[..n]) {
            Ok(f) => f,
            Err(e) => {
                close_with_error(&mut out, &mut writer, &e.to_string());
                return Ok(());
            }
        };

        let frame_count = frames.len();
        for (frame_index, frame) in frames.into_iter().enumerate() {
            match frame.kind {
                FrameKind::AudioIn => {
                    if frame.payload.len() % 2 != 0 {
                        close_with_error(&mut out, &mut writer, "odd AUDIO_IN byte count");
                        return Ok(());
                    }
                    let samples: Vec<i16> = frame
                        .payload
                        .chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]))
                        .collect();
                    match session.push_audio(&samples) {
                        Ok(outputs) => emit_outputs(&outputs, &mut out, &mut synth, http.as_mut()),
                        Err(e) => {
                            close_with_error(&mut out, &mut writer, &e.to_string());
                            return Ok(());
                        }
                    }
                }
                FrameKind::Control => {
                    let op = serde_json::from_slice::<serde_json::Value>(&frame.payload)
                        .ok()
                        .and_then(|v| v.get("op").and_then(|o| o.as_str()).map(String::from));
                    match op.as_deref() {
                        Some("end") => {
                            // Let outstanding backend work land before the
                            // final drain.
                            if http.is_some() {
                                let deadline = std::time::Instant::now() + Duration::from_secs(30);
                                while http.as_ref().unwrap().inflight > 0
                                    && std::time::Instant::now() < deadline
                                {
                                    let received = http
                                        .as_mut()
                                        .unwrap()
                                        .rx
                                        .recv_timeout(Duration::from_millis(100));
                                    match received {
                                        Ok(completion) => {
                                            let outputs = http
                                                .as_mut()
                                                .unwrap()
                                                .apply_completion(completion, &mut session, &mut out)
                                                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
                                            emit_outputs(&outputs, &mut out, &mut synth, http.as_mut());
                                        }
                                        Err(mpsc::RecvTimeoutError::Timeout) => continue,
                                        Err(mpsc::RecvTimeoutError::Disconnected) => break,
                                    }
                                }
                            }
                            match session.end_input() {
                                Ok(outputs) => {
                                    emit_outputs(&outputs, &mut out, &mut synth, http.as_mut())
                                }
                                Err(e) => {
                                    close_with_error(&mut out, &mut writer, &e.to_string());
                                    return Ok(());
                                }
                            }
                            let summary = json!({
                                "session": "ended",
                                "turns": session.metrics().len(),
                                "dropped_audio_frames": out.dropped_total,
                            });
                            out.push(Frame::text(FrameKind::Metrics, &summary.to_string()));
                            // Frames already queued behind the end marker
                            // violate the lifecycle.
                            if frame_index + 1 < frame_count || decoder.buffered() > 0 {
                                close_with_error(&mut out, &mut writer, "frame after CONTROL end");
                                return Ok(());
                            }
                            out.flush(&mut writer)?;
                            return Ok(());
                        }
                        _ => {
                            out.push(Frame::text(
                                FrameKind::Metrics,
                                &json!({ "warning": "unknown control op" }).to_string(),
                            ));
                        }
                    }
                }
                other => {
                    close_with_error(
                        &mut out,
                        &mut writer,
                        &format!("unexpected inbound frame type 0x{:02X}", other.code()),
                    );
                    return Ok(());
                }
            }
            out.flush(&mut writer)?;
        }
    }
}

/// Convert session outputs to outbound frames; in HTTP mode also dispatch
/// the backend requests they represent.
fn emit_outputs(
    outputs: &[SessionOutput],
    out: &mut Outbound,
    synth: &mut AudioSynth,
    mut http: Option<&mut HttpDriver>,
) {
    for output in outputs {
        if let Some(driver) = http.as_deref_mut() {
            driver.dispatch(output);
        }
        match output {
            SessionOutput::StateChange { state, .. } => {
                out.push(Frame::text(FrameKind::State, state.as_str()));
            }
            SessionOutput::CommittedText { spec_id, text, .. } => {
                let payload = json!({ "spec_id": spec_id, "text": text });
                out.push(Frame::text(FrameKind::TextPartial, &payload.to_string()));
            }
            SessionOutput::AudioChunk { duration_ms, .. } => {
                out.push(Frame::new(FrameKind::AudioOut, synth.chunk(*duration_ms)));
            }
            SessionOutput::PlaybackAborted { .. } => {
                out.push(Frame::text(
                    FrameKind::Control,
                    &json!({ "op": "abort_playback" }).to_string(),
                ));
            }
            SessionOutput::ToolDispatched { directive, .. } => {
                let payload = json!({
                    "call_id": directive.call_id,
                    "name": directive.name,
                    "args": directive.args,
                });
                out.push(Frame::text(FrameKind::ToolCall, &payload.to_string()));
            }
            SessionOutput::ToolResolved { call_id, payload, .. } => {
                let body = json!({ "call_id": call_id, "payload": payload });
                out.push(Frame::text(FrameKind::ToolResult, &body.to_string()));
            }
            SessionOutput::Warning { message, .. } => {
                out.push(Frame::text(FrameKind::Metrics, &json!({ "warning": message }).to_string()));
            }
            // HTTP-mode request outputs produce no frames themselves.
            SessionOutput::SpeculationRequested { .. }
            | SessionOutput::SpeculationCancelled { .. }
            | SessionOutput::TranscriptRequested { .. }
            | SessionOutput::SynthesisRequested { .. } => {}
        }
    }
}
