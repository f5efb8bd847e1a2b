//! The discrete-event session engine.
//!
//! A session owns one pipeline instance — VAD, streaming tokenizer,
//! controller, and backend schedules — driven by a single virtual clock.
//! Time is the audio timeline: every pushed PCM frame advances the clock by
//! its duration, and every queued event with a due time inside the advanced
//! window fires in (time, insertion) order. Nothing sleeps and nothing
//! reads a wall clock, so a session is a pure function of its input bytes,
//! configuration and seed; the same controller code runs under live audio
//! in the gateway and scripted audio in the simulator.
//!
//! With mock backends the engine schedules generation, transcription,
//! synthesis and tool completions itself. With external backends
//! (`external_backends = true`) it instead surfaces request outputs and the
//! caller injects completion events as they arrive.

use crate::audio::{PcmFrame, SAMPLES_PER_MS};
use crate::backends::{
    AudioChunkPlan, ChatUnit, LatencyModel, MockAsrBackend, MockChatBackend, MockToolExecutor,
    ScheduledStream, StreamItem, TtsScheduler,
};
use crate::context::{estimate_tokens, PromptSnapshot, Role, TurnId};
use crate::controller::{
    Action, Controller, ControllerConfig, ControllerError, ControllerEvent, ControllerState,
    SpecId, ToolCallDirective,
};
use crate::tokenizer::{SegmenterConfig, StreamTokenizer, TokenizerError, SEGMENT_MS};
use crate::tokens::AudioToken;
use crate::trace::TraceLog;
use crate::vad::{Vad, VadConfig, VadError, VadEventKind};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use thiserror::Error;

/// Everything needed to assemble one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub vad: VadConfig,
    pub segmenter: SegmenterConfig,
    pub controller: ControllerConfig,
    pub chat_latency: LatencyModel,
    pub asr_latency: LatencyModel,
    pub tts_latency: LatencyModel,
    pub tool_timeout_ms: Option<u64>,
    pub seed: u64,
    /// When true, backend work is not mocked: the session emits request
    /// outputs and expects completions via `inject_event`.
    pub external_backends: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            vad: VadConfig::default(),
            segmenter: SegmenterConfig::default(),
            controller: ControllerConfig::default(),
            chat_latency: LatencyModel::fixed(500, 0),
            asr_latency: LatencyModel::fixed(300, 0),
            tts_latency: LatencyModel::fixed(200, 0),
            tool_timeout_ms: None,
            seed: 0,
            external_backends: false,
        }
    }
}

/// Scripted mock-backend content for a session.
#[derive(Debug, Clone, Default)]
pub struct ScriptedContent {
    /// Chat response per turn (cycled when shorter than the conversation).
    pub responses: Vec<String>,
    /// ASR transcript per turn (shaped to the 1:14 ratio on delivery).
    pub transcripts: Vec<String>,
    /// Tool name → (latency ms, payload).
    pub tools: BTreeMap<String, (u64, String)>,
}

/// Observable session output, in emission order.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionOutput {
    StateChange { at_ms: u64, state: ControllerState },
    /// A committed response text chunk (already routed past tool markers).
    CommittedText { at_ms: u64, spec_id: SpecId, text: String },
    AudioChunk { at_ms: u64, index: u64, duration_ms: u64 },
    PlaybackAborted { at_ms: u64 },
    ToolDispatched { at_ms: u64, directive: ToolCallDirective },
    ToolResolved { at_ms: u64, call_id: u64, payload: String },
    Warning { at_ms: u64, message: String },
    /// External-backend mode: start a chat generation.
    SpeculationRequested { at_ms: u64, spec_id: SpecId, snapshot: PromptSnapshot },
    /// External-backend mode: abandon a chat generation.
    SpeculationCancelled { at_ms: u64, spec_id: SpecId },
    /// External-backend mode: transcribe these token ids.
    TranscriptRequested { at_ms: u64, turn_id: TurnId, token_ids: Vec<u32> },
    /// External-backend mode: synthesize the full committed text.
    SynthesisRequested { at_ms: u64, spec_id: SpecId, text: String },
}

/// Per-reply measurements, one row per completed user turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnMetrics {
    pub turn_id: TurnId,
    pub end_of_speech_ms: u64,
    pub committed_spec: Option<SpecId>,
    pub first_audio_ms: Option<u64>,
    pub playback_finished_ms: Option<u64>,
    pub audio_tokens: usize,
    pub transcript_estimate: Option<usize>,
    pub speculations_issued: u32,
}

impl TurnMetrics {
    /// End-of-speech to first synthesized audio availability.
    pub fn response_latency_ms(&self) -> Option<u64> {
        self.first_audio_ms.map(|a| a.saturating_sub(self.end_of_speech_ms))
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session input already ended")]
    Ended,
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Vad(#[from] VadError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Context(#[from] crate::context::ContextError),
}

#[derive(Debug)]
enum Pending {
    Tokens(Vec<AudioToken>),
    Controller(ControllerEvent),
    ChatWake { spec_id: SpecId },
    TtsChunk { epoch: u64, plan: AudioChunkPlan },
    PlaybackFinished { epoch: u64 },
}

#[derive(Debug)]
struct QueueEntry {
    due: u64,
    seq: u64,
    pending: Pending,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.due == other.due && self.seq == other.seq
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.due, self.seq).cmp(&(other.due, other.seq))
    }
}

#[derive(Debug)]
struct TtsState {
    spec_id: SpecId,
    sched: TtsScheduler,
    epoch: u64,
    chunks_scheduled: u64,
    playback_end_ms: u64,
}

pub struct Session {
    cfg: SessionConfig,
    vad: Vad,
    tokenizer: StreamTokenizer,
    controller: Controller,
    chat: MockChatBackend,
    asr: MockAsrBackend,
    tools: MockToolExecutor,

    queue: BinaryHeap<Reverse<QueueEntry>>,
    seq: u64,
    audio_ms: u64,
    now_ms: u64,
    frame_buf: Vec<i16>,
    groups_seen: u64,

    chat_streams: BTreeMap<SpecId, ScheduledStream<ChatUnit>>,
    tts: Option<TtsState>,
    response_epoch: u64,
    forwarded_text: String,
    turn_index: usize,
    prev_state: ControllerState,

    outputs: Vec<SessionOutput>,
    trace: TraceLog,
    metrics: Vec<TurnMetrics>,
    current_reply: Option<usize>,
    speculations_this_turn: u32,
    ended: bool,
}

impl Session {
    pub fn new(cfg: SessionConfig, content: ScriptedContent) -> Result<Self, SessionError> {
        let vad = Vad::new(cfg.vad.clone())?;
        let tokenizer = StreamTokenizer::new(cfg.segmenter.clone())?;
        let controller = Controller::new(cfg.controller.clone());
        let chat = MockChatBackend::new(cfg.chat_latency, content.responses);
        let asr = MockAsrBackend::new(cfg.asr_latency, content.transcripts);
        let tools = MockToolExecutor::new(content.tools, cfg.tool_timeout_ms);
        Ok(Self {
            cfg,
            vad,
            tokenizer,
            controller,
            chat,
            asr,
            tools,
            queue: BinaryHeap::new(),
            seq: 0,
            audio_ms: 0,
            now_ms: 0,
            frame_buf: Vec::new(),
            groups_seen: 0,
            chat_streams: BTreeMap::new(),
            tts: None,
            response_epoch: 0,
            forwarded_text: String::new(),
            turn_index: 0,
            prev_state: ControllerState::Silence,
            outputs: Vec::new(),
            trace: TraceLog::new(),
            metrics: Vec::new(),
            current_reply: None,
            speculations_this_turn: 0,
            ended: false,
        })
    }

    pub fn state(&self) -> ControllerState {
        self.controller.state()
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    /// Current virtual time: audio received or the last processed event,
    /// whichever is later.
    pub fn now_ms(&self) -> u64 {
        self.now_ms.max(self.audio_ms)
    }

    pub fn trace(&self) -> &TraceLog {
        &self.trace
    }

    pub fn metrics(&self) -> &[TurnMetrics] {
        &self.metrics
    }

    /// True once the event queue has no work left.
    pub fn quiescent(&self) -> bool {
        self.queue.is_empty()
    }

    fn schedule(&mut self, due: u64, pending: Pending) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(QueueEntry { due, seq, pending }));
    }

    /// Feed PCM; advances the clock by the audio duration and returns the
    /// outputs produced inside that window. Sample count must stay on the
    /// millisecond grid (multiples of 16 samples).
    pub fn push_audio(&mut self, samples: &[i16]) -> Result<Vec<SessionOutput>, SessionError> {
        if self.ended {
            return Err(SessionError::Ended);
        }
        self.frame_buf.extend_from_slice(samples);
        let frame_len = self.cfg.vad.frame_ms as usize * SAMPLES_PER_MS;
        while self.frame_buf.len() >= frame_len {
            let frame_samples: Vec<i16> = self.frame_buf.drain(..frame_len).collect();
            let frame = PcmFrame::new(frame_samples, self.audio_ms).expect("frame is non-empty");

            let groups = self.tokenizer.push_pcm(&frame)?;
            for group in groups.chunks(crate::tokens::GROUP_LEN) {
                self.groups_seen += 1;
                let at = self.groups_seen * SEGMENT_MS as u64;
                self.schedule(at, Pending::Tokens(group.to_vec()));
            }

            let events = self.vad.push_frame(&frame)?;
            for ev in events {
                let controller_event = match ev.kind {
                    VadEventKind::SpeechStart => ControllerEvent::VadSpeechStart,
                    VadEventKind::PauseDetected => ControllerEvent::VadPauseDetected,
                    VadEventKind::SpeechResume => ControllerEvent::VadSpeechResume,
                    VadEventKind::EndOfSpeech => ControllerEvent::VadEndOfSpeech,
                };
                self.schedule(ev.at_ms, Pending::Controller(controller_event));
            }

            self.audio_ms += self.cfg.vad.frame_ms as u64;
            self.process_until(self.audio_ms)?;
        }
        Ok(std::mem::take(&mut self.outputs))
    }

    /// End of input: flush the tokenizer's buffered remainder and drain the
    /// queue to quiescence (the clock jumps to each remaining due time).
    pub fn end_input(&mut self) -> Result<Vec<SessionOutput>, SessionError> {
        if self.ended {
            return Err(SessionError::Ended);
        }
        self.ended = true;
        let tail = self.tokenizer.flush()?;
        if !tail.is_empty() {
            let at = self.audio_ms.max(self.now_ms);
            self.schedule(at, Pending::Tokens(tail));
        }
        self.process_until(u64::MAX)?;
        Ok(std::mem::take(&mut self.outputs))
    }

    /// Deliver an externally produced completion at the current time.
    pub fn inject_event(&mut self, event: ControllerEvent) -> Result<Vec<SessionOutput>, SessionError> {
        let at = self.now_ms();
        self.schedule(at, Pending::Controller(event));
        self.process_until(at)?;
        Ok(std::mem::take(&mut self.outputs))
    }

    /// Schedule an externally produced event `delay_ms` ahead of now.
    pub fn inject_event_after(&mut self, delay_ms: u64, event: ControllerEvent) {
        let at = self.now_ms() + delay_ms;
        self.schedule(at, Pending::Controller(event));
    }

    fn process_until(&mut self, target_ms: u64) -> Result<(), SessionError> {
        while let Some(Reverse(entry)) = self.queue.peek() {
            if entry.due > target_ms {
                break;
            }
            let Reverse(entry) = self.queue.pop().unwrap();
            self.now_ms = self.now_ms.max(entry.due);
            match entry.pending {
                Pending::Tokens(tokens) => {
                    self.controller.push_user_audio(&tokens)?;
                }
                Pending::Controller(event) => {
                    self.deliver_event(entry.due, event)?;
                }
                Pending::ChatWake { spec_id } => {
                    self.wake_chat(spec_id, entry.due)?;
                }
                Pending::TtsChunk { epoch, plan } => {
                    if epoch == self.response_epoch {
                        self.deliver_audio_chunk(plan);
                    }
                }
                Pending::PlaybackFinished { epoch } => {
                    if epoch == self.response_epoch {
                        self.deliver_event(entry.due, ControllerEvent::PlaybackFinished)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn wake_chat(&mut self, spec_id: SpecId, due: u64) -> Result<(), SessionError> {
        let Some(stream) = self.chat_streams.get_mut(&spec_id) else { return Ok(()) };
        let units = stream.poll_until(due);
        let terminated = stream.is_terminated();
        for unit in units {
            match unit.item {
                StreamItem::Unit(ChatUnit::FirstToken) => {
                    self.deliver_event(unit.at_ms, ControllerEvent::BackendFirstToken { spec_id })?;
                }
                StreamItem::Unit(ChatUnit::Text(text)) => {
                    self.deliver_event(
                        unit.at_ms,
                        ControllerEvent::BackendTextChunk { spec_id, text },
                    )?;
                }
                StreamItem::Done => {
                    self.deliver_event(unit.at_ms, ControllerEvent::BackendDone { spec_id })?;
                }
                StreamItem::Cancelled => {}
            }
        }
        if terminated {
            self.chat_streams.remove(&spec_id);
        }
        Ok(())
    }

    fn deliver_audio_chunk(&mut self, plan: AudioChunkPlan) {
        self.outputs.push(SessionOutput::AudioChunk {
            at_ms: plan.avail_ms,
            index: plan.index,
            duration_ms: plan.duration_ms,
        });
        if let Some(idx) = self.current_reply {
            let row = &mut self.metrics[idx];
            if row.first_audio_ms.is_none() {
                row.first_audio_ms = Some(plan.avail_ms);
            }
        }
    }

    fn deliver_event(&mut self, at: u64, event: ControllerEvent) -> Result<(), SessionError> {
        if let ControllerEvent::VadEndOfSpeech = event {
            self.metrics.push(TurnMetrics {
                turn_id: 0,
                end_of_speech_ms: at,
                committed_spec: None,
                first_audio_ms: None,
                playback_finished_ms: None,
                audio_tokens: 0,
                transcript_estimate: None,
                speculations_issued: 0,
            });
            self.current_reply = Some(self.metrics.len() - 1);
        }
        if let ControllerEvent::AsrTranscript { turn_id, text } = &event {
            if let Some(row) = self.metrics.iter_mut().find(|m| m.turn_id == *turn_id) {
                row.transcript_estimate = Some(estimate_tokens(text));
            }
        }

        let actions = self.controller.handle_event(at, event.clone())?;
        let state = self.controller.state();
        self.trace.record_event(at, &event, state);
        self.trace.record_actions(at, &actions);
        if state != self.prev_state {
            self.prev_state = state;
            self.outputs.push(SessionOutput::StateChange { at_ms: at, state });
        }
        if let ControllerEvent::PlaybackFinished = event {
            if let Some(idx) = self.current_reply.take() {
                let row = &mut self.metrics[idx];
                row.playback_finished_ms = Some(at);
                row.speculations_issued = self.speculations_this_turn;
                self.speculations_this_turn = 0;
            }
        }
        if let ControllerEvent::ToolResult { call_id, payload } = &event {
            self.outputs.push(SessionOutput::ToolResolved {
                at_ms: at,
                call_id: *call_id,
                payload: payload.clone(),
            });
        }
        for action in actions {
            self.apply_action(at, action)?;
        }
        Ok(())
    }

    fn apply_action(&mut self, at: u64, action: Action) -> Result<(), SessionError> {
        match action {
            Action::StartSpeculation { spec_id, snapshot } => {
                self.speculations_this_turn += 1;
                if self.cfg.external_backends {
                    self.outputs.push(SessionOutput::SpeculationRequested { at_ms: at, spec_id, snapshot });
                } else {
                    let stream = self.chat.generate(self.turn_index, at);
                    for wake in stream.wake_times() {
                        self.schedule(wake, Pending::ChatWake { spec_id });
                    }
                    self.chat_streams.insert(spec_id, stream);
                }
            }
            Action::CancelSpeculation { spec_id } => {
                if self.cfg.external_backends {
                    self.outputs.push(SessionOutput::SpeculationCancelled { at_ms: at, spec_id });
                } else if let Some(stream) = self.chat_streams.get_mut(&spec_id) {
                    stream.cancel(at);
                }
            }
            Action::CommitSpeculation { spec_id } => {
                if let Some(idx) = self.current_reply {
                    self.metrics[idx].committed_spec = Some(spec_id);
                }
                self.forwarded_text.clear();
                if !self.cfg.external_backends {
                    self.tts = Some(TtsState {
                        spec_id,
                        sched: TtsScheduler::new(self.cfg.tts_latency),
                        epoch: self.response_epoch,
                        chunks_scheduled: 0,
                        playback_end_ms: at,
                    });
                }
            }
            Action::AbortPlayback => {
                self.outputs.push(SessionOutput::PlaybackAborted { at_ms: at });
                self.response_epoch += 1;
                if let Some(ts) = self.tts.take() {
                    if let Some(stream) = self.chat_streams.get_mut(&ts.spec_id) {
                        stream.cancel(at);
                    }
                }
                if let Some(idx) = self.current_reply.take() {
                    let row = &mut self.metrics[idx];
                    row.speculations_issued = self.speculations_this_turn;
                    self.speculations_this_turn = 0;
                }
            }
            Action::ForwardTextToTts { text } => {
                self.forwarded_text.push_str(&text);
                let spec_id = self.tts.as_ref().map(|t| t.spec_id).unwrap_or_default();
                self.outputs.push(SessionOutput::CommittedText { at_ms: at, spec_id, text: text.clone() });
                if let Some(ts) = self.tts.as_mut() {
                    let plans = ts.sched.push_text(at, &text);
                    self.schedule_tts_plans(plans);
                }
            }
            Action::DispatchTool { directive } => {
                self.outputs.push(SessionOutput::ToolDispatched { at_ms: at, directive: directive.clone() });
                if !self.cfg.external_backends {
                    let (done_at, payload) = self.tools.invoke(&directive.name, at);
                    self.schedule(
                        done_at,
                        Pending::Controller(ControllerEvent::ToolResult {
                            call_id: directive.call_id,
                            payload,
                        }),
                    );
                }
            }
            Action::AppendHistory { turn_id, role, audio_tokens, .. } => {
                if role == Role::User {
                    if let Some(idx) = self.current_reply {
                        let row = &mut self.metrics[idx];
                        row.turn_id = turn_id;
                        row.audio_tokens = audio_tokens;
                    }
                    self.turn_index += 1;
                }
            }
            Action::RequestTranscript { turn_id, audio_tokens } => {
                if self.cfg.external_backends {
                    let token_ids = self
                        .controller
                        .history()
                        .turn(turn_id)
                        .and_then(|t| t.audio.as_ref())
                        .map(|a| a.unified_ids().iter().map(|id| id.value()).collect())
                        .unwrap_or_default();
                    self.outputs.push(SessionOutput::TranscriptRequested { at_ms: at, turn_id, token_ids });
                } else {
                    // The user turn just closed, so the script index for
                    // this turn is turn_index - 1.
                    let script_index = self.turn_index.saturating_sub(1);
                    let (done_at, text) = self.asr.transcribe(script_index, audio_tokens, at);
                    self.schedule(
                        done_at,
                        Pending::Controller(ControllerEvent::AsrTranscript { turn_id, text }),
                    );
                }
            }
            Action::ResponseComplete { spec_id } => {
                if self.cfg.external_backends {
                    self.outputs.push(SessionOutput::SynthesisRequested {
                        at_ms: at,
                        spec_id,
                        text: self.forwarded_text.clone(),
                    });
                } else if self.tts.is_some() {
                    let plans = self.tts.as_mut().unwrap().sched.finish(at);
                    self.schedule_tts_plans(plans);
                    let ts = self.tts.as_ref().unwrap();
                    let epoch = ts.epoch;
                    let finish_at = if ts.chunks_scheduled == 0 { at } else { ts.playback_end_ms };
                    self.schedule(finish_at, Pending::PlaybackFinished { epoch });
                }
            }
            Action::WarnStaleBackend { spec_id } => {
                self.warn(at, format!("stale backend event for speculation {spec_id}"));
            }
            Action::WarnDroppedToolResult { call_id } => {
                self.warn(at, format!("discarded tool result for call {call_id}"));
            }
            Action::WarnMalformedDirective { detail } => {
                self.warn(at, format!("malformed tool directive: {detail}"));
            }
            Action::WarnBackendFailed { spec_id, message } => {
                self.warn(at, format!("backend failure on speculation {spec_id}: {message}"));
            }
            Action::WarnTranscriptIgnored { turn_id } => {
                self.warn(at, format!("transcript for turn {turn_id} ignored"));
            }
        }
        Ok(())
    }

    /// Register planned audio chunks: advance the playback horizon, then
    /// queue each chunk's availability.
    fn schedule_tts_plans(&mut self, plans: Vec<AudioChunkPlan>) {
        let Some(ts) = self.tts.as_mut() else { return };
        let epoch = ts.epoch;
        for plan in &plans {
            ts.chunks_scheduled += 1;
            ts.playback_end_ms = ts.playback_end_ms.max(plan.avail_ms) + plan.duration_ms;
        }
        for plan in plans {
            self.schedule(plan.avail_ms, Pending::TtsChunk { epoch, plan });
        }
    }

    fn warn(&mut self, at: u64, message: String) {
        self.outputs.push(SessionOutput::Warning { at_ms: at, message });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{silence, tone};

    fn single_pause_session(speculation: bool) -> Session {
        let cfg = SessionConfig {
            controller: ControllerConfig { speculation_enabled: speculation, ..Default::default() },
            ..Default::default()
        };
        let content = ScriptedContent {
            responses: vec!["Hi.".into()],
            transcripts: vec!["hello there".into()],
            ..Default::default()
        };
        Session::new(cfg, content).unwrap()
    }

    fn drive_single_turn(session: &mut Session) -> Vec<SessionOutput> {
        let mut outputs = Vec::new();
        outputs.extend(session.push_audio(&tone(1000, 440.0, 0.5)).unwrap());
        outputs.extend(session.push_audio(&silence(800)).unwrap());
        // Keep streaming silence until the reply finishes.
        let mut guard = 0;
        while session.state() != ControllerState::Silence || !session.quiescent() {
            outputs.extend(session.push_audio(&silence(20)).unwrap());
            guard += 1;
            assert!(guard < 10_000, "session failed to quiesce");
        }
        outputs
    }

    fn state_names(outputs: &[SessionOutput]) -> Vec<&'static str> {
        outputs
            .iter()
            .filter_map(|o| match o {
                SessionOutput::StateChange { state, .. } => Some(state.as_str()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn single_pause_turn_walks_the_state_machine() {
        let mut session = single_pause_session(true);
        let outputs = drive_single_turn(&mut session);
        assert_eq!(
            state_names(&outputs),
            vec!["UserSpeaking", "UserPaused", "BotReplying", "Silence"]
        );

        // Speech 0..1000, pause at 1200, end of speech at 1700. Chat first
        // token 500 ms after the pause lands exactly at the end of speech;
        // TTS adds 200 ms: first audio at 1900.
        let m = &session.metrics()[0];
        assert_eq!(m.end_of_speech_ms, 1700);
        assert_eq!(m.first_audio_ms, Some(1900));
        assert_eq!(m.response_latency_ms(), Some(200));
        assert_eq!(m.committed_spec, Some(1));
        assert_eq!(m.speculations_issued, 1);
        // 1700 ms of audio before end of speech: 14 complete groups within
        // the turn window.
        assert!(m.audio_tokens > 0);
        assert_eq!(m.audio_tokens % 5, 0);
    }

    #[test]
    fn no_speculation_pays_the_full_first_token_latency() {
        let mut session = single_pause_session(false);
        drive_single_turn(&mut session);
        let m = &session.metrics()[0];
        // Generation starts at end of speech: 500 chat + 200 tts.
        assert_eq!(m.response_latency_ms(), Some(700));
    }

    #[test]
    fn transcript_lands_with_compacted_estimate() {
        let mut session = single_pause_session(true);
        drive_single_turn(&mut session);
        // Drain ASR completion.
        let mut s = session;
        s.end_input().unwrap();
        let m = &s.metrics()[0];
        let expected = (m.audio_tokens + 13) / 14;
        assert_eq!(m.transcript_estimate, Some(expected));
        // History now holds the transcript text, no audio.
        let history = s.controller().history();
        let turn = history.turn(m.turn_id).unwrap();
        assert!(turn.audio.is_none());
        assert_eq!(estimate_tokens(&turn.text), expected);
    }

    #[test]
    fn identical_runs_produce_identical_traces() {
        let run = || {
            let mut s = single_pause_session(true);
            drive_single_turn(&mut s);
            s.end_input().unwrap();
            s.trace().render()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn push_after_end_is_rejected() {
        let mut s = single_pause_session(true);
        s.end_input().unwrap();
        assert!(matches!(s.push_audio(&silence(20)), Err(SessionError::Ended)));
    }
}
