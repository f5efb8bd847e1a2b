//! The four-state interaction machine.
//!
//! The controller consumes one totally ordered stream of timestamped events
//! and emits side-effect [`Action`]s — its only output channel. State moves
//! `Silence → UserSpeaking` on detected speech, `UserSpeaking → UserPaused`
//! on a pause (triggering a speculative generation with a prompt snapshot
//! frozen at that instant), back to `UserSpeaking` on resume (cancelling the
//! speculation), and `UserPaused → BotReplying` on end-of-speech (committing
//! the in-flight speculation). User speech during `BotReplying` is barge-in:
//! playback aborts in the same call and the new input takes priority.
//!
//! Committed response text streams through the tool-call router: speakable
//! text forwards to TTS immediately while marker-delimited directives
//! dispatch asynchronously, never blocking the audio path. The machine owns
//! the conversation history; snapshots hand immutable copies to backends.

use crate::context::{
    ContextConfig, ContextError, ConversationHistory, PromptSnapshot, Role, TurnId,
};
use crate::router::{RoutedChunk, RoutedItem, StreamRouter};
use crate::tokens::AudioToken;
use std::collections::BTreeSet;
use thiserror::Error;

pub type SpecId = u64;
pub type CallId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerState {
    Silence,
    UserSpeaking,
    UserPaused,
    BotReplying,
}

impl ControllerState {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerState::Silence => "Silence",
            ControllerState::UserSpeaking => "UserSpeaking",
            ControllerState::UserPaused => "UserPaused",
            ControllerState::BotReplying => "BotReplying",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecStatus {
    InFlight,
    Committed,
    Cancelled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEntry {
    pub spec_id: SpecId,
    pub issued_at_ms: u64,
    pub status: SpecStatus,
}

/// Record of every speculation issued, with its fate.
#[derive(Debug, Clone, Default)]
pub struct SpeculationLedger {
    entries: Vec<LedgerEntry>,
}

impl SpeculationLedger {
    fn record(&mut self, spec_id: SpecId, issued_at_ms: u64) {
        debug_assert!(self.entries.last().map_or(true, |e| e.spec_id < spec_id));
        self.entries.push(LedgerEntry { spec_id, issued_at_ms, status: SpecStatus::InFlight });
    }

    fn set_status(&mut self, spec_id: SpecId, status: SpecStatus) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.spec_id == spec_id) {
            e.status = status;
        }
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn issued(&self) -> usize {
        self.entries.len()
    }

    pub fn committed(&self) -> usize {
        self.entries.iter().filter(|e| e.status == SpecStatus::Committed).count()
    }

    pub fn cancelled(&self) -> usize {
        self.entries.iter().filter(|e| e.status == SpecStatus::Cancelled).count()
    }
}

/// A tool invocation parsed from model output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolCallDirective {
    pub call_id: CallId,
    pub name: String,
    pub args: String,
}

/// Timestamped input to the machine.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerEvent {
    VadSpeechStart,
    VadPauseDetected,
    VadSpeechResume,
    VadEndOfSpeech,
    BackendFirstToken { spec_id: SpecId },
    BackendTextChunk { spec_id: SpecId, text: String },
    BackendDone { spec_id: SpecId },
    BackendFailed { spec_id: SpecId, message: String },
    PlaybackFinished,
    ToolResult { call_id: CallId, payload: String },
    AsrTranscript { turn_id: TurnId, text: String },
}

impl ControllerEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            ControllerEvent::VadSpeechStart => "VadSpeechStart",
            ControllerEvent::VadPauseDetected => "VadPauseDetected",
            ControllerEvent::VadSpeechResume => "VadSpeechResume",
            ControllerEvent::VadEndOfSpeech => "VadEndOfSpeech",
            ControllerEvent::BackendFirstToken { .. } => "BackendFirstToken",
            ControllerEvent::BackendTextChunk { .. } => "BackendTextChunk",
            ControllerEvent::BackendDone { .. } => "BackendDone",
            ControllerEvent::BackendFailed { .. } => "BackendFailed",
            ControllerEvent::PlaybackFinished => "PlaybackFinished",
            ControllerEvent::ToolResult { .. } => "ToolResult",
            ControllerEvent::AsrTranscript { .. } => "AsrTranscript",
        }
    }
}

/// Side-effect command emitted by the machine.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    StartSpeculation { spec_id: SpecId, snapshot: PromptSnapshot },
    CancelSpeculation { spec_id: SpecId },
    CommitSpeculation { spec_id: SpecId },
    AbortPlayback,
    ForwardTextToTts { text: String },
    DispatchTool { directive: ToolCallDirective },
    AppendHistory { turn_id: TurnId, role: Role, text_chars: usize, audio_tokens: usize, truncated: bool },
    RequestTranscript { turn_id: TurnId, audio_tokens: usize },
    /// The committed response's text stream has ended; TTS may flush.
    ResponseComplete { spec_id: SpecId },
    WarnStaleBackend { spec_id: SpecId },
    WarnDroppedToolResult { call_id: CallId },
    WarnMalformedDirective { detail: String },
    WarnBackendFailed { spec_id: SpecId, message: String },
    WarnTranscriptIgnored { turn_id: TurnId },
}

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("event {event} invalid in state {state}")]
    InvalidEvent { state: &'static str, event: &'static str },
    #[error("event at {at_ms} ms precedes last consumed event at {last_ms} ms")]
    TimeRegression { at_ms: u64, last_ms: u64 },
    #[error(transparent)]
    Context(#[from] ContextError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub speculation_enabled: bool,
    pub prompt_budget: usize,
    pub system_prompt: Option<String>,
    pub context: ContextConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            speculation_enabled: true,
            prompt_budget: 4096,
            system_prompt: None,
            context: ContextConfig::default(),
        }
    }
}

#[derive(Debug)]
struct InFlightSpec {
    spec_id: SpecId,
    buffer: String,
    done: bool,
    failed: bool,
}

#[derive(Debug)]
struct CommittedResponse {
    spec_id: SpecId,
    router: StreamRouter,
    /// Text forwarded to TTS so far; becomes the assistant turn's text.
    forwarded: String,
    text_done: bool,
}

#[derive(Debug)]
pub struct Controller {
    cfg: ControllerConfig,
    state: ControllerState,
    history: ConversationHistory,
    ledger: SpeculationLedger,
    last_event_ms: u64,
    next_spec_id: SpecId,
    next_call_id: CallId,
    inflight: Option<InFlightSpec>,
    committed: Option<CommittedResponse>,
    active_tools: BTreeSet<CallId>,
    orphaned_tools: BTreeSet<CallId>,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Self {
        let history = match &cfg.system_prompt {
            Some(text) => ConversationHistory::with_system(cfg.context.clone(), text),
            None => ConversationHistory::new(cfg.context.clone()),
        };
        Self {
            cfg,
            state: ControllerState::Silence,
            history,
            ledger: SpeculationLedger::default(),
            last_event_ms: 0,
            next_spec_id: 1,
            next_call_id: 1,
            inflight: None,
            committed: None,
            active_tools: BTreeSet::new(),
            orphaned_tools: BTreeSet::new(),
        }
    }

    pub fn state(&self) -> ControllerState {
        self.state
    }

    pub fn history(&self) -> &ConversationHistory {
        &self.history
    }

    pub fn ledger(&self) -> &SpeculationLedger {
        &self.ledger
    }

    /// Feed tokenized user audio. Tokens arriving while no user turn is
    /// live (ambient noise during `Silence` or the bot's own reply) are
    /// dropped; the turn opens at `VadSpeechStart`.
    pub fn push_user_audio(&mut self, tokens: &[AudioToken]) -> Result<(), ContextError> {
        match self.state {
            ControllerState::UserSpeaking | ControllerState::UserPaused => {
                self.history.append_user_audio(tokens)?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn invalid(&self, event: &ControllerEvent) -> ControllerError {
        ControllerError::InvalidEvent { state: self.state.as_str(), event: event.kind() }
    }

    fn issue_speculation(&mut self, at_ms: u64, actions: &mut Vec<Action>) -> Result<SpecId, ControllerError> {
        let snapshot = self.history.snapshot_prompt(self.cfg.prompt_budget)?;
        let spec_id = self.next_spec_id;
        self.next_spec_id += 1;
        self.ledger.record(spec_id, at_ms);
        self.inflight = Some(InFlightSpec { spec_id, buffer: String::new(), done: false, failed: false });
        actions.push(Action::StartSpeculation { spec_id, snapshot });
        Ok(spec_id)
    }

    /// Route text through the committed response's stream router,
    /// translating routed items into actions.
    fn route_committed(&mut self, chunk: &str, actions: &mut Vec<Action>) {
        let Some(c) = self.committed.as_mut() else { return };
        match c.router.push(chunk) {
            Ok(routed) => self.emit_routed(routed, actions),
            Err(e) => actions.push(Action::WarnMalformedDirective { detail: e.to_string() }),
        }
    }

    fn emit_routed(&mut self, routed: RoutedChunk, actions: &mut Vec<Action>) {
        for item in routed.items {
            match item {
                RoutedItem::Text(text) => {
                    if let Some(c) = self.committed.as_mut() {
                        c.forwarded.push_str(&text);
                    }
                    actions.push(Action::ForwardTextToTts { text });
                }
                RoutedItem::Directive { name, args } => {
                    let call_id = self.next_call_id;
                    self.next_call_id += 1;
                    self.active_tools.insert(call_id);
                    actions.push(Action::DispatchTool {
                        directive: ToolCallDirective { call_id, name, args },
                    });
                }
            }
        }
    }

    fn finalize_committed(&mut self, actions: &mut Vec<Action>) {
        let Some(c) = self.committed.as_mut() else { return };
        if c.text_done {
            return;
        }
        c.text_done = true;
        let spec_id = c.spec_id;
        match c.router.finish() {
            Ok(routed) => self.emit_routed(routed, actions),
            Err(e) => actions.push(Action::WarnMalformedDirective { detail: e.to_string() }),
        }
        actions.push(Action::ResponseComplete { spec_id });
    }

    fn commit_inflight(&mut self, spec: InFlightSpec, actions: &mut Vec<Action>) {
        self.ledger.set_status(spec.spec_id, SpecStatus::Committed);
        actions.push(Action::CommitSpeculation { spec_id: spec.spec_id });
        self.committed = Some(CommittedResponse {
            spec_id: spec.spec_id,
            router: StreamRouter::new(),
            forwarded: String::new(),
            text_done: false,
        });
        self.close_user_turn(actions);
        if !spec.buffer.is_empty() {
            self.route_committed(&spec.buffer, actions);
        }
        if spec.done {
            self.finalize_committed(actions);
        }
    }

    fn close_user_turn(&mut self, actions: &mut Vec<Action>) {
        if let Some((turn_id, audio_tokens)) = self.history.close_user_turn() {
            actions.push(Action::AppendHistory {
                turn_id,
                role: Role::User,
                text_chars: 0,
                audio_tokens,
                truncated: false,
            });
            if audio_tokens > 0 && self.history.pending_transcriptions().contains(&turn_id) {
                actions.push(Action::RequestTranscript { turn_id, audio_tokens });
            }
        }
    }

    /// Consume one event; returns the actions it triggers, in order.
    pub fn handle_event(&mut self, at_ms: u64, event: ControllerEvent) -> Result<Vec<Action>, ControllerError> {
        if at_ms < self.last_event_ms {
            return Err(ControllerError::TimeRegression { at_ms, last_ms: self.last_event_ms });
        }
        self.last_event_ms = at_ms;
        let mut actions = Vec::new();

        match event {
            ControllerEvent::VadSpeechStart => match self.state {
                ControllerState::Silence => {
                    self.history.open_user_turn()?;
                    self.state = ControllerState::UserSpeaking;
                }
                ControllerState::BotReplying => {
                    // Barge-in: abort playback in this same call, record the
                    // spoken prefix as a truncated assistant turn, and
                    // prioritize the new input.
                    actions.push(Action::AbortPlayback);
                    if let Some(c) = self.committed.take() {
                        let turn_id = self.history.append_assistant(&c.forwarded, true);
                        actions.push(Action::AppendHistory {
                            turn_id,
                            role: Role::Assistant,
                            text_chars: c.forwarded.chars().count(),
                            audio_tokens: 0,
                            truncated: true,
                        });
                    }
                    // Tools still running belong to the aborted response;
                    // they complete but their results are discarded.
                    let orphans = std::mem::take(&mut self.active_tools);
                    self.orphaned_tools.extend(orphans);
                    self.history.open_user_turn()?;
                    self.state = ControllerState::UserSpeaking;
                }
                _ => return Err(self.invalid(&ControllerEvent::VadSpeechStart)),
            },

            ControllerEvent::VadPauseDetected => match self.state {
                ControllerState::UserSpeaking => {
                    self.state = ControllerState::UserPaused;
                    if self.cfg.speculation_enabled {
                        self.issue_speculation(at_ms, &mut actions)?;
                    }
                }
                _ => return Err(self.invalid(&ControllerEvent::VadPauseDetected)),
            },

            ControllerEvent::VadSpeechResume => match self.state {
                ControllerState::UserPaused => {
                    self.state = ControllerState::UserSpeaking;
                    if let Some(spec) = self.inflight.take() {
                        self.ledger.set_status(spec.spec_id, SpecStatus::Cancelled);
                        actions.push(Action::CancelSpeculation { spec_id: spec.spec_id });
                    }
                }
                _ => return Err(self.invalid(&ControllerEvent::VadSpeechResume)),
            },

            ControllerEvent::VadEndOfSpeech => match self.state {
                ControllerState::UserPaused => {
                    self.state = ControllerState::BotReplying;
                    match self.inflight.take() {
                        Some(spec) if !spec.failed => self.commit_inflight(spec, &mut actions),
                        other => {
                            // No usable speculation (disabled mode, or the
                            // in-flight one failed): generate from the full
                            // turn, starting now.
                            if let Some(spec) = other {
                                self.ledger.set_status(spec.spec_id, SpecStatus::Cancelled);
                            }
                            self.close_user_turn(&mut actions);
                            let spec_id = self.issue_speculation(at_ms, &mut actions)?;
                            let spec = self.inflight.take().expect("just issued");
                            self.ledger.set_status(spec_id, SpecStatus::Committed);
                            actions.push(Action::CommitSpeculation { spec_id });
                            self.committed = Some(CommittedResponse {
                                spec_id,
                                router: StreamRouter::new(),
                                forwarded: String::new(),
                                text_done: false,
                            });
                            debug_assert!(spec.buffer.is_empty());
                        }
                    }
                }
                _ => return Err(self.invalid(&ControllerEvent::VadEndOfSpeech)),
            },

            ControllerEvent::BackendFirstToken { spec_id } => {
                if !self.knows_spec(spec_id) {
                    actions.push(Action::WarnStaleBackend { spec_id });
                }
            }

            ControllerEvent::BackendTextChunk { spec_id, text } => {
                if self.inflight.as_ref().is_some_and(|s| s.spec_id == spec_id) {
                    self.inflight.as_mut().unwrap().buffer.push_str(&text);
                } else if self.committed.as_ref().is_some_and(|c| c.spec_id == spec_id && !c.text_done) {
                    self.route_committed(&text, &mut actions);
                } else {
                    actions.push(Action::WarnStaleBackend { spec_id });
                }
            }

            ControllerEvent::BackendDone { spec_id } => {
                if self.inflight.as_ref().is_some_and(|s| s.spec_id == spec_id) {
                    self.inflight.as_mut().unwrap().done = true;
                } else if self.committed.as_ref().is_some_and(|c| c.spec_id == spec_id && !c.text_done) {
                    self.finalize_committed(&mut actions);
                } else {
                    actions.push(Action::WarnStaleBackend { spec_id });
                }
            }

            ControllerEvent::BackendFailed { spec_id, message } => {
                if self.inflight.as_ref().is_some_and(|s| s.spec_id == spec_id) {
                    self.inflight.as_mut().unwrap().failed = true;
                    actions.push(Action::WarnBackendFailed { spec_id, message });
                } else if self.committed.as_ref().is_some_and(|c| c.spec_id == spec_id && !c.text_done) {
                    actions.push(Action::WarnBackendFailed { spec_id, message });
                    self.finalize_committed(&mut actions);
                } else {
                    actions.push(Action::WarnStaleBackend { spec_id });
                }
            }

            ControllerEvent::PlaybackFinished => match self.state {
                ControllerState::BotReplying => {
                    self.state = ControllerState::Silence;
                    if let Some(c) = self.committed.take() {
                        let turn_id = self.history.append_assistant(&c.forwarded, false);
                        actions.push(Action::AppendHistory {
                            turn_id,
                            role: Role::Assistant,
                            text_chars: c.forwarded.chars().count(),
                            audio_tokens: 0,
                            truncated: false,
                        });
                    }
                }
                _ => return Err(self.invalid(&ControllerEvent::PlaybackFinished)),
            },

            ControllerEvent::ToolResult { call_id, payload } => {
                if self.active_tools.remove(&call_id) {
                    let turn_id = self.history.append_tool(&payload);
                    actions.push(Action::AppendHistory {
                        turn_id,
                        role: Role::Tool,
                        text_chars: payload.chars().count(),
                        audio_tokens: 0,
                        truncated: false,
                    });
                } else {
                    self.orphaned_tools.remove(&call_id);
                    actions.push(Action::WarnDroppedToolResult { call_id });
                }
            }

            ControllerEvent::AsrTranscript { turn_id, text } => {
                match self.history.apply_transcript(turn_id, &text) {
                    Ok(crate::context::ApplyOutcome::Applied) => {}
                    Ok(crate::context::ApplyOutcome::AlreadyApplied)
                    | Err(ContextError::TurnNotFound { .. }) => {
                        actions.push(Action::WarnTranscriptIgnored { turn_id });
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(actions)
    }

    fn knows_spec(&self, spec_id: SpecId) -> bool {
        self.inflight.as_ref().is_some_and(|s| s.spec_id == spec_id)
            || self.committed.as_ref().is_some_and(|c| c.spec_id == spec_id)
    }
}
