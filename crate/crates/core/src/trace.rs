//! Line-oriented event/action logging.
//!
//! Every consumed event and emitted action serializes to one line:
//!
//! ```text
//! <at_ms>\t<EVENT|ACTION>\t<kind>\t<details>
//! ```
//!
//! Event lines carry the machine state *after* the event in their details,
//! so a trace doubles as a state transcript. Free text in details is quoted
//! with Rust escaping to keep the format line-safe. Golden-trace tests
//! compare these logs byte for byte; changing a detail format is a breaking
//! change to them.

use crate::controller::{Action, ControllerEvent, ControllerState};

/// Format one consumed event with the post-event state.
pub fn event_line(at_ms: u64, event: &ControllerEvent, state_after: ControllerState) -> String {
    let state = state_after.as_str();
    let details = match event {
        ControllerEvent::VadSpeechStart
        | ControllerEvent::VadPauseDetected
        | ControllerEvent::VadSpeechResume
        | ControllerEvent::VadEndOfSpeech
        | ControllerEvent::PlaybackFinished => format!("state={state}"),
        ControllerEvent::BackendFirstToken { spec_id } => format!("spec={spec_id} state={state}"),
        ControllerEvent::BackendTextChunk { spec_id, text } => {
            format!("spec={spec_id} chars={} state={state}", text.chars().count())
        }
        ControllerEvent::BackendDone { spec_id } => format!("spec={spec_id} state={state}"),
        ControllerEvent::BackendFailed { spec_id, message } => {
            format!("spec={spec_id} message={message:?} state={state}")
        }
        ControllerEvent::ToolResult { call_id, payload } => {
            format!("call={call_id} chars={} state={state}", payload.chars().count())
        }
        ControllerEvent::AsrTranscript { turn_id, text } => {
            format!("turn={turn_id} chars={} state={state}", text.chars().count())
        }
    };
    format!("{at_ms}\tEVENT\t{}\t{details}", event.kind())
}

/// Format one emitted action.
pub fn action_line(at_ms: u64, action: &Action) -> String {
    let (kind, details) = match action {
        Action::StartSpeculation { spec_id, snapshot } => (
            "StartSpeculation",
            format!("spec={spec_id} prompt_tokens={}", snapshot.token_estimate()),
        ),
        Action::CancelSpeculation { spec_id } => ("CancelSpeculation", format!("spec={spec_id}")),
        Action::CommitSpeculation { spec_id } => ("CommitSpeculation", format!("spec={spec_id}")),
        Action::AbortPlayback => ("AbortPlayback", "-".to_string()),
        Action::ForwardTextToTts { text } => ("ForwardTextToTts", format!("text={text:?}")),
        Action::DispatchTool { directive } => (
            "DispatchTool",
            format!("call={} name={} args={:?}", directive.call_id, directive.name, directive.args),
        ),
        Action::AppendHistory { turn_id, role, text_chars, audio_tokens, truncated } => (
            "AppendHistory",
            format!(
                "turn={turn_id} role={} chars={text_chars} audio_tokens={audio_tokens} truncated={truncated}",
                role.as_str()
            ),
        ),
        Action::RequestTranscript { turn_id, audio_tokens } => {
            ("RequestTranscript", format!("turn={turn_id} audio_tokens={audio_tokens}"))
        }
        Action::ResponseComplete { spec_id } => ("ResponseComplete", format!("spec={spec_id}")),
        Action::WarnStaleBackend { spec_id } => ("WarnStaleBackend", format!("spec={spec_id}")),
        Action::WarnDroppedToolResult { call_id } => {
            ("WarnDroppedToolResult", format!("call={call_id}"))
        }
        Action::WarnMalformedDirective { detail } => {
            ("WarnMalformedDirective", format!("detail={detail:?}"))
        }
        Action::WarnBackendFailed { spec_id, message } => {
            ("WarnBackendFailed", format!("spec={spec_id} message={message:?}"))
        }
        Action::WarnTranscriptIgnored { turn_id } => {
            ("WarnTranscriptIgnored", format!("turn={turn_id}"))
        }
    };
    format!("{at_ms}\tACTION\t{kind}\t{details}")
}

/// An append-only trace of one session or simulation run.
#[derive(Debug, Clone, Default)]
pub struct TraceLog {
    lines: Vec<String>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_event(&mut self, at_ms: u64, event: &ControllerEvent, state: ControllerState) {
        self.lines.push(event_line(at_ms, event, state));
    }

    pub fn record_actions(&mut self, at_ms: u64, actions: &[Action]) {
        for a in actions {
            self.lines.push(action_line(at_ms, a));
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    /// The whole log as one newline-terminated string.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}
