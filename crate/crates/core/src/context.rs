//! Conversation history in compact text form.
//!
//! Historical turns hold transcripts; only the live (latest) user turn
//! carries raw audio tokens. When a user turn closes, its audio is handed
//! to ASR and the transcript later replaces the tokens — an asynchronous
//! substitution that is allowed to land after the next turn has already
//! opened. The `pending_transcriptions` set makes that race deterministic:
//! a non-live turn may hold audio only while its transcription is pending.
//!
//! Prompt snapshots are immutable, budget-fitted renderings: the system
//! turn is pinned, the live turn's audio is counted at one per token, and
//! older turns are evicted oldest-first until the estimate fits.

use crate::tokens::{AudioToken, InterleavedSequence, TokenError, UnifiedId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub type TurnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("turn {turn_id} not found")]
    TurnNotFound { turn_id: TurnId },
    #[error(
        "turn {turn_id} still holds audio and is not pending transcription; \
         cannot open a new audio turn"
    )]
    AudioInvariant { turn_id: TurnId },
    #[error("prompt budget {budget} cannot fit system turn plus live turn ({required} tokens)")]
    OverBudget { budget: usize, required: usize },
    #[error(transparent)]
    Token(#[from] TokenError),
}

/// Outcome of a transcript application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Applied,
    /// The turn was already text-only; the call was an idempotent no-op.
    AlreadyApplied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextConfig {
    /// When true (the default), closed user turns are transcribed and their
    /// audio dropped. When false the engine keeps audio tokens as history —
    /// supported but never selected automatically.
    pub transcribe_history: bool,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self { transcribe_history: true }
    }
}

/// Deterministic token estimator: ceil(code points / 4).
pub fn estimate_tokens(text: &str) -> usize {
    (text.chars().count() + 3) / 4
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub turn_id: TurnId,
    pub role: Role,
    pub text: String,
    pub audio: Option<InterleavedSequence>,
    pub truncated: bool,
}

impl Turn {
    pub fn audio_token_count(&self) -> usize {
        self.audio.as_ref().map(|a| a.len()).unwrap_or(0)
    }

    /// Budget estimate: text tokens plus one per held audio token.
    pub fn estimate(&self) -> usize {
        estimate_tokens(&self.text) + self.audio_token_count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SnapshotTurn {
    role: Role,
    text: String,
}

/// An immutable, budget-fitted rendering of history. Safe to hand to a
/// concurrently running backend call; later history mutations never touch
/// an already-taken snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSnapshot {
    turns: Vec<SnapshotTurn>,
    live_audio: Vec<UnifiedId>,
    token_estimate: usize,
}

impl PromptSnapshot {
    pub fn token_estimate(&self) -> usize {
        self.token_estimate
    }

    /// Rendered (role, text) pairs, oldest to newest.
    pub fn rendered_turns(&self) -> Vec<(Role, &str)> {
        self.turns.iter().map(|t| (t.role, t.text.as_str())).collect()
    }

    /// Unified ids of the live turn's audio tokens.
    pub fn live_audio(&self) -> &[UnifiedId] {
        &self.live_audio
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "turns": self.turns.iter().map(|t| serde_json::json!({
                "role": t.role.as_str(),
                "text": t.text,
            })).collect::<Vec<_>>(),
            "live_audio": self.live_audio.iter().map(|id| id.value()).collect::<Vec<_>>(),
            "token_estimate": self.token_estimate,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConversationHistory {
    cfg: ContextConfig,
    turns: Vec<Turn>,
    pending: BTreeSet<TurnId>,
    next_id: TurnId,
    open_user: Option<TurnId>,
}

impl ConversationHistory {
    pub fn new(cfg: ContextConfig) -> Self {
        Self { cfg, turns: Vec::new(), pending: BTreeSet::new(), next_id: 1, open_user: None }
    }

    pub fn with_system(cfg: ContextConfig, system_text: &str) -> Self {
        let mut h = Self::new(cfg);
        h.push_turn(Role::System, system_text.to_string(), None, false);
        h
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn turn(&self, turn_id: TurnId) -> Option<&Turn> {
        self.turns.iter().find(|t| t.turn_id == turn_id)
    }

    pub fn pending_transcriptions(&self) -> &BTreeSet<TurnId> {
        &self.pending
    }

    pub fn open_user_turn_id(&self) -> Option<TurnId> {
        self.open_user
    }

    /// Total estimate over all turns (text plus held audio at 1 per token).
    pub fn estimate_total(&self) -> usize {
        self.turns.iter().map(|t| t.estimate()).sum()
    }

    fn push_turn(
        &mut self,
        role: Role,
        text: String,
        audio: Option<InterleavedSequence>,
        truncated: bool,
    ) -> TurnId {
        let turn_id = self.next_id;
        self.next_id += 1;
        self.turns.push(Turn { turn_id, role, text, audio, truncated });
        turn_id
    }

    /// Check that no closed turn holds audio outside the pending set.
    fn check_audio_invariant(&self) -> Result<(), ContextError> {
        if !self.cfg.transcribe_history {
            return Ok(());
        }
        for t in &self.turns {
            if t.audio.is_some()
                && Some(t.turn_id) != self.open_user
                && !self.pending.contains(&t.turn_id)
            {
                return Err(ContextError::AudioInvariant { turn_id: t.turn_id });
            }
        }
        Ok(())
    }

    /// Open a user turn for incoming audio. No-op if one is already open.
    pub fn open_user_turn(&mut self) -> Result<TurnId, ContextError> {
        if let Some(id) = self.open_user {
            return Ok(id);
        }
        self.check_audio_invariant()?;
        let id = self.push_turn(Role::User, String::new(), None, false);
        self.open_user = Some(id);
        Ok(id)
    }

    /// Append complete token groups to the open user turn, opening one if
    /// needed. The first append registers an asynchronous transcription
    /// request for the turn.
    pub fn append_user_audio(&mut self, tokens: &[AudioToken]) -> Result<TurnId, ContextError> {
        let id = self.open_user_turn()?;
        let transcribe = self.cfg.transcribe_history;
        let mut register = false;
        let turn = self.turns.iter_mut().find(|t| t.turn_id == id).expect("open turn exists");
        match &mut turn.audio {
            Some(seq) => seq.append(tokens)?,
            None => {
                let mut seq = InterleavedSequence::new();
                seq.append(tokens)?;
                turn.audio = Some(seq);
                register = transcribe;
            }
        }
        if register {
            self.pending.insert(id);
        }
        Ok(id)
    }

    /// Close the open user turn; returns its id and audio token count.
    pub fn close_user_turn(&mut self) -> Option<(TurnId, usize)> {
        let id = self.open_user.take()?;
        let count = self.turn(id).map(|t| t.audio_token_count()).unwrap_or(0);
        Some((id, count))
    }

    /// Replace a turn's audio with its transcript. Double application is an
    /// idempotent no-op.
    pub fn apply_transcript(
        &mut self,
        turn_id: TurnId,
        text: &str,
    ) -> Result<ApplyOutcome, ContextError> {
        let pending = self.pending.contains(&turn_id);
        let turn = self
            .turns
            .iter_mut()
            .find(|t| t.turn_id == turn_id)
            .ok_or(ContextError::TurnNotFound { turn_id })?;
        if turn.audio.is_none() && !pending {
            return Ok(ApplyOutcome::AlreadyApplied);
        }
        turn.audio = None;
        turn.text = text.to_string();
        self.pending.remove(&turn_id);
        Ok(ApplyOutcome::Applied)
    }

    pub fn append_assistant(&mut self, text: &str, truncated: bool) -> TurnId {
        self.push_turn(Role::Assistant, text.to_string(), None, truncated)
    }

    pub fn append_tool(&mut self, text: &str) -> TurnId {
        self.push_turn(Role::Tool, text.to_string(), None, false)
    }

    fn live_turn_id(&self) -> Option<TurnId> {
        self.open_user
            .or_else(|| self.turns.iter().rev().find(|t| t.audio.is_some()).map(|t| t.turn_id))
    }

    /// Build a budget-fitted snapshot: the system turn, then the most recent
    /// turns whose cumulative estimate fits, evicting oldest non-system
    /// turns first. The live turn always rides along with its audio.
    pub fn snapshot_prompt(&self, budget: usize) -> Result<PromptSnapshot, ContextError> {
        let live_id = self.live_turn_id();
        let system = self.turns.first().filter(|t| t.role == Role::System);
        let system_id = system.map(|t| t.turn_id);

        let mut required = system.map(|t| t.estimate()).unwrap_or(0);
        if let Some(id) = live_id {
            if Some(id) != system_id {
                required += self.turn(id).map(|t| t.estimate()).unwrap_or(0);
            }
        }
        if required > budget {
            return Err(ContextError::OverBudget { budget, required });
        }

        // Newest-first accumulation over the non-pinned turns.
        let mut included: Vec<&Turn> = Vec::new();
        let mut used = required;
        for t in self.turns.iter().rev() {
            if Some(t.turn_id) == live_id || Some(t.turn_id) == system_id {
                continue;
            }
            let cost = t.estimate();
            if used + cost > budget {
                break;
            }
            used += cost;
            included.push(t);
        }
        included.reverse();

        let mut turns = Vec::new();
        let mut live_audio = Vec::new();
        if let Some(s) = system {
            turns.push(SnapshotTurn { role: s.role, text: s.text.clone() });
        }
        for t in included {
            turns.push(SnapshotTurn { role: t.role, text: t.text.clone() });
        }
        if let Some(id) = live_id {
            if Some(id) != system_id {
                let live = self.turn(id).expect("live turn exists");
                turns.push(SnapshotTurn { role: live.role, text: live.text.clone() });
                if let Some(audio) = &live.audio {
                    live_audio = audio.unified_ids();
                }
            }
        }
        Ok(PromptSnapshot { turns, live_audio, token_estimate: used })
    }

    /// Structured export for inspection and fixtures.
    pub fn export_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.turns
                .iter()
                .map(|t| {
                    serde_json::json!({
                        "turn_id": t.turn_id,
                        "role": t.role.as_str(),
                        "text": t.text,
                        "audio_token_count": t.audio_token_count(),
                        "truncated": t.truncated,
                    })
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokens::AudioToken;

    /// `n` complete groups of placeholder tokens (5·n tokens).
    fn groups(n: usize) -> Vec<AudioToken> {
        let mut out = Vec::new();
        for k in 0..n {
            out.push(AudioToken::linguistic((k % 1024) as u32).unwrap());
            out.push(AudioToken::linguistic(((k + 1) % 1024) as u32).unwrap());
            out.push(AudioToken::semantic((k % 4096) as u32).unwrap());
            out.push(AudioToken::semantic(((k + 1) % 4096) as u32).unwrap());
            out.push(AudioToken::semantic(((k + 2) % 4096) as u32).unwrap());
        }
        out
    }

    fn audio_turn_count(h: &ConversationHistory) -> usize {
        h.turns().iter().filter(|t| t.audio.is_some()).count()
    }

    #[test]
    fn estimate_tokens_definition() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("12345678"), 2);
        assert_eq!(estimate_tokens("123456789"), 3);
        // Code points, not bytes.
        assert_eq!(estimate_tokens("ééééééééé"), 3);
    }

    #[test]
    fn first_append_creates_turn_and_pending() {
        let mut h = ConversationHistory::new(ContextConfig::default());
        h.append_user_audio(&groups(10)).unwrap();
        assert_eq!(h.turns().len(), 1);
        assert_eq!(h.turns()[0].audio_token_count(), 50);
        assert_eq!(h.pending_transcriptions().len(), 1);
    }

    #[test]
    fn appends_accumulate_within_the_open_turn() {
        let mut h = ConversationHistory::new(ContextConfig::default());
        h.append_user_audio(&groups(10)).unwrap();
        h.append_user_audio(&groups(10)).unwrap();
        assert_eq!(h.turns().len(), 1);
        assert_eq!(h.turns()[0].audio_token_count(), 100);
        assert_eq!(h.pending_transcriptions().len(), 1);
    }

    #[test]
    fn late_transcript_race_resolves_to_single_audio_turn() {
        let mut h = ConversationHistory::new(ContextConfig::default());
        h.append_user_audio(&groups(4)).unwrap();
        let (first, _) = h.close_user_turn().unwrap();

        // Next turn opens before the prior transcript lands: transiently
        // two turns hold audio, the prior one still pending.
        h.append_user_audio(&groups(2)).unwrap();
        assert_eq!(audio_turn_count(&h), 2);
        assert!(h.pending_transcriptions().contains(&first));

        h.apply_transcript(first, "earlier words").unwrap();
        assert_eq!(audio_turn_count(&h), 1);
        assert_eq!(h.turns()[0].text, "earlier words");
    }

    #[test]
    fn apply_transcript_reaches_fourteen_to_one() {
        let mut h = ConversationHistory::new(ContextConfig::default());
        h.append_user_audio(&groups(280)).unwrap(); // 1400 tokens
        let (id, count) = h.close_user_turn().unwrap();
        assert_eq!(count, 1400);

        // ceil(1400 / 14) = 100 estimated text tokens = 400 chars.
        let transcript = "x".repeat(400);
        let before = h.estimate_total();
        h.apply_transcript(id, &transcript).unwrap();
        let turn = h.turn(id).unwrap();
        assert_eq!(estimate_tokens(&turn.text), 100);
        assert_eq!(turn.audio_token_count(), 0);
        assert!(h.estimate_total() <= before);
    }

    #[test]
    fn empty_transcript_still_drops_audio() {
        let mut h = ConversationHistory::new(ContextConfig::default());
        h.append_user_audio(&groups(1)).unwrap();
        let (id, _) = h.close_user_turn().unwrap();
        h.apply_transcript(id, "").unwrap();
        let turn = h.turn(id).unwrap();
        assert_eq!(turn.text, "");
        assert!(turn.audio.is_none());
    }

    #[test]
    fn double_apply_is_a_noop_and_unknown_errors() {
        let mut h = ConversationHistory::new(ContextConfig::default());
        h.append_user_audio(&groups(1)).unwrap();
        let (id, _) = h.close_user_turn().unwrap();
        assert_eq!(h.apply_transcript(id, "hi").unwrap(), ApplyOutcome::Applied);
        assert_eq!(h.apply_transcript(id, "other").unwrap(), ApplyOutcome::AlreadyApplied);
        assert_eq!(h.turn(id).unwrap().text, "hi");
        assert_eq!(h.apply_transcript(99, "x"), Err(ContextError::TurnNotFound { turn_id: 99 }));
    }

    #[test]
    fn snapshot_includes_everything_under_large_budget() {
        let mut h = ConversationHistory::with_system(ContextConfig::default(), "be brief");
        h.append_user_audio(&groups(2)).unwrap();
        let (id, _) = h.close_user_turn().unwrap();
        h.apply_transcript(id, "hello").unwrap();
        h.append_assistant("hi there", false);
        let snap = h.snapshot_prompt(10_000).unwrap();
        assert_eq!(snap.rendered_turns().len(), 3);
    }

    #[test]
    fn snapshot_evicts_oldest_first() {
        // System turn estimating 50 tokens, ten closed turns of 100 each,
        // budget 500: the system turn plus the newest four fit.
        let mut h = ConversationHistory::with_system(ContextConfig::default(), &"s".repeat(200));
        for i in 0..10 {
            let text = format!("{}{}", "t".repeat(399), i);
            assert_eq!(estimate_tokens(&text), 100);
            h.push_turn(Role::User, text, None, false);
        }
        let snap = h.snapshot_prompt(500).unwrap();
        let rendered = snap.rendered_turns();
        assert_eq!(rendered.len(), 5);
        assert_eq!(rendered[0].0, Role::System);
        assert!(rendered[1].1.ends_with('6'));
        assert!(rendered[4].1.ends_with('9'));
        assert_eq!(snap.token_estimate(), 450);
    }

    #[test]
    fn snapshot_counts_live_audio_and_is_pure() {
        let mut h = ConversationHistory::new(ContextConfig::default());
        h.append_user_audio(&groups(10)).unwrap(); // 50 live tokens
        let a = h.snapshot_prompt(100).unwrap();
        let b = h.snapshot_prompt(100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.token_estimate(), 50);
        assert_eq!(a.live_audio().len(), 50);
    }

    #[test]
    fn snapshot_over_budget_error() {
        let mut h = ConversationHistory::new(ContextConfig::default());
        h.append_user_audio(&groups(10)).unwrap();
        assert_eq!(h.snapshot_prompt(10), Err(ContextError::OverBudget { budget: 10, required: 50 }));
    }

    #[test]
    fn snapshot_isolation_from_later_audio() {
        let mut h = ConversationHistory::new(ContextConfig::default());
        h.append_user_audio(&groups(2)).unwrap();
        let snap = h.snapshot_prompt(1000).unwrap();
        h.append_user_audio(&groups(2)).unwrap();
        assert_eq!(snap.live_audio().len(), 10);
        let snap2 = h.snapshot_prompt(1000).unwrap();
        assert_eq!(snap2.live_audio().len(), 20);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        #[derive(Debug, Clone)]
        enum Op {
            Append(usize),
            Close,
            ApplyOldest,
            Assistant,
        }

        fn op_strategy() -> impl Strategy<Value = Op> {
            prop_oneof![
                (1usize..6).prop_map(Op::Append),
                Just(Op::Close),
                Just(Op::ApplyOldest),
                Just(Op::Assistant),
            ]
        }

        proptest! {
            /// After every operation, audio may sit only on the open turn or
            /// on turns pending transcription; once the pending set drains,
            /// at most one turn (the open one) holds audio.
            #[test]
            fn single_audio_invariant(ops in proptest::collection::vec(op_strategy(), 1..60)) {
                let mut h = ConversationHistory::new(ContextConfig::default());
                for op in ops {
                    match op {
                        Op::Append(n) => {
                            let _ = h.append_user_audio(&groups(n));
                        }
                        Op::Close => {
                            h.close_user_turn();
                        }
                        Op::ApplyOldest => {
                            let next = h.pending_transcriptions().iter().next().copied();
                            if let Some(id) = next {
                                if Some(id) != h.open_user_turn_id() {
                                    let n = h.turn(id).unwrap().audio_token_count();
                                    let text = "x".repeat(4 * ((n + 13) / 14));
                                    let before = h.estimate_total();
                                    h.apply_transcript(id, &text).unwrap();
                                    prop_assert!(h.estimate_total() <= before);
                                }
                            }
                        }
                        Op::Assistant => {
                            h.append_assistant("ok", false);
                        }
                    }
                    for t in h.turns() {
                        if t.audio.is_some() {
                            let open = Some(t.turn_id) == h.open_user_turn_id();
                            let pending = h.pending_transcriptions().contains(&t.turn_id);
                            prop_assert!(open || pending);
                        }
                    }
                }
                // Drain the pending set; only the open turn may keep audio.
                let ids: Vec<_> = h.pending_transcriptions().iter().copied().collect();
                for id in ids {
                    if Some(id) != h.open_user_turn_id() {
                        h.apply_transcript(id, "t").unwrap();
                    }
                }
                let audio_turns = h.turns().iter().filter(|t| t.audio.is_some()).count();
                prop_assert!(audio_turns <= 1);
            }
        }
    }
}
