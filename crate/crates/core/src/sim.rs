//! Scenario-driven simulation.
//!
//! A scenario scripts a conversation as speech/silence timelines plus the
//! content every mock backend should produce. `run` synthesizes the audio,
//! replays it through a [`Session`](crate::session::Session) on the virtual
//! clock, and measures per-turn response latency (end of speech to first
//! synthesized audio), speculation accounting, and context compaction. A
//! speculation-enabled run also executes a no-speculation control run of
//! the same scenario and reports the per-turn latency reduction.
//!
//! For a single-pause turn the arithmetic is exact: with first-token
//! latency `L` and a pause-to-end gap `G`,
//! `latency_with = max(0, L - G) + tts_first` and
//! `latency_without = L + tts_first`, so the reduction is `min(L, G)`.
//! With the default 200 ms / 700 ms endpointing and a 500 ms chat model the
//! reduction is exactly 500 ms.

use crate::audio::{silence, tone};
use crate::backends::LatencyModel;
use crate::context::ContextConfig;
use crate::controller::{ControllerConfig, ControllerState};
use crate::session::{ScriptedContent, Session, SessionConfig, SessionError};
use crate::tokenizer::{fnv1a_64, SegmenterConfig};
use crate::vad::VadConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

/// One speech burst and the silence that follows it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub speech_ms: u64,
    pub trailing_silence_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTool {
    pub name: String,
    pub latency_ms: u64,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTurn {
    pub speech_segments: Vec<SpeechSegment>,
    #[serde(default)]
    pub transcript: String,
    #[serde(default)]
    pub scripted_response: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptedTool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendLatencies {
    pub chat: LatencyModel,
    pub asr: LatencyModel,
    pub tts: LatencyModel,
}

impl Default for BackendLatencies {
    fn default() -> Self {
        Self {
            chat: LatencyModel::fixed(500, 0),
            asr: LatencyModel::fixed(300, 0),
            tts: LatencyModel::fixed(200, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub turns: Vec<ScenarioTurn>,
    #[serde(default)]
    pub backends: BackendLatencies,
    #[serde(default)]
    pub vad: VadConfig,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub system_prompt: Option<String>,
    #[serde(default)]
    pub tool_timeout_ms: Option<u64>,
}

fn default_budget() -> usize {
    4096
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("simulation stalled in turn {turn} (state {state})")]
    Stalled { turn: usize, state: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("cannot compare runs: {0}")]
    Comparison(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, SimError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Stable identity over the scripted content (run parameters like the
    /// seed are not part of it).
    pub fn fingerprint(&self) -> u64 {
        fnv1a_64(serde_json::to_string(self).expect("scenario serializes").as_bytes())
    }

    /// Collect every violation instead of stopping at the first.
    pub fn validate(&self) -> Result<(), SimError> {
        let mut violations = Vec::new();
        if let Err(e) = self.vad.validate() {
            violations.push(e.to_string());
        }
        if self.turns.is_empty() {
            violations.push("scenario has no turns".to_string());
        }
        let frame = self.vad.frame_ms as u64;
        let end = self.vad.end_threshold_ms as u64;
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.speech_segments.is_empty() {
                violations.push(format!("turn {i}: no speech segments"));
                continue;
            }
            for (j, seg) in turn.speech_segments.iter().enumerate() {
                if seg.speech_ms == 0 {
                    violations.push(format!("turn {i} segment {j}: speech_ms is zero"));
                }
                if frame > 0 && (seg.speech_ms % frame != 0 || seg.trailing_silence_ms % frame != 0) {
                    violations.push(format!(
                        "turn {i} segment {j}: durations must be multiples of frame_ms ({frame})"
                    ));
                }
                let last = j + 1 == turn.speech_segments.len();
                if last && seg.trailing_silence_ms < end {
                    violations.push(format!(
                        "turn {i}: final trailing_silence_ms {} is below end_threshold_ms {end}",
                        seg.trailing_silence_ms
                    ));
                }
                if !last && seg.trailing_silence_ms >= end {
                    violations.push(format!(
                        "turn {i} segment {j}: mid-turn silence {} would end the turn (>= {end})",
                        seg.trailing_silence_ms
                    ));
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(SimError::Validation(violations))
        }
    }
}

/// Per-turn measurements in scenario order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnReport {
    pub turn_id: usize,
    pub latency_ms: Option<u64>,
    pub speculations: u32,
    pub committed: u32,
    pub cancelled: u32,
    pub audio_tokens: usize,
    pub transcript_tokens: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub speculation_enabled: bool,
    pub seed: u64,
    pub scenario_fingerprint: u64,
    pub turns: Vec<TurnReport>,
    pub speculations_issued: usize,
    pub speculations_committed: usize,
    pub speculations_cancelled: usize,
    pub commit_rate: f64,
    pub mean_latency_ms: f64,
    /// Mean per-turn saving against the no-speculation control run of the
    /// same scenario and seed. Zero for a control run itself.
    pub mean_latency_reduction_ms: f64,
    /// Sum of transcript token estimates over finalized turns.
    pub history_text_tokens: usize,
    /// Sum of raw audio token counts over the same turns (the all-audio
    /// counterfactual).
    pub history_audio_tokens: usize,
}

impl SimulationReport {
    /// One row per turn: `turn_id,latency_ms,speculations,committed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("turn_id,latency_ms,speculations,committed\n");
        for t in &self.turns {
            let latency = t.latency_ms.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", t.turn_id, latency, t.speculations, t.committed));
        }
        out
    }
}

/// A completed run: the measured report plus the full event/action trace.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub report: SimulationReport,
    pub trace: String,
}

/// Extra silence the driver may stream past a scripted turn while waiting
/// for the reply to finish, per turn.
const TURN_DRAIN_CAP_MS: u64 = 120_000;

/// Replay a scenario through the full pipeline. With speculation enabled
/// this internally also executes the control run to fill in the latency
/// reduction.
pub fn run(scenario: &Scenario, speculation_enabled: bool, seed: u64) -> Result<SimRun, SimError> {
    scenario.validate()?;
    let mut outcome = run_single(scenario, speculation_enabled, seed)?;
    if speculation_enabled {
        let control = run_single(scenario, false, seed)?;
        let mut deltas = Vec::new();
        for (a, b) in outcome.report.turns.iter().zip(control.report.turns.iter()) {
            if let (Some(with), Some(without)) = (a.latency_ms, b.latency_ms) {
                deltas.push(without as i64 - with as i64);
            }
        }
        if !deltas.is_empty() {
            outcome.report.mean_latency_reduction_ms =
                deltas.iter().sum::<i64>() as f64 / deltas.len() as f64;
        }
    }
    Ok(outcome)
}

fn run_single(scenario: &Scenario, speculation_enabled: bool, seed: u64) -> Result<SimRun, SimError> {
    let cfg = SessionConfig {
        vad: scenario.vad.clone(),
        segmenter: SegmenterConfig { salt_ling: seed, salt_sem: seed ^ 1, ..Default::default() },
        controller: ControllerConfig {
            speculation_enabled,
            prompt_budget: scenario.budget,
            system_prompt: scenario.system_prompt.clone(),
            context: ContextConfig::default(),
        },
        chat_latency: scenario.backends.chat,
        asr_latency: scenario.backends.asr,
        tts_latency: scenario.backends.tts,
        tool_timeout_ms: scenario.tool_timeout_ms,
        seed,
        external_backends: false,
    };
    let mut tools = BTreeMap::new();
    for turn in &scenario.turns {
        for t in &turn.tool_calls {
            tools.insert(t.name.clone(), (t.latency_ms, t.payload.clone()));
        }
    }
    let content = ScriptedContent {
        responses: scenario.turns.iter().map(|t| t.scripted_response.clone()).collect(),
        transcripts: scenario.turns.iter().map(|t| t.transcript.clone()).collect(),
        tools,
    };

    let mut session = Session::new(cfg, content)?;
    for (i, turn) in scenario.turns.iter().enumerate() {
        for seg in &turn.speech_segments {
            session.push_audio(&tone(seg.speech_ms, 440.0, 0.5))?;
            session.push_audio(&silence(seg.trailing_silence_ms))?;
        }
        // Stream silence while the bot replies; the next turn begins only
        // after the pipeline returns to Silence and the queue is empty.
        let mut extra = 0u64;
        while session.state() != ControllerState::Silence || !session.quiescent() {
            session.push_audio(&silence(scenario.vad.frame_ms as u64))?;
            extra += scenario.vad.frame_ms as u64;
            if extra > TURN_DRAIN_CAP_MS {
                return Err(SimError::Stalled { turn: i, state: session.state().as_str().to_string() });
            }
        }
    }
    session.end_input()?;

    let ledger = session.controller().ledger();
    let issued = ledger.issued();
    let committed = ledger.committed();
    let cancelled = ledger.cancelled();

    let mut turns = Vec::new();
    let mut latencies = Vec::new();
    let mut text_tokens = 0usize;
    let mut audio_tokens = 0usize;
    for (i, m) in session.metrics().iter().enumerate() {
        let latency = m.response_latency_ms();
        if let Some(l) = latency {
            latencies.push(l);
        }
        let committed_count = u32::from(m.committed_spec.is_some());
        turns.push(TurnReport {
            turn_id: i + 1,
            latency_ms: latency,
            speculations: m.speculations_issued,
            committed: committed_count,
            cancelled: m.speculations_issued.saturating_sub(committed_count),
            audio_tokens: m.audio_tokens,
            transcript_tokens: m.transcript_estimate,
        });
        text_tokens += m.transcript_estimate.unwrap_or(0);
        audio_tokens += m.audio_tokens;
    }
    let mean_latency_ms = if latencies.is_empty() {
        0.0
    } else {
        latencies.iter().sum::<u64>() as f64 / latencies.len() as f64
    };

    let report = SimulationReport {
        speculation_enabled,
        seed,
        scenario_fingerprint: scenario.fingerprint(),
        turns,
        speculations_issued: issued,
        speculations_committed: committed,
        speculations_cancelled: cancelled,
        commit_rate: if issued == 0 { 0.0 } else { committed as f64 / issued as f64 },
        mean_latency_ms,
        mean_latency_reduction_ms: 0.0,
        history_text_tokens: text_tokens,
        history_audio_tokens: audio_tokens,
    };
    Ok(SimRun { report, trace: session.trace().render() })
}

/// Per-turn latency comparison between two runs of the same scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunDiff {
    pub per_turn_delta_ms: Vec<i64>,
    pub mean_delta_ms: f64,
}

/// Latency deltas `a - b`, exact arithmetic. Both reports must come from
/// the same scenario with the same seed.
pub fn compare_runs(a: &SimulationReport, b: &SimulationReport) -> Result<RunDiff, SimError> {
    if a.scenario_fingerprint != b.scenario_fingerprint {
        return Err(SimError::Comparison("reports come from different scenarios".into()));
    }
    if a.seed != b.seed {
        return Err(SimError::Comparison("reports use different seeds".into()));
    }
    if a.turns.len() != b.turns.len() {
        return Err(SimError::Comparison(format!(
            "turn counts differ: {} vs {}",
            a.turns.len(),
            b.turns.len()
        )));
    }
    let mut deltas = Vec::with_capacity(a.turns.len());
    for (ta, tb) in a.turns.iter().zip(b.turns.iter()) {
        let da = ta.latency_ms.unwrap_or(0) as i64;
        let db = tb.latency_ms.unwrap_or(0) as i64;
        deltas.push(da - db);
    }
    let mean = if deltas.is_empty() {
        0.0
    } else {
        deltas.iter().sum::<i64>() as f64 / deltas.len() as f64
    };
    Ok(RunDiff { per_turn_delta_ms: deltas, mean_delta_ms: mean })
}

/// Parameters of the random pause process used by the scenario generator.
/// Per turn, the number of resume events is geometric: after each pause the
/// user resumes speaking with probability `resume_probability`, so a turn
/// has on average `1 / (1 - q)` pauses and the expected commit rate is
/// `1 - q`... issued speculations equal pauses, commits equal turns, giving
/// commit_rate → (1 - q). With q = 0.6 that is 0.4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PauseProcessParams {
    pub resume_probability: f64,
    pub speech_ms_bounds: (u64, u64),
    pub gap_ms_bounds: (u64, u64),
    pub final_silence_extra_ms: u64,
}

impl Default for PauseProcessParams {
    fn default() -> Self {
        Self {
            resume_probability: 0.6,
            speech_ms_bounds: (400, 1600),
            gap_ms_bounds: (240, 660),
            final_silence_extra_ms: 100,
        }
    }
}

/// Build a reproducible scenario from the pause process.
pub fn generate_scenario(
    params: &PauseProcessParams,
    n_turns: usize,
    seed: u64,
) -> Result<Scenario, SimError> {
    let mut violations = Vec::new();
    let q = params.resume_probability;
    if !(0.0..1.0).contains(&q) {
        violations.push(format!("resume_probability {q} must be in [0, 1)"));
    }
    if n_turns == 0 {
        violations.push("n_turns must be at least 1".to_string());
    }
    let vad = VadConfig::default();
    let frame = vad.frame_ms as u64;
    let (smin, smax) = params.speech_ms_bounds;
    let (gmin, gmax) = params.gap_ms_bounds;
    if smin < frame || smin > smax {
        violations.push(format!("speech_ms_bounds ({smin}, {smax}) invalid"));
    }
    let pause = vad.pause_threshold_ms as u64;
    let end = vad.end_threshold_ms as u64;
    if gmin < pause || gmax >= end || gmin > gmax {
        violations.push(format!(
            "gap_ms_bounds ({gmin}, {gmax}) must lie within [{pause}, {end})"
        ));
    }
    if !violations.is_empty() {
        return Err(SimError::Validation(violations));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = |lo: u64, hi: u64, rng: &mut ChaCha8Rng| rng.gen_range(lo / frame..=hi / frame) * frame;
    let mut turns = Vec::with_capacity(n_turns);
    for i in 0..n_turns {
        let mut resumes = 0usize;
        while rng.gen::<f64>() < q {
            resumes += 1;
        }
        let mut speech_segments = Vec::with_capacity(resumes + 1);
        for j in 0..=resumes {
            let speech_ms = frames(smin, smax, &mut rng);
            let trailing_silence_ms = if j < resumes {
                frames(gmin, gmax, &mut rng)
            } else {
                end + params.final_silence_extra_ms
            };
            speech_segments.push(SpeechSegment { speech_ms, trailing_silence_ms });
        }
        turns.push(ScenarioTurn {
            speech_segments,
            transcript: format!("user words for turn {i}"),
            scripted_response: format!("Reply {i}."),
            tool_calls: Vec::new(),
        });
    }
    Ok(Scenario {
        turns,
        backends: BackendLatencies::default(),
        vad,
        budget: default_budget(),
        system_prompt: None,
        tool_timeout_ms: None,
    })
}
