//! Command-line interface.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad arguments, missing
//! or malformed input files, invalid scenarios), 1 on runtime errors.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use step_orch_core::sim::{self, PauseProcessParams, Scenario, SimError};
use step_orch_core::tokenizer::{SegmenterConfig, StreamTokenizer};
use step_orch_core::tokens::write_token_lines;
use step_orch_core::wav::parse_wav_or_raw;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "step-orch",
    version,
    about = "Duplex speech orchestration: simulate scripted conversations, serve live sessions, tokenize audio"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Replay a scenario file and report latency and commit-rate metrics.
    Simulate {
        /// Scenario JSON path.
        scenario: PathBuf,
        /// Disable speculative generation (the control configuration).
        #[arg(long)]
        no_speculation: bool,
        /// Seed for the codecs and any jittered latency models.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write one CSV row per turn.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Serve framed duplex sessions over TCP.
    Serve {
        #[arg(long)]
        port: u16,
        /// Config JSON path (overridden by STEP_ORCH_CONFIG).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Convert a WAV (or raw s16le) file to unified token ids.
    Tokenize {
        input: PathBuf,
        /// Write ids here instead of stdout (one per line).
        #[arg(long)]
        tokens: Option<PathBuf>,
    },
    /// Print the event/action log of a scenario run.
    Trace {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a random scenario from the pause process.
    Generate {
        /// Output scenario JSON path.
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        turns: usize,
        /// Probability that the user resumes speaking after a pause.
        #[arg(long, default_value_t = 0.6)]
        resume_prob: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn load_scenario(path: &Path) -> Result<Scenario, i32> {
    match Scenario::from_path(path) {
        Ok(s) => Ok(s),
        Err(e) => {
            eprintln!("error: {e}");
            Err(EXIT_VALIDATION)
        }
    }
}

fn sim_exit(e: &SimError) -> i32 {
    match e {
        SimError::Validation(_) | SimError::Parse(_) | SimError::Io(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Simulate { scenario, no_speculation, seed, report, csv } => {
            let scenario = match load_scenario(&scenario) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let outcome = match sim::run(&scenario, !no_speculation, seed) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return sim_exit(&e);
                }
            };
            let r = &outcome.report;
            println!("turns:                     {}", r.turns.len());
            println!("speculations issued:       {}", r.speculations_issued);
            println!("speculations committed:    {}", r.speculations_committed);
            println!("speculations cancelled:    {}", r.speculations_cancelled);
            println!("commit_rate:               {:.4}", r.commit_rate);
            println!("mean_latency_ms:           {:.1}", r.mean_latency_ms);
            println!("mean_latency_reduction_ms: {:.1}", r.mean_latency_reduction_ms);
            println!(
                "history tokens (text/audio): {}/{}",
                r.history_text_tokens, r.history_audio_tokens
            );
            if let Some(path) = report {
                let text = serde_json::to_string_pretty(r).expect("report serializes");
                if let Err(e) = std::fs::write(&path, text) {
                    eprintln!("error: cannot write report {}: {e}", path.display());
                    return EXIT_RUNTIME;
                }
            }
            if let Some(path) = csv {
                if let Err(e) = std::fs::write(&path, r.to_csv()) {
                    eprintln!("error: cannot write csv {}: {e}", path.display());
                    return EXIT_RUNTIME;
                }
            }
            EXIT_OK
        }

        Command::Serve { port, config } => {
            let cfg = match crate::config::load_config(config.as_deref()) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_VALIDATION;
                }
            };
            match crate::server::serve(&format!("0.0.0.0:{port}"), cfg) {
                Ok(handle) => {
                    eprintln!("listening on {}", handle.addr());
                    // Serve until killed.
                    loop {
                        std::thread::sleep(std::time::Duration::from_secs(3600));
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_RUNTIME
                }
            }
        }

        Command::Tokenize { input, tokens } => {
            let bytes = match std::fs::read(&input) {
                Ok(b) => b,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", input.display());
                    return EXIT_VALIDATION;
                }
            };
            let samples = match parse_wav_or_raw(&bytes) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_VALIDATION;
                }
            };
            let mut tokenizer =
                StreamTokenizer::new(SegmenterConfig::default()).expect("default config is valid");
            let mut all = Vec::new();
            if !samples.is_empty() {
                let frame = step_orch_core::audio::PcmFrame::new(samples, 0).expect("non-empty");
                match tokenizer.push_pcm(&frame) {
                    Ok(t) => all.extend(t),
                    Err(e) => {
                        eprintln!("error: {e}");
                        return EXIT_RUNTIME;
                    }
                }
            }
            all.extend(tokenizer.flush().expect("first flush"));
            let text = write_token_lines(&all);
            match tokens {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return EXIT_RUNTIME;
                    }
                }
                None => print!("{text}"),
            }
            EXIT_OK
        }

        Command::Trace { scenario, seed } => {
            let scenario = match load_scenario(&scenario) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match sim::run(&scenario, true, seed) {
                Ok(outcome) => {
                    print!("{}", outcome.trace);
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    sim_exit(&e)
                }
            }
        }

        Command::Generate { out, turns, resume_prob, seed } => {
            let params = PauseProcessParams { resume_probability: resume_prob, ..Default::default() };
            match sim::generate_scenario(&params, turns, seed) {
                Ok(scenario) => {
                    let text = serde_json::to_string_pretty(&scenario).expect("scenario serializes");
                    if let Err(e) = std::fs::write(&out, text) {
                        eprintln!("error: cannot write {}: {e}", out.display());
                        return EXIT_RUNTIME;
                    }
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    sim_exit(&e)
                }
            }
        }
    }
}
