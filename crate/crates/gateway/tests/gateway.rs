//! Loopback tests of the framed TCP service with mock backends.

use std::io::{Read, Write};
use std::net::TcpStream;
use step_orch_gateway::config::GatewayConfig;
use step_orch_gateway::frame::{encode_frame, Frame, FrameDecoder, FrameKind};
use step_orch_gateway::server::serve;

fn tone(ms: u64) -> Vec<i16> {
    (0..ms as usize * 16)
        .map(|i| (0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin() * 32767.0) as i16)
        .collect()
}

fn silence(ms: u64) -> Vec<i16> {
    vec![0i16; ms as usize * 16]
}

fn pcm_bytes(samples: &[i16]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.to_le_bytes()).collect()
}

fn send(stream: &mut TcpStream, kind: FrameKind, payload: &[u8]) {
    stream.write_all(&encode_frame(kind, payload).unwrap()).unwrap();
}

/// Read frames until the server closes the connection.
fn read_to_end(stream: &mut TcpStream) -> Vec<Frame> {
    let mut decoder = FrameDecoder::new();
    let mut frames = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => frames.extend(decoder.push(&buf[..n]).unwrap()),
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => continue,
            Err(_) => break,
        }
    }
    frames
}

fn state_payloads(frames: &[Frame]) -> Vec<String> {
    frames
        .iter()
        .filter(|f| f.kind == FrameKind::State)
        .map(|f| String::from_utf8_lossy(&f.payload).to_string())
        .collect()
}

/// Drive one single-pause utterance and return everything the server sent.
fn run_single_pause_session(addr: std::net::SocketAddr) -> Vec<Frame> {
    let mut stream = TcpStream::connect(addr).unwrap();
    // 1 s tone + 800 ms silence, delivered in 200 ms slices.
    let mut audio = tone(1000);
    audio.extend(silence(800));
    for chunk in audio.chunks(200 * 16) {
        send(&mut stream, FrameKind::AudioIn, &pcm_bytes(chunk));
    }
    send(&mut stream, FrameKind::Control, br#"{"op":"end"}"#);
    read_to_end(&mut stream)
}

#[test]
fn loopback_single_pause_walks_the_state_machine() {
    let handle = serve("127.0.0.1:0", GatewayConfig::default()).unwrap();
    let frames = run_single_pause_session(handle.addr());

    assert_eq!(
        state_payloads(&frames),
        vec!["Silence", "UserSpeaking", "UserPaused", "BotReplying", "Silence"]
    );
    assert!(frames.iter().any(|f| f.kind == FrameKind::TextPartial));
    assert!(frames.iter().any(|f| f.kind == FrameKind::AudioOut));
    // Final metrics summary.
    let last = frames.last().unwrap();
    assert_eq!(last.kind, FrameKind::Metrics);
    assert!(String::from_utf8_lossy(&last.payload).contains("\"session\":\"ended\""));

    handle.shutdown();
}

#[test]
fn identical_sessions_produce_identical_frame_sequences() {
    let handle = serve("127.0.0.1:0", GatewayConfig::default()).unwrap();
    let a = run_single_pause_session(handle.addr());
    let b = run_single_pause_session(handle.addr());
    assert_eq!(a, b);
    handle.shutdown();
}

#[test]
fn concurrent_sessions_are_isolated() {
    let handle = serve("127.0.0.1:0", GatewayConfig::default()).unwrap();
    let addr = handle.addr();

    // One client speaks, the other stays silent, concurrently.
    let speaking = std::thread::spawn(move || run_single_pause_session(addr));
    let silent = std::thread::spawn(move || {
        let mut stream = TcpStream::connect(addr).unwrap();
        for chunk in silence(1000).chunks(200 * 16) {
            send(&mut stream, FrameKind::AudioIn, &pcm_bytes(chunk));
        }
        send(&mut stream, FrameKind::Control, br#"{"op":"end"}"#);
        read_to_end(&mut stream)
    });

    let speaking_frames = speaking.join().unwrap();
    let silent_frames = silent.join().unwrap();
    assert_eq!(
        state_payloads(&speaking_frames),
        vec!["Silence", "UserSpeaking", "UserPaused", "BotReplying", "Silence"]
    );
    // The silent session never leaves Silence and hears no reply.
    assert_eq!(state_payloads(&silent_frames), vec!["Silence"]);
    assert!(!silent_frames.iter().any(|f| f.kind == FrameKind::AudioOut));

    handle.shutdown();
}

#[test]
fn audio_after_end_is_a_frame_error() {
    let handle = serve("127.0.0.1:0", GatewayConfig::default()).unwrap();
    let mut stream = TcpStream::connect(handle.addr()).unwrap();

    // End plus a trailing AUDIO_IN in the same batch.
    let mut bytes = encode_frame(FrameKind::Control, br#"{"op":"end"}"#).unwrap();
    bytes.extend(encode_frame(FrameKind::AudioIn, &pcm_bytes(&silence(20))).unwrap());
    stream.write_all(&bytes).unwrap();

    let frames = read_to_end(&mut stream);
    let error_frame = frames
        .iter()
        .rev()
        .find(|f| f.kind == FrameKind::Control)
        .expect("error control frame");
    assert!(String::from_utf8_lossy(&error_frame.payload).contains("error"));
    handle.shutdown();
}

#[test]
fn unexpected_inbound_kind_closes_with_error() {
    let handle = serve("127.0.0.1:0", GatewayConfig::default()).unwrap();
    let mut stream = TcpStream::connect(handle.addr()).unwrap();
    send(&mut stream, FrameKind::AudioOut, b"not yours to send");
    let frames = read_to_end(&mut stream);
    let last = frames.last().unwrap();
    assert_eq!(last.kind, FrameKind::Control);
    assert!(String::from_utf8_lossy(&last.payload).contains("error"));
    handle.shutdown();
}

#[test]
fn tool_call_session_emits_tool_frames() {
    let mut config = GatewayConfig::default();
    config.backends.mock.responses =
        vec!["Checking.<tool_call>weather{\"city\":\"HK\"}</tool_call> Done.".into()];
    config.backends.mock.tools.insert(
        "weather".into(),
        step_orch_gateway::config::ToolScript { latency_ms: 400, payload: "{\"temp_c\":28}".into() },
    );
    let handle = serve("127.0.0.1:0", config).unwrap();
    let frames = run_single_pause_session(handle.addr());

    let tool_call = frames.iter().find(|f| f.kind == FrameKind::ToolCall).expect("tool call frame");
    let call: serde_json::Value = serde_json::from_slice(&tool_call.payload).unwrap();
    assert_eq!(call["name"], "weather");

    let tool_result =
        frames.iter().find(|f| f.kind == FrameKind::ToolResult).expect("tool result frame");
    let result: serde_json::Value = serde_json::from_slice(&tool_result.payload).unwrap();
    assert_eq!(result["payload"], "{\"temp_c\":28}");

    handle.shutdown();
}

#[test]
fn overflow_drops_oldest_audio_and_reports_it() {
    // A long reply whose audio all lands in the end-of-input drain burst:
    // 70 chunks of 16 chars each, well past the 64-frame window.
    let mut config = GatewayConfig::default();
    config.backends.mock.responses = vec!["x".repeat(16 * 70)];
    let handle = serve("127.0.0.1:0", config).unwrap();

    let mut stream = TcpStream::connect(handle.addr()).unwrap();
    let mut audio = tone(1000);
    audio.extend(silence(800));
    for chunk in audio.chunks(200 * 16) {
        send(&mut stream, FrameKind::AudioIn, &pcm_bytes(chunk));
    }
    // End immediately: the entire reply drains in one burst.
    send(&mut stream, FrameKind::Control, br#"{"op":"end"}"#);
    let frames = read_to_end(&mut stream);

    let audio_out = frames.iter().filter(|f| f.kind == FrameKind::AudioOut).count();
    assert!(audio_out < 70, "expected drops, got {audio_out} audio frames");
    let dropped = frames.iter().any(|f| {
        f.kind == FrameKind::Metrics
            && String::from_utf8_lossy(&f.payload).contains("dropped_audio_frames")
    });
    assert!(dropped, "drop metrics frame missing");
    handle.shutdown();
}
