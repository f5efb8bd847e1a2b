//! Minimal WAV reading and writing for fixtures and the `tokenize` command.
//!
//! Only the canonical 44-byte header layout is understood: RIFF/WAVE with a
//! 16-byte `fmt ` chunk followed immediately by `data`. The format must be
//! 16-bit mono PCM at 16 kHz; all other header fields (sizes, byte rate,
//! block align) are ignored and the payload is taken from the actual stream
//! length. Inputs without a RIFF magic are treated as raw little-endian
//! s16 samples.

use crate::audio::SAMPLE_RATE;
use thiserror::Error;

/// Canonical header length.
pub const WAV_HEADER_LEN: usize = 44;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("input too short for a {WAV_HEADER_LEN}-byte WAV header ({0} bytes)")]
    TooShort(usize),
    #[error("bad magic at offset {offset}: expected {expected:?}")]
    BadMagic { offset: usize, expected: &'static str },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("odd PCM byte count {0}")]
    OddLength(usize),
}

fn check_magic(bytes: &[u8], offset: usize, expected: &'static str) -> Result<(), WavError> {
    if &bytes[offset..offset + 4] != expected.as_bytes() {
        return Err(WavError::BadMagic { offset, expected });
    }
    Ok(())
}

fn samples_from_le(bytes: &[u8]) -> Result<Vec<i16>, WavError> {
    if bytes.len() % 2 != 0 {
        return Err(WavError::OddLength(bytes.len()));
    }
    Ok(bytes.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect())
}

/// Parse a canonical-header WAV payload into samples.
pub fn parse_wav(bytes: &[u8]) -> Result<Vec<i16>, WavError> {
    if bytes.len() < WAV_HEADER_LEN {
        return Err(WavError::TooShort(bytes.len()));
    }
    check_magic(bytes, 0, "RIFF")?;
    check_magic(bytes, 8, "WAVE")?;
    check_magic(bytes, 12, "fmt ")?;
    check_magic(bytes, 36, "data")?;

    let fmt_len = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    if fmt_len != 16 {
        return Err(WavError::Unsupported(format!("fmt chunk length {fmt_len} (expected 16)")));
    }
    let audio_format = u16::from_le_bytes(bytes[20..22].try_into().unwrap());
    if audio_format != 1 {
        return Err(WavError::Unsupported(format!("audio format {audio_format} (expected PCM)")));
    }
    let channels = u16::from_le_bytes(bytes[22..24].try_into().unwrap());
    if channels != 1 {
        return Err(WavError::Unsupported(format!("{channels} channels (expected mono)")));
    }
    let sample_rate = u32::from_le_bytes(bytes[24..28].try_into().unwrap());
    if sample_rate != SAMPLE_RATE {
        return Err(WavError::Unsupported(format!(
            "sample rate {sample_rate} Hz (expected {SAMPLE_RATE} Hz)"
        )));
    }
    let bits = u16::from_le_bytes(bytes[34..36].try_into().unwrap());
    if bits != 16 {
        return Err(WavError::Unsupported(format!("{bits} bits per sample (expected 16)")));
    }
    samples_from_le(&bytes[WAV_HEADER_LEN..])
}

/// Accept either a canonical-header WAV or raw s16le samples.
pub fn parse_wav_or_raw(bytes: &[u8]) -> Result<Vec<i16>, WavError> {
    if bytes.len() >= 4 && &bytes[0..4] == b"RIFF" {
        parse_wav(bytes)
    } else {
        samples_from_le(bytes)
    }
}

/// Write samples under the canonical 44-byte header.
pub fn write_wav(samples: &[i16]) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(WAV_HEADER_LEN + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::tone;

    #[test]
    fn round_trip() {
        let samples = tone(100, 440.0, 0.5);
        let bytes = write_wav(&samples);
        assert_eq!(bytes.len(), WAV_HEADER_LEN + samples.len() * 2);
        assert_eq!(parse_wav(&bytes).unwrap(), samples);
        assert_eq!(parse_wav_or_raw(&bytes).unwrap(), samples);
    }

    #[test]
    fn raw_pcm_accepted() {
        let samples = vec![1i16, -2, 300];
        let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
        assert_eq!(parse_wav_or_raw(&bytes).unwrap(), samples);
    }

    #[test]
    fn size_fields_are_ignored() {
        let mut bytes = write_wav(&tone(100, 440.0, 0.5));
        // Corrupt RIFF size, byte rate, block align and data size; the
        // parser must not care.
        bytes[4..8].copy_from_slice(&0xdead_beefu32.to_le_bytes());
        bytes[28..32].copy_from_slice(&7u32.to_le_bytes());
        bytes[32..34].copy_from_slice(&9u16.to_le_bytes());
        bytes[40..44].copy_from_slice(&1u32.to_le_bytes());
        assert!(parse_wav(&bytes).is_ok());
    }

    #[test]
    fn rejects_wrong_format() {
        let mut stereo = write_wav(&[0i16; 10]);
        stereo[22..24].copy_from_slice(&2u16.to_le_bytes());
        assert!(matches!(parse_wav(&stereo), Err(WavError::Unsupported(_))));

        let mut rate = write_wav(&[0i16; 10]);
        rate[24..28].copy_from_slice(&44_100u32.to_le_bytes());
        assert!(matches!(parse_wav(&rate), Err(WavError::Unsupported(_))));

        assert_eq!(parse_wav(&[0u8; 10]), Err(WavError::TooShort(10)));
        assert_eq!(parse_wav_or_raw(&[1u8, 2, 3]), Err(WavError::OddLength(3)));
    }
}
