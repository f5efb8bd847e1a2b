//! Dual-codebook audio tokens, the unified vocabulary, and the 2:3
//! interleaving transform.
//!
//! Two token streams exist: a linguistic stream drawn from a 1024-entry
//! codebook (nominal 16.7 Hz) and a semantic stream drawn from a 4096-entry
//! codebook (nominal 25 Hz). Both map into one unified id space of 5,120
//! values — linguistic ids occupy `[0, 1024)`, semantic ids occupy
//! `[1024, 5120)`. The streams merge into groups of five tokens, two
//! linguistic followed by three semantic, realizing the 2:3 temporal
//! alignment between the rates.

use thiserror::Error;

/// Linguistic codebook size.
pub const LINGUISTIC_CODEBOOK: u32 = 1024;
/// Semantic codebook size.
pub const SEMANTIC_CODEBOOK: u32 = 4096;
/// Total unified vocabulary: linguistic block then semantic block.
pub const UNIFIED_VOCAB: u32 = LINGUISTIC_CODEBOOK + SEMANTIC_CODEBOOK;
/// Linguistic tokens per interleave group.
pub const GROUP_LINGUISTIC: usize = 2;
/// Semantic tokens per interleave group.
pub const GROUP_SEMANTIC: usize = 3;
/// Tokens per interleave group.
pub const GROUP_LEN: usize = GROUP_LINGUISTIC + GROUP_SEMANTIC;

/// Nominal linguistic token rate in Hz. Metadata only; no arithmetic in
/// this crate depends on the fractional value, only on the 2:3 ratio.
pub const LINGUISTIC_RATE_HZ: f64 = 16.7;
/// Nominal semantic token rate in Hz.
pub const SEMANTIC_RATE_HZ: f64 = 25.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("{codebook} id {id} out of range (codebook size {size})")]
    IdOutOfRange { codebook: &'static str, id: u32, size: u32 },
    #[error(
        "cannot interleave {linguistic} linguistic with {semantic} semantic tokens \
         (need 3·L = 2·S; largest complete group count {complete_groups})"
    )]
    AlignmentMismatch { linguistic: usize, semantic: usize, complete_groups: usize },
    #[error("malformed group structure at index {index}: expected {expected} token")]
    MalformedGroup { index: usize, expected: &'static str },
    #[error("sequence length {len} is not a multiple of {GROUP_LEN}")]
    IncompleteGroup { len: usize },
}

/// A token from the 1024-entry linguistic codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinguisticToken(u32);

impl LinguisticToken {
    pub fn new(id: u32) -> Result<Self, TokenError> {
        if id >= LINGUISTIC_CODEBOOK {
            return Err(TokenError::IdOutOfRange {
                codebook: "linguistic",
                id,
                size: LINGUISTIC_CODEBOOK,
            });
        }
        Ok(Self(id))
    }

    pub fn id(self) -> u32 {
        self.0
    }
}

/// A token from the 4096-entry semantic codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SemanticToken(u32);

impl SemanticToken {
    pub fn new(id: u32) -> Result<Self, TokenError> {
        if id >= SEMANTIC_CODEBOOK {
            return Err(TokenError::IdOutOfRange {
                codebook: "semantic",
                id,
                size: SEMANTIC_CODEBOOK,
            });
        }
        Ok(Self(id))
    }

    pub fn id(self) -> u32 {
        self.0
    }
}

/// Either kind of discrete audio token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AudioToken {
    Linguistic(LinguisticToken),
    Semantic(SemanticToken),
}

impl AudioToken {
    pub fn linguistic(id: u32) -> Result<Self, TokenError> {
        LinguisticToken::new(id).map(AudioToken::Linguistic)
    }

    pub fn semantic(id: u32) -> Result<Self, TokenError> {
        SemanticToken::new(id).map(AudioToken::Semantic)
    }

    pub fn is_linguistic(self) -> bool {
        matches!(self, AudioToken::Linguistic(_))
    }

    /// Position of this token in the unified vocabulary: linguistic ids map
    /// to themselves, semantic ids are offset by the linguistic block.
    pub fn unified_id(self) -> UnifiedId {
        match self {
            AudioToken::Linguistic(t) => UnifiedId(t.0),
            AudioToken::Semantic(t) => UnifiedId(LINGUISTIC_CODEBOOK + t.0),
        }
    }
}

/// An id in the unified 5,120-entry vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnifiedId(u32);

impl UnifiedId {
    pub fn new(value: u32) -> Result<Self, TokenError> {
        if value >= UNIFIED_VOCAB {
            return Err(TokenError::IdOutOfRange {
                codebook: "unified",
                id: value,
                size: UNIFIED_VOCAB,
            });
        }
        Ok(Self(value))
    }

    pub fn value(self) -> u32 {
        self.0
    }
}

/// Inverse of [`AudioToken::unified_id`]. Total over valid `UnifiedId`s.
pub fn from_unified(id: UnifiedId) -> AudioToken {
    if id.0 < LINGUISTIC_CODEBOOK {
        AudioToken::Linguistic(LinguisticToken(id.0))
    } else {
        AudioToken::Semantic(SemanticToken(id.0 - LINGUISTIC_CODEBOOK))
    }
}

/// A token stream arranged in complete `[L, L, S, S, S]` groups.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InterleavedSequence {
    tokens: Vec<AudioToken>,
}

impl InterleavedSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Merge the two codebook streams, two linguistic then three semantic
    /// per group. Both inputs must cover the same whole number of groups.
    pub fn interleave(
        ling: &[LinguisticToken],
        sem: &[SemanticToken],
    ) -> Result<Self, TokenError> {
        if ling.len() * GROUP_SEMANTIC != sem.len() * GROUP_LINGUISTIC
            || ling.len() % GROUP_LINGUISTIC != 0
        {
            let complete_groups =
                (ling.len() / GROUP_LINGUISTIC).min(sem.len() / GROUP_SEMANTIC);
            return Err(TokenError::AlignmentMismatch {
                linguistic: ling.len(),
                semantic: sem.len(),
                complete_groups,
            });
        }
        let group_count = ling.len() / GROUP_LINGUISTIC;
        let mut tokens = Vec::with_capacity(group_count * GROUP_LEN);
        for k in 0..group_count {
            for j in 0..GROUP_LINGUISTIC {
                tokens.push(AudioToken::Linguistic(ling[GROUP_LINGUISTIC * k + j]));
            }
            for j in 0..GROUP_SEMANTIC {
                tokens.push(AudioToken::Semantic(sem[GROUP_SEMANTIC * k + j]));
            }
        }
        Ok(Self { tokens })
    }

    /// Validate an existing token vector against the group structure.
    pub fn from_tokens(tokens: Vec<AudioToken>) -> Result<Self, TokenError> {
        validate_groups(&tokens)?;
        Ok(Self { tokens })
    }

    /// Split back into the two codebook streams, preserving order.
    pub fn deinterleave(&self) -> (Vec<LinguisticToken>, Vec<SemanticToken>) {
        let mut ling = Vec::with_capacity(self.group_count() * GROUP_LINGUISTIC);
        let mut sem = Vec::with_capacity(self.group_count() * GROUP_SEMANTIC);
        for t in &self.tokens {
            match t {
                AudioToken::Linguistic(l) => ling.push(*l),
                AudioToken::Semantic(s) => sem.push(*s),
            }
        }
        (ling, sem)
    }

    /// Append complete groups to the sequence.
    pub fn append(&mut self, tokens: &[AudioToken]) -> Result<(), TokenError> {
        validate_groups(tokens)?;
        self.tokens.extend_from_slice(tokens);
        Ok(())
    }

    pub fn tokens(&self) -> &[AudioToken] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.tokens.len() / GROUP_LEN
    }

    pub fn unified_ids(&self) -> Vec<UnifiedId> {
        self.tokens.iter().map(|t| t.unified_id()).collect()
    }
}

fn validate_groups(tokens: &[AudioToken]) -> Result<(), TokenError> {
    if tokens.len() % GROUP_LEN != 0 {
        return Err(TokenError::IncompleteGroup { len: tokens.len() });
    }
    for (i, t) in tokens.iter().enumerate() {
        let in_group = i % GROUP_LEN;
        let want_linguistic = in_group < GROUP_LINGUISTIC;
        if want_linguistic != t.is_linguistic() {
            return Err(TokenError::MalformedGroup {
                index: i,
                expected: if want_linguistic { "linguistic" } else { "semantic" },
            });
        }
    }
    Ok(())
}

/// Errors from the line-oriented token fixture format.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenLineError {
    #[error("line {line}: not a decimal id: {text:?}")]
    NotANumber { line: usize, text: String },
    #[error("line {line}: {source}")]
    OutOfRange { line: usize, source: TokenError },
}

/// Parse the fixture serialization: one unified id per line, decimal.
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_token_lines(input: &str) -> Result<Vec<AudioToken>, TokenLineError> {
    let mut out = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        let text = raw.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let value: u32 = text
            .parse()
            .map_err(|_| TokenLineError::NotANumber { line, text: text.to_string() })?;
        let id = UnifiedId::new(value).map_err(|source| TokenLineError::OutOfRange { line, source })?;
        out.push(from_unified(id));
    }
    Ok(out)
}

/// Write the fixture serialization: one unified id per line, decimal,
/// newline-terminated.
pub fn write_token_lines(tokens: &[AudioToken]) -> String {
    let mut out = String::new();
    for t in tokens {
        out.push_str(&t.unified_id().value().to_string());
        out.push('\n');
    }
    out
}
