//! Token sequences, the plain-text corpus format, and multi-resolution
//! segment construction.
//!
//! A corpus file looks like
//!
//! ```text
//! #vocab=8
//! 1 2 3
//! # comment lines are skipped
//! 4 5
//! ```
//!
//! Every non-empty line after the header is one sequence. Blank lines are
//! ignored, so an empty sequence is written as a lone `-`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// A finite sequence of token ids over a declared vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    vocab_size: usize,
    tokens: Vec<TokenId>,
}

impl TokenSequence {
    pub fn new(vocab_size: usize, tokens: Vec<TokenId>) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::invalid("vocab_size must be positive"));
        }
        if let Some((pos, &t)) = tokens
            .iter()
            .enumerate()
            .find(|(_, &t)| t as usize >= vocab_size)
        {
            return Err(Error::invalid(format!(
                "token {t} at position {pos} is outside vocabulary of size {vocab_size}"
            )));
        }
        Ok(Self { vocab_size, tokens })
    }

    pub fn empty(vocab_size: usize) -> Result<Self> {
        Self::new(vocab_size, Vec::new())
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn into_tokens(self) -> Vec<TokenId> {
        self.tokens
    }
}

/// Segment resolution: `length` tokens after skip sampling with `stride`.
///
/// A detector with spec `(25, 2)` sees every second token of a 50-token
/// window; `(50, 1)` sees the window at native resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub length: usize,
    pub stride: usize,
}

impl SegmentSpec {
    pub fn new(length: usize, stride: usize) -> Result<Self> {
        if length == 0 || stride == 0 {
            return Err(Error::invalid(format!(
                "segment spec needs positive length and stride, got ({length}, {stride})"
            )));
        }
        Ok(Self { length, stride })
    }

    pub const fn contiguous(length: usize) -> Self {
        Self { length, stride: 1 }
    }

    /// Number of source tokens covered before skip sampling.
    pub fn window(&self) -> usize {
        self.length * self.stride
    }
}

impl fmt::Display for SegmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stride == 1 {
            write!(f, "L{}", self.length)
        } else {
            write!(f, "L{}<-{}", self.window(), self.length)
        }
    }
}

/// A fixed-length token window taken from a source sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub tokens: Vec<TokenId>,
    pub spec: SegmentSpec,
    pub source_offset: usize,
}

/// Contiguous windows of length `len` at offsets `0, hop, 2*hop, ...`.
/// Windows that would run past the end are dropped, never padded.
pub fn crop_segments(seq: &TokenSequence, len: usize, hop: usize) -> Vec<Segment> {
    assert!(len >= 1 && hop >= 1, "crop length and hop must be positive");
    let tokens = seq.tokens();
    if tokens.len() < len {
        return Vec::new();
    }
    (0..=tokens.len() - len)
        .step_by(hop)
        .map(|offset| Segment {
            tokens: tokens[offset..offset + len].to_vec(),
            spec: SegmentSpec::contiguous(len),
            source_offset: offset,
        })
        .collect()
}

/// `count` windows of length `len` at uniformly random offsets.
pub fn crop_segments_random<R: Rng + ?Sized>(
    seq: &TokenSequence,
    len: usize,
    count: usize,
    rng: &mut R,
) -> Vec<Segment> {
    assert!(len >= 1, "crop length must be positive");
    let tokens = seq.tokens();
    if tokens.len() < len {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let offset = rng.gen_range(0..=tokens.len() - len);
            Segment {
                tokens: tokens[offset..offset + len].to_vec(),
                spec: SegmentSpec::contiguous(len),
                source_offset: offset,
            }
        })
        .collect()
}

/// Every `stride`-th token of `window`, starting with the first.
pub fn skip_sample(window: &[TokenId], stride: usize) -> Vec<TokenId> {
    assert!(stride >= 1, "skip-sampling stride must be positive");
    window.iter().step_by(stride).copied().collect()
}

/// Crops windows of `spec.window()` tokens with the given hop and reduces
/// each to `spec.length` tokens by skip sampling.
pub fn segments_for_spec(seq: &TokenSequence, spec: SegmentSpec, hop: usize) -> Vec<Segment> {
    crop_segments(seq, spec.window(), hop)
        .into_iter()
        .map(|seg| Segment {
            tokens: skip_sample(&seg.tokens, spec.stride),
            spec,
            source_offset: seg.source_offset,
        })
        .collect()
}

const EMPTY_LINE: &str = "-";

pub fn parse_corpus(text: &str) -> Result<Vec<TokenSequence>> {
    let mut lines = text.lines().enumerate();
    let vocab_size = loop {
        let Some((idx, line)) = lines.next() else {
            return Err(Error::Parse {
                line: 1,
                message: "missing `#vocab=<V>` header".into(),
            });
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some(value) = line.strip_prefix("#vocab=") else {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected `#vocab=<V>` header, found {line:?}"),
            });
        };
        let vocab: usize = value.trim().parse().map_err(|_| Error::Parse {
            line: idx + 1,
            message: format!("invalid vocabulary size {value:?}"),
        })?;
        if vocab == 0 {
            return Err(Error::Parse {
                line: idx + 1,
                message: "vocabulary size must be positive".into(),
            });
        }
        break vocab;
    };

    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == EMPTY_LINE {
            out.push(TokenSequence::empty(vocab_size)?);
            continue;
        }
        let tokens = line
            .split_ascii_whitespace()
            .map(|field| {
                field.parse::<TokenId>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("invalid token id {field:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let seq = TokenSequence::new(vocab_size, tokens).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("line {}: {msg}", idx + 1)),
            other => other,
        })?;
        out.push(seq);
    }
    Ok(out)
}

/// Canonical serialization. All sequences must share `vocab_size`.
pub fn format_corpus(vocab_size: usize, sequences: &[TokenSequence]) -> Result<String> {
    let mut out = format!("#vocab={vocab_size}\n");
    for (i, seq) in sequences.iter().enumerate() {
        if seq.vocab_size() != vocab_size {
            return Err(Error::invalid(format!(
                "sequence {i} has vocab_size {} but corpus declares {vocab_size}",
                seq.vocab_size()
            )));
        }
        if seq.is_empty() {
            out.push_str(EMPTY_LINE);
        } else {
            let mut first = true;
            for t in seq.tokens() {
                if !first {
                    out.push(' ');
                }
                first = false;
                out.push_str(&t.to_string());
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<TokenSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

/// Reads a corpus and also returns its declared vocabulary size, which is
/// otherwise lost when the file holds no sequences.
pub fn read_corpus_with_vocab(path: impl AsRef<Path>) -> Result<(usize, Vec<TokenSequence>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let seqs = parse_corpus(&text)?;
    let vocab = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .and_then(|l| l.strip_prefix("#vocab="))
        .and_then(|v| v.trim().parse().ok())
        .expect("header validated by parse_corpus");
    Ok((vocab, seqs))
}

pub fn write_corpus(
    path: impl AsRef<Path>,
    vocab_size: usize,
    sequences: &[TokenSequence],
) -> Result<()> {
    let path = path.as_ref();
    let text = format_corpus(vocab_size, sequences)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}
