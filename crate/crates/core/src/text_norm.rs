//! Text normalization, tokenization and n-gram extraction.
//!
//! Every overlap metric and the generation dedup filter consume the token
//! sequences produced here, so the rules are fixed and deterministic:
//! canonical composition (NFC), optional lowercasing, a split on Unicode
//! whitespace, and leading/trailing punctuation detached into one token per
//! character.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// A single normalized token. Never empty, never contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn new(value: impl Into<String>) -> Option<Self> {
        let value = value.into();
        if value.is_empty() || value.chars().any(char::is_whitespace) {
            None
        } else {
            Some(Token(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Token::new(s).ok_or_else(|| serde::de::Error::custom("token must be non-empty and whitespace-free"))
    }
}

/// Ordered tokens of one text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<Token>);

impl TokenSequence {
    pub fn new(tokens: Vec<Token>) -> Self {
        TokenSequence(tokens)
    }

    /// Builds a sequence from pre-split words, verbatim (no normalization).
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        words
            .into_iter()
            .map(|w| {
                let w = w.into();
                Token::new(w.clone()).ok_or_else(|| Error::invalid(format!("not a valid token: {w:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(TokenSequence)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    /// Space-joined surface form.
    pub fn join(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(t.as_str());
        }
        out
    }
}

impl Deref for TokenSequence {
    type Target = [Token];

    fn deref(&self) -> &[Token] {
        &self.0
    }
}

impl FromIterator<Token> for TokenSequence {
    fn from_iter<T: IntoIterator<Item = Token>>(iter: T) -> Self {
        TokenSequence(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    pub detach_punctuation: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            lowercase: true,
            detach_punctuation: true,
        }
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn tokenize(text: &str, config: &NormalizationConfig) -> TokenSequence {
    let composed: String = text.nfc().collect();
    let normalized = if config.lowercase {
        composed.to_lowercase().nfc().collect()
    } else {
        composed
    };

    let mut tokens = Vec::new();
    for word in normalized.split_whitespace() {
        if !config.detach_punctuation {
            tokens.push(Token(word.to_owned()));
            continue;
        }
        let start = word.find(|c: char| !is_punct(c));
        let Some(start) = start else {
            // all punctuation
            tokens.extend(word.chars().map(|c| Token(c.to_string())));
            continue;
        };
        let end = word
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_punct(c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(word.len());

        tokens.extend(word[..start].chars().map(|c| Token(c.to_string())));
        tokens.push(Token(word[start..end].to_owned()));
        tokens.extend(word[end..].chars().map(|c| Token(c.to_string())));
    }
    TokenSequence(tokens)
}

/// Multiset of contiguous n-token windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramMultiset<'a> {
    n: usize,
    counts: HashMap<&'a [Token], usize>,
}

impl<'a> NGramMultiset<'a> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self, gram: &[Token]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [Token], usize)> + '_ {
        self.counts.iter().map(|(g, c)| (*g, *c))
    }

    /// Σ_g min(self(g), other(g)).
    pub fn clipped_overlap(&self, other: &NGramMultiset<'_>) -> usize {
        self.iter().map(|(g, c)| c.min(other.count(g))).sum()
    }
}

pub fn ngrams(seq: &[Token], n: usize) -> Result<NGramMultiset<'_>> {
    if n < 1 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    Ok(NGramMultiset { n, counts })
}
