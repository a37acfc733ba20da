//! Word-level vocabulary built from the training split.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SEQ_START: u32 = 0;
pub const PAD: u32 = 1;
pub const UNK: u32 = 2;
pub const SPECIAL_TOKENS: [&str; 3] = ["<s>", "<pad>", "<unk>"];

/// Lowercase, split on whitespace, and emit every punctuation character as
/// a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '\'' && !word.is_empty() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() && !ch.is_control() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl TryFrom<VocabRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabRepr) -> Result<Self> {
        Vocabulary::from_tokens(r.tokens)
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr { tokens: v.tokens }
    }
}

/// Result of encoding one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    pub truncated: bool,
}

impl Vocabulary {
    /// Rebuild from an id-ordered token list whose first three entries are
    /// the special tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 || tokens[..3] != SPECIAL_TOKENS {
            return Err(Error::Config("vocabulary must start with <s>, <pad>, <unk>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `SEQ_START` followed by the token ids, cut to `max_len` ids in total.
    pub fn encode(&self, text: &str, max_len: usize) -> Encoded {
        let mut ids = Vec::with_capacity(max_len.min(64));
        ids.push(SEQ_START);
        let mut truncated = false;
        for tok in tokenize(text) {
            if ids.len() == max_len {
                truncated = true;
                break;
            }
            ids.push(self.id(&tok));
        }
        Encoded { ids, truncated }
    }

    /// SHA-256 over the newline-joined token list, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Keep the `max_size - 3` most frequent tokens, ties broken
/// lexicographically, after the three special tokens.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot build a vocabulary from an empty corpus".into()));
    }
    if max_size < SPECIAL_TOKENS.len() {
        return Err(Error::Config(format!("vocabulary size {max_size} leaves no room for special tokens")));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in corpus {
        for tok in tokenize(text.as_ref()) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    for s in SPECIAL_TOKENS {
        counts.remove(s);
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let tokens = SPECIAL_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().take(max_size - SPECIAL_TOKENS.len()).map(|(t, _)| t))
        .collect();
    Vocabulary::from_tokens(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_is_split_off() {
        assert_eq!(tokenize("Hello, World!  They're here."), ["hello", ",", "world", "!", "they're", "here", "."]);
    }

    #[test]
    fn encode_truncates_keeping_the_head() {
        let v = build_vocab(&["a b c d"], 10).unwrap();
        let e = v.encode("a b c d", 3);
        assert!(e.truncated);
        assert_eq!(e.ids, vec![SEQ_START, v.id("a"), v.id("b")]);
        assert!(!v.encode("a b", 3).truncated);
    }
}
