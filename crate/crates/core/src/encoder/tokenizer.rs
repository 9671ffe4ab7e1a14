use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const DEFAULT_MAX_LEN: usize = 256;

/// Word-level vocabulary with fixed special ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TokenizerFile", try_from = "TokenizerFile")]
pub struct Tokenizer {
    index: HashMap<String, u32>,
    tokens: Vec<String>,
    max_len: usize,
}

#[derive(Serialize, Deserialize)]
struct TokenizerFile {
    version: u32,
    max_len: usize,
    /// Tokens in id order, specials included.
    tokens: Vec<String>,
}

const SPECIALS: [&str; 3] = ["[PAD]", "[UNK]", "[CLS]"];

impl From<Tokenizer> for TokenizerFile {
    fn from(t: Tokenizer) -> Self {
        TokenizerFile {
            version: 1,
            max_len: t.max_len,
            tokens: t.tokens,
        }
    }
}

impl TryFrom<TokenizerFile> for Tokenizer {
    type Error = Error;

    fn try_from(f: TokenizerFile) -> Result<Self> {
        if f.version != 1 {
            return Err(Error::Format(format!("tokenizer version {}", f.version)));
        }
        if f.tokens.len() < SPECIALS.len() || f.tokens[..3] != SPECIALS {
            return Err(Error::Format("tokenizer file does not start with the special tokens".into()));
        }
        let index = f
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect::<HashMap<_, _>>();
        if index.len() != f.tokens.len() {
            return Err(Error::Format("tokenizer file repeats a token".into()));
        }
        Ok(Tokenizer {
            index,
            tokens: f.tokens,
            max_len: f.max_len,
        })
    }
}

impl Tokenizer {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const CLS: u32 = 2;

    /// Vocabulary of tokens occurring at least `min_freq` times, ordered by
    /// descending frequency then lexicographically.
    pub fn from_texts<'a, I>(texts: I, min_freq: usize, max_len: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for tok in tokenize(text) {
                *freq.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = freq
            .into_iter()
            .filter(|(t, c)| *c >= min_freq.max(1) && !SPECIALS.contains(&t.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let tokens: Vec<String> = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Tokenizer {
            index,
            tokens,
            max_len,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn check_seq_len(&self, seq_len: usize) -> Result<()> {
        if seq_len < 2 || seq_len > self.max_len {
            return Err(Error::Config(format!(
                "sequence length {seq_len} outside [2, {}]",
                self.max_len
            )));
        }
        Ok(())
    }

    /// `[CLS]` followed by the text's token ids, truncated or padded to
    /// exactly `seq_len`, with the matching attention mask.
    pub fn encode(&self, text: &str, seq_len: usize) -> Result<(Vec<u32>, Vec<u8>)> {
        self.check_seq_len(seq_len)?;
        let mut ids = Vec::with_capacity(seq_len);
        ids.push(Self::CLS);
        ids.extend(
            tokenize(text)
                .iter()
                .take(seq_len - 1)
                .map(|t| self.id(t).unwrap_or(Self::UNK)),
        );
        let mut mask = vec![1u8; ids.len()];
        ids.resize(seq_len, Self::PAD);
        mask.resize(seq_len, 0);
        Ok((ids, mask))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn build_vocab(corpus: &[Sample], min_freq: usize) -> Tokenizer {
    Tokenizer::from_texts(corpus.iter().map(|s| s.text.as_str()), min_freq, DEFAULT_MAX_LEN)
}
