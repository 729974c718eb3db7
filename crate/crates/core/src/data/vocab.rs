use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token inventory with the four reserved ids first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from non-reserved tokens in id order.
    pub fn from_tokens<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> = tokens.iter().cloned().zip(0..).collect();
        for w in words {
            let w = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::format(format!("invalid vocabulary token {w:?}")));
            }
            if index.insert(w.clone(), tokens.len()).is_some() {
                return Err(Error::format(format!("duplicate vocabulary token {w:?}")));
            }
            tokens.push(w);
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Ranks tokens by frequency, ties by first occurrence, and keeps the
    /// top `max_size - 4`.
    pub fn build<S: AsRef<str>>(sentences: &[Vec<S>], max_size: usize) -> Result<Self> {
        if max_size < RESERVED.len() + 1 {
            return Err(Error::invalid(format!("vocabulary size {max_size} leaves no room beyond the reserved tokens")));
        }
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        for tok in sentences.iter().flatten() {
            let next = counts.len();
            counts.entry(tok.as_ref()).or_insert((0, next)).0 += 1;
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus("no tokens to build a vocabulary from".into()));
        }
        let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(t, (c, first))| (t, c, first)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        let words = ranked.into_iter().filter(|(t, ..)| !RESERVED.contains(t)).take(max_size - RESERVED.len());
        Self::from_tokens(words.map(|(t, ..)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Unknown strings map to UNK.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Space-joined tokens; EOS and anything after it are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One non-reserved token per line.
    pub fn to_text(&self) -> String {
        self.tokens[RESERVED.len()..].iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().filter(|l| !l.is_empty()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}
