use std::fs;
use std::path::Path;

use crate::data::vocab::Vocabulary;
use crate::error::{Error, Result};

pub type Sentence = Vec<String>;

/// Tokenized sentence pairs; neither side is ever empty.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pairs: Vec<(Sentence, Sentence)>,
}

/// Sentence pairs mapped to vocabulary ids (no BOS/EOS framing).
pub type IdPair = (Vec<usize>, Vec<usize>);

pub fn tokenize(line: &str) -> Sentence {
    line.split_whitespace().map(String::from).collect()
}

pub fn read_lines(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(tokenize).collect())
}

pub fn write_lines<S: AsRef<str>>(path: &Path, sentences: &[Vec<S>]) -> Result<()> {
    let mut out = String::new();
    for s in sentences {
        let words: Vec<&str> = s.iter().map(AsRef::as_ref).collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    Ok(fs::write(path, out)?)
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<(Sentence, Sentence)>) -> Result<Self> {
        if let Some(i) = pairs.iter().position(|(s, t)| s.is_empty() || t.is_empty()) {
            return Err(Error::format(format!("pair {} has an empty side", i + 1)));
        }
        Ok(ParallelCorpus { pairs })
    }

    pub fn from_sides(sources: Vec<Sentence>, targets: Vec<Sentence>) -> Result<Self> {
        if sources.len() != targets.len() {
            return Err(Error::format(format!(
                "{} source lines but {} target lines",
                sources.len(),
                targets.len()
            )));
        }
        Self::new(sources.into_iter().zip(targets).collect())
    }

    /// Reads two parallel files and drops pairs longer than `max_len` on
    /// either side.
    pub fn load(source: &Path, target: &Path, max_len: Option<usize>) -> Result<Self> {
        let corpus = Self::from_sides(read_lines(source)?, read_lines(target)?)?;
        Ok(match max_len {
            Some(n) => corpus.filter_length(n),
            None => corpus,
        })
    }

    pub fn save(&self, source: &Path, target: &Path) -> Result<()> {
        write_lines(source, &self.sources())?;
        write_lines(target, &self.targets())
    }

    pub fn filter_length(self, max_len: usize) -> Self {
        let pairs = self.pairs.into_iter().filter(|(s, t)| s.len() <= max_len && t.len() <= max_len).collect();
        ParallelCorpus { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Sentence, Sentence)] {
        &self.pairs
    }

    pub fn sources(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|p| p.0.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Sentence> {
        self.pairs.iter().map(|p| p.1.clone()).collect()
    }

    /// Splits off the first `n` pairs.
    pub fn split_at(mut self, n: usize) -> (Self, Self) {
        let rest = self.pairs.split_off(n.min(self.pairs.len()));
        (self, ParallelCorpus { pairs: rest })
    }

    pub fn encode(&self, src: &Vocabulary, tgt: &Vocabulary) -> Vec<IdPair> {
        self.pairs.iter().map(|(s, t)| (src.encode(s), tgt.encode(t))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn files_round_trip_and_filter() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("s"), dir.path().join("t"));
        let c = ParallelCorpus::from_sides(
            vec![tokenize("a b"), tokenize("a b c d")],
            vec![tokenize("x"), tokenize("y z")],
        )
        .unwrap();
        c.save(&s, &t).unwrap();
        assert_eq!(ParallelCorpus::load(&s, &t, None).unwrap(), c);
        assert_eq!(ParallelCorpus::load(&s, &t, Some(3)).unwrap().len(), 1);
    }

    #[test]
    fn rejects_misaligned_or_empty() {
        assert!(ParallelCorpus::from_sides(vec![tokenize("a")], vec![]).is_err());
        assert!(ParallelCorpus::from_sides(vec![tokenize("a")], vec![tokenize("  ")]).is_err());
    }
}
