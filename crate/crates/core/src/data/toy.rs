use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::corpus::{ParallelCorpus, Sentence};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyTask {
    Copy,
    Reverse,
    Lexmap,
    LexmapSwap,
}

impl ToyTask {
    pub fn name(self) -> &'static str {
        match self {
            ToyTask::Copy => "copy",
            ToyTask::Reverse => "reverse",
            ToyTask::Lexmap => "lexmap",
            ToyTask::LexmapSwap => "lexmap_swap",
        }
    }
}

impl fmt::Display for ToyTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(ToyTask::Copy),
            "reverse" => Ok(ToyTask::Reverse),
            "lexmap" => Ok(ToyTask::Lexmap),
            "lexmap_swap" | "lexmap-swap" => Ok(ToyTask::LexmapSwap),
            other => Err(Error::invalid(format!("unknown task {other:?} (copy, reverse, lexmap, lexmap_swap)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToySpec {
    pub task: ToyTask,
    pub pairs: usize,
    /// Distinct word types.
    pub vocab_size: usize,
    pub len_range: RangeInclusive<usize>,
    pub swap_prob: f64,
    pub seed: u64,
}

/// The word-level rules of a task, fixed by the seed.
#[derive(Clone, Debug)]
pub struct ToyLanguage {
    pub task: ToyTask,
    /// `mapping[k]` is the target word for source word `k`.
    pub mapping: Vec<usize>,
    /// Source words that trade places with their right neighbour.
    pub swaps: Vec<bool>,
}

pub fn word(k: usize) -> String {
    format!("w{k}")
}

impl ToyLanguage {
    pub fn new<R: Rng + ?Sized>(task: ToyTask, vocab_size: usize, swap_prob: f64, rng: &mut R) -> Self {
        let mut mapping: Vec<usize> = (0..vocab_size).collect();
        if matches!(task, ToyTask::Lexmap | ToyTask::LexmapSwap) {
            mapping.shuffle(rng);
        }
        let swaps = (0..vocab_size)
            .map(|_| task == ToyTask::LexmapSwap && rng.random_bool(swap_prob))
            .collect();
        ToyLanguage { task, mapping, swaps }
    }

    /// Target word indices for a source sentence.
    pub fn translate(&self, src: &[usize]) -> Vec<usize> {
        match self.task {
            ToyTask::Copy => src.to_vec(),
            ToyTask::Reverse => src.iter().rev().copied().collect(),
            ToyTask::Lexmap => src.iter().map(|&k| self.mapping[k]).collect(),
            ToyTask::LexmapSwap => {
                let mut out: Vec<usize> = src.iter().map(|&k| self.mapping[k]).collect();
                let mut i = 0;
                while i + 1 < out.len() {
                    if self.swaps[src[i]] {
                        out.swap(i, i + 1);
                        i += 2;
                    } else {
                        i += 1;
                    }
                }
                out
            }
        }
    }
}

/// Deterministic synthetic parallel corpus.
///
/// For `lexmap_swap`, which words trigger a swap is drawn once per word type
/// with probability `swap_prob`; a flagged word exchanges places with its
/// right neighbour, scanning left to right without overlap.
pub fn generate_toy_corpus(spec: &ToySpec) -> Result<ParallelCorpus> {
    if spec.vocab_size < 5 {
        return Err(Error::invalid(format!("vocab_size {} is below 5", spec.vocab_size)));
    }
    let (lo, hi) = (*spec.len_range.start(), *spec.len_range.end());
    if lo == 0 || lo > hi {
        return Err(Error::invalid(format!("invalid length range {lo}..={hi}")));
    }
    if !(0.0..=1.0).contains(&spec.swap_prob) {
        return Err(Error::invalid(format!("swap_prob {} outside [0, 1]", spec.swap_prob)));
    }
    let mut rng = stream(spec.seed, Stream::Data);
    let lang = ToyLanguage::new(spec.task, spec.vocab_size, spec.swap_prob, &mut rng);
    let words = |ids: &[usize]| -> Sentence { ids.iter().map(|&k| word(k)).collect() };
    let pairs = (0..spec.pairs)
        .map(|_| {
            let len = rng.random_range(lo..=hi);
            let src: Vec<usize> = (0..len).map(|_| rng.random_range(0..spec.vocab_size)).collect();
            (words(&src), words(&lang.translate(&src)))
        })
        .collect();
    ParallelCorpus::new(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(task: ToyTask) -> ToySpec {
        ToySpec { task, pairs: 200, vocab_size: 20, len_range: 2..=7, swap_prob: 0.3, seed: 11 }
    }

    #[test]
    fn copy_and_reverse() {
        for (s, t) in generate_toy_corpus(&spec(ToyTask::Copy)).unwrap().pairs() {
            assert_eq!(s, t);
        }
        let lang = ToyLanguage::new(ToyTask::Reverse, 5, 0.0, &mut stream(0, Stream::Data));
        assert_eq!(lang.translate(&[0, 1, 2]), vec![2, 1, 0]);
    }

    #[test]
    fn lexmap_is_reproducible_and_consistent() {
        let a = generate_toy_corpus(&spec(ToyTask::Lexmap)).unwrap();
        assert_eq!(a, generate_toy_corpus(&spec(ToyTask::Lexmap)).unwrap());
        let mut seen = std::collections::HashMap::new();
        for (s, t) in a.pairs() {
            assert_eq!(s.len(), t.len());
            for (x, y) in s.iter().zip(t) {
                assert_eq!(seen.entry(x.clone()).or_insert_with(|| y.clone()), y);
            }
        }
    }

    #[test]
    fn swaps_reorder_adjacent_words() {
        let lang = ToyLanguage { task: ToyTask::LexmapSwap, mapping: vec![0, 1, 2, 3, 4], swaps: vec![true, false, false, false, false] };
        assert_eq!(lang.translate(&[0, 0, 0, 1]), vec![0, 0, 1, 0]);
        assert_eq!(lang.translate(&[1, 0, 2]), vec![1, 2, 0]);
        assert_eq!(lang.translate(&[1, 0]), vec![1, 0]);
    }

    #[test]
    fn swap_rate_tracks_swap_prob() {
        let mut rng = stream(3, Stream::Data);
        let lang = ToyLanguage::new(ToyTask::LexmapSwap, 2000, 0.3, &mut rng);
        let rate = lang.swaps.iter().filter(|&&s| s).count() as f64 / 2000.0;
        assert!((rate - 0.3).abs() < 0.05);
        let none = ToyLanguage::new(ToyTask::LexmapSwap, 50, 0.0, &mut rng);
        let src: Vec<usize> = (0..50).collect();
        let mapped: Vec<usize> = src.iter().map(|&k| none.mapping[k]).collect();
        assert_eq!(none.translate(&src), mapped);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!("shuffle".parse::<ToyTask>().is_err());
        let mut s = spec(ToyTask::Copy);
        s.vocab_size = 4;
        assert!(generate_toy_corpus(&s).is_err());
        s.vocab_size = 10;
        s.len_range = 0..=3;
        assert!(generate_toy_corpus(&s).is_err());
    }
}
