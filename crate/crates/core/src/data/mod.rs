//! Vocabularies, corpora, synthetic tasks and checkpoints.

pub mod checkpoint;
pub mod corpus;
pub mod toy;
pub mod vocab;

pub use checkpoint::Checkpoint;
pub use corpus::{IdPair, ParallelCorpus, Sentence};
pub use toy::{generate_toy_corpus, ToySpec, ToyTask};
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK};
