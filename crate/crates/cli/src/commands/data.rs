use std::fs;

use vrnmt::data::corpus::read_lines;
use vrnmt::data::{generate_toy_corpus, ToySpec, ToyTask, Vocabulary};

use crate::cli::{BuildVocabArgs, GenDataArgs};
use crate::error::CliResult;

pub fn gen_data(a: &GenDataArgs) -> CliResult<()> {
    let task: ToyTask = a.task.parse()?;
    let spec = ToySpec {
        task,
        pairs: a.pairs + a.valid_pairs + a.test_pairs,
        vocab_size: a.vocab_size,
        len_range: a.min_len..=a.max_len,
        swap_prob: a.swap_prob,
        seed: a.seed,
    };
    let corpus = generate_toy_corpus(&spec)?;
    fs::create_dir_all(&a.out_dir).map_err(vrnmt::Error::from)?;
    let (train, rest) = corpus.split_at(a.pairs);
    let (valid, test) = rest.split_at(a.valid_pairs);
    for (name, part) in [("train", train), ("valid", valid), ("test", test)] {
        part.save(&a.out_dir.join(format!("{name}.src")), &a.out_dir.join(format!("{name}.tgt")))?;
        println!("{name}\t{} pairs", part.len());
    }
    Ok(())
}

pub fn build_vocab(a: &BuildVocabArgs) -> CliResult<()> {
    let sentences = read_lines(&a.input)?;
    let vocab = Vocabulary::build(&sentences, a.max_size)?;
    vocab.save(&a.output)?;
    println!("{} entries", vocab.len());
    Ok(())
}
