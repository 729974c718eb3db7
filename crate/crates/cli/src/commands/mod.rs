mod data;
mod decode;
mod eval;
mod gradcheck;
mod report;
mod train;

use std::fs;
use std::path::Path;

use vrnmt::data::corpus::{read_lines, Sentence};
use vrnmt::data::{Checkpoint, Vocabulary};
use vrnmt::models::Model;

use crate::cli::{Command, VocabPaths};
use crate::error::CliResult;

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::GenData(a) => data::gen_data(&a),
        Command::BuildVocab(a) => data::build_vocab(&a),
        Command::Train(a) => train::train(&a),
        Command::Translate(a) => decode::translate(&a),
        Command::Align(a) => decode::align(&a),
        Command::Evaluate(a) => eval::evaluate(&a),
        Command::Significance(a) => eval::significance(&a),
        Command::GradCheck(a) => gradcheck::grad_check(&a),
        Command::Report(a) => report::report(&a),
    }
}

/// Loads a checkpoint and the vocabularies it was trained with.
fn load_model(checkpoint: &Path, vocab: &VocabPaths) -> CliResult<(Model, Vocabulary, Vocabulary)> {
    let model = Checkpoint::load(checkpoint)?.model;
    let (src, tgt) = load_vocabs(vocab)?;
    let cfg = &model.config;
    if src.len() != cfg.src_vocab || tgt.len() != cfg.tgt_vocab {
        return Err(vrnmt::Error::Format(format!(
            "vocabularies have {}/{} entries but the checkpoint expects {}/{}",
            src.len(),
            tgt.len(),
            cfg.src_vocab,
            cfg.tgt_vocab
        ))
        .into());
    }
    Ok((model, src, tgt))
}

fn load_vocabs(vocab: &VocabPaths) -> CliResult<(Vocabulary, Vocabulary)> {
    Ok((Vocabulary::load(&vocab.src_vocab)?, Vocabulary::load(&vocab.tgt_vocab)?))
}

/// Reads sentences, rejecting empty lines.
fn read_nonempty(path: &Path) -> CliResult<Vec<Sentence>> {
    let lines = read_lines(path)?;
    if let Some(i) = lines.iter().position(Vec::is_empty) {
        return Err(vrnmt::Error::Format(format!("{}: line {} is empty", path.display(), i + 1)).into());
    }
    Ok(lines)
}

fn write_text_lines(path: &Path, lines: &[String]) -> CliResult<()> {
    let mut out = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| vrnmt::Error::from(e).into())
}
