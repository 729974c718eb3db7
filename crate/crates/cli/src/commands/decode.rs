use vrnmt::decoding::{force_decode_alignments, format_links, greedy, translate_all, BeamConfig};

use super::{load_model, read_nonempty, write_text_lines};
use crate::cli::{AlignArgs, TranslateArgs};
use crate::error::{usage, CliResult};

pub fn translate(a: &TranslateArgs) -> CliResult<()> {
    let (model, src_vocab, tgt_vocab) = load_model(&a.checkpoint, &a.vocab)?;
    let sources: Vec<Vec<usize>> = read_nonempty(&a.input)?.iter().map(|s| src_vocab.encode(s)).collect();
    let d = &a.decode;
    if d.beam == 0 {
        return Err(usage("--beam must be at least 1"));
    }
    let outputs = if a.greedy {
        sources
            .iter()
            .map(|s| Ok(greedy(&model, s, d.max_out_len)?.words().to_vec()))
            .collect::<vrnmt::Result<Vec<_>>>()?
    } else {
        let cfg = BeamConfig {
            beam_size: d.beam,
            max_out_len: d.max_out_len,
            length_norm: d.length_norm,
            prior_noise: d.prior_noise,
        };
        translate_all(&model, &sources, &cfg)?
    };
    let lines: Vec<String> = outputs.iter().map(|ids| tgt_vocab.decode(ids)).collect();
    write_text_lines(&a.output, &lines)
}

pub fn align(a: &AlignArgs) -> CliResult<()> {
    let (model, src_vocab, tgt_vocab) = load_model(&a.checkpoint, &a.vocab)?;
    let sources = read_nonempty(&a.src)?;
    let targets = read_nonempty(&a.tgt)?;
    if sources.len() != targets.len() {
        return Err(vrnmt::Error::Format(format!("{} source lines but {} target lines", sources.len(), targets.len())).into());
    }
    let lines = sources
        .iter()
        .zip(&targets)
        .map(|(s, t)| Ok(format_links(&force_decode_alignments(&model, &src_vocab.encode(s), &tgt_vocab.encode(t))?)))
        .collect::<vrnmt::Result<Vec<_>>>()?;
    write_text_lines(&a.output, &lines)
}
