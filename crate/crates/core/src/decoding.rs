//! Beam search, greedy decoding and forced-decoding alignments.

use std::cmp::Ordering;

use rand_chacha::ChaCha8Rng;

use crate::data::vocab::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::models::{EncodedSource, Model};
use crate::rng::{substream, Stream};
use crate::tensor::Tensor;

/// A partial or complete output sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids, EOS included when finished.
    pub tokens: Vec<usize>,
    /// Sum of the chosen per-step log-probabilities.
    pub score: f64,
    pub step_scores: Vec<f64>,
    /// One attention vector per emitted token.
    pub attention: Vec<Vec<f64>>,
    /// Decoder state after the last emitted token.
    pub state: Vec<f64>,
    pub finished: bool,
}

impl Hypothesis {
    /// Tokens without the closing EOS.
    pub fn words(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }

    fn ranking_score(&self, length_norm: bool) -> f64 {
        if length_norm && !self.tokens.is_empty() {
            self.score / self.tokens.len() as f64
        } else {
            self.score
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamConfig {
    pub beam_size: usize,
    /// Defaults to `2 · T_x + 10`.
    pub max_out_len: Option<usize>,
    /// Rank finished hypotheses by score per token.
    pub length_norm: bool,
    /// Draw `z` from the prior instead of using its mean.
    pub prior_noise: Option<u64>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { beam_size: 10, max_out_len: None, length_norm: false, prior_noise: None }
    }
}

/// Tokens a decoder may emit: everything but PAD and BOS.
fn emittable(id: usize) -> bool {
    id != PAD && id != BOS
}

/// Higher score first; equal scores go to the smaller first differing id.
fn rank(a_score: f64, a: &[usize], b_score: f64, b: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a.cmp(b))
}

struct Candidate {
    parent: usize,
    token: usize,
    score: f64,
    tokens: Vec<usize>,
}

/// Beam search over any model variant. Returns finished hypotheses ranked
/// best first, or the surviving unfinished ones if nothing finished within
/// `max_out_len` steps.
pub fn beam_search(model: &Model, src: &[usize], config: &BeamConfig) -> Result<Vec<Hypothesis>> {
    beam_search_with(model, src, config, config.prior_noise.map(|s| substream(s, Stream::Decode, 0)).as_mut())
}

fn beam_search_with(
    model: &Model,
    src: &[usize],
    config: &BeamConfig,
    mut noise: Option<&mut ChaCha8Rng>,
) -> Result<Vec<Hypothesis>> {
    if config.beam_size == 0 {
        return Err(Error::invalid("beam size must be at least 1"));
    }
    let enc = model.encode_source(src)?;
    let max_len = config.max_out_len.unwrap_or(2 * src.len() + 10);
    let root = Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        step_scores: Vec::new(),
        attention: Vec::new(),
        state: enc.initial_state.data().to_vec(),
        finished: false,
    };
    let mut live = vec![root];
    let mut done: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() || done.len() >= config.beam_size {
            break;
        }
        let prev: Vec<usize> = live.iter().map(|h| *h.tokens.last().unwrap_or(&BOS)).collect();
        let states = stack_states(&live);
        let step = model.infer_step(&enc, &prev, &states, noise.as_deref_mut())?;
        let vocab = step.log_probs.cols();

        let mut cands: Vec<Candidate> = Vec::with_capacity(live.len() * vocab);
        for (k, h) in live.iter().enumerate() {
            let row = step.log_probs.row(k);
            for (w, &lp) in row.iter().enumerate().filter(|(w, _)| emittable(*w)) {
                let mut tokens = h.tokens.clone();
                tokens.push(w);
                cands.push(Candidate { parent: k, token: w, score: h.score + lp, tokens });
            }
        }
        cands.sort_by(|a, b| rank(a.score, &a.tokens, b.score, &b.tokens));
        cands.truncate(config.beam_size);

        let keep: Vec<&Candidate> = cands.iter().filter(|c| c.token != EOS).collect();
        let next_states = if keep.is_empty() {
            None
        } else {
            let parents: Vec<usize> = keep.iter().map(|c| c.parent).collect();
            let tokens: Vec<usize> = keep.iter().map(|c| c.token).collect();
            let sub = step_rows(&step, &parents);
            Some(model.advance(&sub, &states.gather_rows(&parents), &tokens)?)
        };

        let mut next_live = Vec::with_capacity(keep.len());
        let mut kept = 0;
        for c in &cands {
            let parent = &live[c.parent];
            let mut h = Hypothesis {
                tokens: c.tokens.clone(),
                score: c.score,
                step_scores: parent.step_scores.clone(),
                attention: parent.attention.clone(),
                state: parent.state.clone(),
                finished: c.token == EOS,
            };
            h.step_scores.push(step.log_probs.row(c.parent)[c.token]);
            h.attention.push(step.attention.row(c.parent).to_vec());
            if h.finished {
                done.push(h);
            } else {
                h.state = next_states.as_ref().expect("live candidates advance").row(kept).to_vec();
                kept += 1;
                next_live.push(h);
            }
        }
        live = next_live;
    }

    let mut out = if done.is_empty() { live } else { done };
    out.sort_by(|a, b| {
        rank(a.ranking_score(config.length_norm), &a.tokens, b.ranking_score(config.length_norm), &b.tokens)
    });
    Ok(out)
}

fn stack_states(live: &[Hypothesis]) -> Tensor {
    let d = live[0].state.len();
    Tensor::matrix(live.len(), d, live.iter().flat_map(|h| h.state.iter().copied()).collect())
}

fn step_rows(step: &crate::models::InferStep, rows: &[usize]) -> crate::models::InferStep {
    crate::models::InferStep {
        log_probs: step.log_probs.gather_rows(rows),
        attention: step.attention.gather_rows(rows),
        context: step.context.gather_rows(rows),
        z: step.z.as_ref().map(|z| z.gather_rows(rows)),
        prior: None,
    }
}

/// Repeated argmax (smallest id on ties) until EOS or `max_out_len`.
pub fn greedy(model: &Model, src: &[usize], max_out_len: Option<usize>) -> Result<Hypothesis> {
    let enc = model.encode_source(src)?;
    let max_len = max_out_len.unwrap_or(2 * src.len() + 10);
    let mut h = Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        step_scores: Vec::new(),
        attention: Vec::new(),
        state: enc.initial_state.data().to_vec(),
        finished: false,
    };
    let mut state = enc.initial_state.clone();
    for _ in 0..max_len {
        let prev = *h.tokens.last().unwrap_or(&BOS);
        let step = model.infer_step(&enc, &[prev], &state, None)?;
        let row = step.log_probs.row(0);
        let (w, &lp) = row
            .iter()
            .enumerate()
            .filter(|(w, _)| emittable(*w))
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty vocabulary");
        h.tokens.push(w);
        h.score += lp;
        h.step_scores.push(lp);
        h.attention.push(step.attention.row(0).to_vec());
        if w == EOS {
            h.finished = true;
            break;
        }
        state = model.advance(&step, &state, &[w])?;
        h.state = state.data().to_vec();
    }
    Ok(h)
}

/// Best words for each source sentence; sentence `i` uses noise stream `i`
/// when prior noise is on.
pub fn translate_all(model: &Model, sources: &[Vec<usize>], config: &BeamConfig) -> Result<Vec<Vec<usize>>> {
    sources
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let mut rng = config.prior_noise.map(|s| substream(s, Stream::Decode, i as u64));
            let hyps = beam_search_with(model, src, config, rng.as_mut())?;
            Ok(hyps.first().map(|h| h.words().to_vec()).unwrap_or_default())
        })
        .collect()
}

/// Scores `target` (EOS appended) under the inference path; returns the
/// per-step log-probabilities and attention rows.
pub fn score_sequence(model: &Model, enc: &EncodedSource, target: &[usize]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut state = enc.initial_state.clone();
    let mut prev = BOS;
    let mut scores = Vec::with_capacity(target.len() + 1);
    let mut attention = Vec::with_capacity(target.len() + 1);
    for (j, &y) in target.iter().chain(std::iter::once(&EOS)).enumerate() {
        let step = model.infer_step(enc, &[prev], &state, None)?;
        scores.push(step.log_probs.row(0)[y]);
        attention.push(step.attention.row(0).to_vec());
        if j < target.len() {
            state = model.advance(&step, &state, &[y])?;
        }
        prev = y;
    }
    Ok((scores, attention))
}

/// A word alignment link `(source index, target index)`, both 0-based.
pub type Link = (usize, usize);

/// Feeds the reference through the decoder and links each target word to
/// its most attended source position (smallest index on ties). The EOS step
/// produces no link.
pub fn force_decode_alignments(model: &Model, src: &[usize], reference: &[usize]) -> Result<Vec<Link>> {
    if reference.is_empty() {
        return Err(Error::invalid("empty reference"));
    }
    let enc = model.encode_source(src)?;
    let (_, attention) = score_sequence(model, &enc, reference)?;
    Ok(attention[..reference.len()]
        .iter()
        .enumerate()
        .map(|(j, alpha)| (argmax_first(alpha), j))
        .collect())
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `i-j` pairs separated by spaces.
pub fn format_links(links: &[Link]) -> String {
    links.iter().map(|(i, j)| format!("{i}-{j}")).collect::<Vec<_>>().join(" ")
}

/// Parses `i-j` pairs; `i?j` marks a possible-only link and is returned in
/// the second list.
pub fn parse_links(line: &str) -> Result<(Vec<Link>, Vec<Link>)> {
    let mut sure = Vec::new();
    let mut possible = Vec::new();
    for item in line.split_whitespace() {
        let (sep, dst) = if item.contains('-') { ('-', &mut sure) } else { ('?', &mut possible) };
        let (a, b) = item.split_once(sep).ok_or_else(|| Error::format(format!("bad alignment link {item:?}")))?;
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format(format!("bad alignment link {item:?}")));
        dst.push((parse(a)?, parse(b)?));
    }
    Ok((sure, possible))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Dims, ModelConfig, Variant};
    use crate::rng::stream;
    use rand::Rng;

    fn random_model(variant: Variant, vocab: usize, seed: u64, scale: f64) -> Model {
        let config = ModelConfig::new(variant, 8, vocab, Dims { d_e: 4, d_h: 5, d_z: 3, d_a: 4, d_r: 6 });
        let mut m = Model::init(config, seed, false);
        let mut rng = stream(seed + 1, Stream::Init);
        for i in 0..m.params.len() {
            for v in m.params.tensor_mut(i).data_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
        m
    }

    fn uniform_model() -> Model {
        let mut m = random_model(Variant::Vrnmt, 7, 1, 0.5);
        for p in ["readout.", "out."] {
            m.params.zero_prefix(p);
        }
        m
    }

    #[test]
    fn beam_one_equals_greedy() {
        for seed in 0..10 {
            let m = random_model(Variant::Vrnmt, 9, seed, 1.5);
            let src = [4, 5, 6, 7];
            let g = greedy(&m, &src, None).unwrap();
            let b = beam_search(&m, &src, &BeamConfig { beam_size: 1, ..BeamConfig::default() }).unwrap();
            assert_eq!(b[0].tokens, g.tokens);
            assert_eq!(b[0].score, g.score);
        }
    }

    #[test]
    fn uniform_model_prefers_smallest_ids() {
        let m = uniform_model();
        let hyps = beam_search(&m, &[4, 5], &BeamConfig { beam_size: 3, ..BeamConfig::default() }).unwrap();
        assert_eq!(hyps[0].tokens, vec![EOS]);
        let g = greedy(&m, &[4, 5], Some(3)).unwrap();
        assert_eq!(g.tokens, vec![1, 1, 1]);
        let cfg = BeamConfig { beam_size: 4, max_out_len: Some(1), ..BeamConfig::default() };
        let hyps = beam_search(&m, &[4], &cfg).unwrap();
        assert_eq!(hyps.iter().map(|h| h.tokens.clone()).collect::<Vec<_>>(), vec![vec![EOS]]);
    }

    #[test]
    fn stored_scores_match_rescoring() {
        for seed in 0..5 {
            let m = random_model(Variant::Vrnmt, 9, seed, 1.0);
            let src = [4, 6, 5];
            let enc = m.encode_source(&src).unwrap();
            for h in beam_search(&m, &src, &BeamConfig { beam_size: 5, ..BeamConfig::default() }).unwrap() {
                let (scores, _) = score_sequence(&m, &enc, h.words()).unwrap();
                let total: f64 = scores[..h.tokens.len()].iter().sum();
                assert!((total - h.score).abs() < 1e-9);
                let sum: f64 = h.step_scores.iter().sum();
                assert!((sum - h.score).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unfinished_hypotheses_returned_at_length_limit() {
        let mut m = random_model(Variant::Baseline, 9, 3, 0.5);
        // Make EOS impossible to choose.
        let mut b = m.params.get("out.b").unwrap().clone();
        b.data_mut()[EOS] = -1e3;
        m.params.set("out.b", b).unwrap();
        let hyps = beam_search(&m, &[4, 5], &BeamConfig { beam_size: 2, max_out_len: Some(2), ..BeamConfig::default() }).unwrap();
        assert_eq!(hyps.len(), 2);
        assert!(hyps.iter().all(|h| !h.finished && h.tokens.len() == 2));
    }

    #[test]
    fn decoding_is_deterministic_and_noise_is_opt_in() {
        let m = random_model(Variant::Vrnmt, 9, 4, 1.5);
        let cfg = BeamConfig::default();
        assert_eq!(beam_search(&m, &[4, 5, 6], &cfg).unwrap(), beam_search(&m, &[4, 5, 6], &cfg).unwrap());
        let noisy = BeamConfig { prior_noise: Some(3), ..cfg.clone() };
        assert_eq!(beam_search(&m, &[4, 5, 6], &noisy).unwrap(), beam_search(&m, &[4, 5, 6], &noisy).unwrap());
        assert!(beam_search(&m, &[], &cfg).is_err());
        assert!(beam_search(&m, &[4], &BeamConfig { beam_size: 0, ..cfg }).is_err());
    }

    #[test]
    fn alignment_examples() {
        let m = random_model(Variant::Vrnmt, 9, 5, 1.0);
        assert_eq!(force_decode_alignments(&m, &[4], &[5, 6, 7]).unwrap(), vec![(0, 0), (0, 1), (0, 2)]);
        let mut flat = m.clone();
        flat.params.zero_prefix("att.v");
        assert_eq!(force_decode_alignments(&flat, &[4, 5, 6], &[5, 6]).unwrap(), vec![(0, 0), (0, 1)]);
        assert!(force_decode_alignments(&m, &[4], &[]).is_err());
    }

    #[test]
    fn alignments_follow_attention_argmax() {
        let m = random_model(Variant::VrnmtTd, 9, 6, 2.0);
        let (src, tgt) = ([4, 7, 5, 6], [8, 4, 5]);
        let enc = m.encode_source(&src).unwrap();
        let mut state = enc.initial_state.clone();
        let mut prev = BOS;
        let mut expected = Vec::new();
        for (j, &y) in tgt.iter().enumerate() {
            let step = m.infer_step(&enc, &[prev], &state, None).unwrap();
            let a = step.attention.row(0);
            let best = (0..a.len()).fold(0, |b, i| if a[i] > a[b] { i } else { b });
            expected.push((best, j));
            state = m.advance(&step, &state, &[y]).unwrap();
            prev = y;
        }
        assert_eq!(force_decode_alignments(&m, &src, &tgt).unwrap(), expected);
    }

    #[test]
    fn link_text_round_trip() {
        let links = vec![(0, 1), (2, 0)];
        assert_eq!(format_links(&links), "0-1 2-0");
        assert_eq!(parse_links("0-1 2-0 3?3").unwrap(), (links, vec![(3, 3)]));
        assert!(parse_links("0-x").is_err());
    }
}
