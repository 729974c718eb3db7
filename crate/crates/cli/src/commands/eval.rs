use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use vrnmt::data::corpus::read_lines;
use vrnmt::decoding::{parse_links, Link};
use vrnmt::metrics::{
    aer, bleu, bucketed_bleu, corpus_stats, n_grr, paired_bootstrap, BleuOptions, EvalReport, GoldAlignment, Tokens,
};

use crate::cli::{EvaluateArgs, Metric, SignificanceArgs};
use crate::error::{usage, CliResult};

/// Reference sets aligned with `count` candidates; one entry per file.
fn load_references(paths: &[PathBuf], count: usize) -> CliResult<Vec<Vec<Tokens>>> {
    if paths.is_empty() {
        return Err(usage("at least one --ref file is required"));
    }
    let mut refs = vec![Vec::with_capacity(paths.len()); count];
    for path in paths {
        let lines = read_lines(path)?;
        if lines.len() != count {
            return Err(vrnmt::Error::Format(format!(
                "{} has {} lines, expected {count}",
                path.display(),
                lines.len()
            ))
            .into());
        }
        for (set, line) in refs.iter_mut().zip(lines) {
            set.push(line);
        }
    }
    Ok(refs)
}

fn read_alignments(path: &Path) -> CliResult<Vec<(Vec<Link>, Vec<Link>)>> {
    let text = fs::read_to_string(path).map_err(vrnmt::Error::from)?;
    Ok(text.lines().map(parse_links).collect::<vrnmt::Result<_>>()?)
}

/// Gold links: sure links come from `--sure` (`i?j` entries there are
/// possible-only); `--possible`, when given, must list every sure link.
fn gold_alignments(a: &EvaluateArgs, count: usize) -> CliResult<Vec<GoldAlignment>> {
    let sure_path = a.sure.as_ref().ok_or_else(|| usage("--metric aer needs --sure"))?;
    let sure = read_alignments(sure_path)?;
    let possible = a.possible.as_ref().map(|p| read_alignments(p)).transpose()?;
    if sure.len() != count || possible.as_ref().is_some_and(|p| p.len() != count) {
        return Err(vrnmt::Error::Format(format!("gold alignment files must have {count} lines")).into());
    }
    sure.into_iter()
        .enumerate()
        .map(|(i, (s, maybe))| {
            let p: Vec<Link> = match &possible {
                Some(p) => p[i].0.iter().chain(&p[i].1).copied().collect(),
                None => s.iter().chain(&maybe).copied().collect(),
            };
            Ok(GoldAlignment::new(s, p)?)
        })
        .collect()
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let opts = BleuOptions { max_n: a.n.unwrap_or(4), smoothing: a.smooth, lowercase: !a.case_sensitive };
    let report = match a.metric {
        Metric::Bleu => {
            let hyps = read_lines(&a.hyp)?;
            let refs = load_references(&a.refs, hyps.len())?;
            EvalReport::bleu(&bleu(&hyps, &refs, &opts)?, hyps.len(), &opts)
        }
        Metric::BucketedBleu => {
            let hyps = read_lines(&a.hyp)?;
            let refs = load_references(&a.refs, hyps.len())?;
            let source = a.source.as_ref().ok_or_else(|| usage("--metric bucketed-bleu needs --source"))?;
            let lengths: Vec<usize> = read_lines(source)?.iter().map(Vec::len).collect();
            let buckets = bucketed_bleu(&hyps, &refs, &lengths, a.bucket_width, &opts)?;
            EvalReport::bucketed(&buckets, &bleu(&hyps, &refs, &opts)?, hyps.len(), &opts)
        }
        Metric::Ngrr => {
            let n = a.n.unwrap_or(1);
            if a.group_size == 0 {
                return Err(usage("--group-size must be at least 1"));
            }
            let mut hyps = read_lines(&a.hyp)?;
            if !a.case_sensitive {
                hyps.iter_mut().flatten().for_each(|t| *t = t.to_lowercase());
            }
            if hyps.len() % a.group_size != 0 {
                return Err(vrnmt::Error::Format(format!(
                    "{} lines do not split into groups of {}",
                    hyps.len(),
                    a.group_size
                ))
                .into());
            }
            let groups: Vec<Vec<Tokens>> = hyps.chunks(a.group_size).map(<[Tokens]>::to_vec).collect();
            EvalReport {
                metric: format!("ngrr-{n}"),
                value: n_grr(&groups, n)?,
                count: groups.len(),
                buckets: Vec::new(),
                settings: format!("n={n} translations per source={}", a.group_size),
            }
        }
        Metric::Aer => {
            let predicted: Vec<BTreeSet<Link>> =
                read_alignments(&a.hyp)?.into_iter().map(|(s, p)| s.into_iter().chain(p).collect()).collect();
            let gold = gold_alignments(a, predicted.len())?;
            EvalReport {
                metric: "aer".into(),
                value: aer(&predicted, &gold)?,
                count: predicted.len(),
                buckets: Vec::new(),
                settings: "sure and possible links".into(),
            }
        }
    };
    print!("{}", report.table());
    if let Some(path) = &a.csv {
        fs::write(path, report.to_csv()).map_err(vrnmt::Error::from)?;
    }
    Ok(())
}

pub fn significance(a: &SignificanceArgs) -> CliResult<()> {
    let opts = BleuOptions { max_n: a.n, smoothing: false, lowercase: !a.case_sensitive };
    let hyp_a = read_lines(&a.hyp_a)?;
    let hyp_b = read_lines(&a.hyp_b)?;
    let refs = load_references(&a.refs, hyp_a.len())?;
    if hyp_b.len() != hyp_a.len() {
        return Err(vrnmt::Error::Format(format!("system A has {} lines, system B {}", hyp_a.len(), hyp_b.len())).into());
    }
    let stats_a = corpus_stats(&hyp_a, &refs, &opts)?;
    let stats_b = corpus_stats(&hyp_b, &refs, &opts)?;
    let r = paired_bootstrap(&stats_a, &stats_b, a.resamples, a.seed, &opts)?;
    println!("bleu_a\t{:.2}", 100.0 * r.bleu_a);
    println!("bleu_b\t{:.2}", 100.0 * r.bleu_b);
    println!("resamples\t{}", r.resamples);
    println!("p_value\t{}", r.p_value);
    Ok(())
}
