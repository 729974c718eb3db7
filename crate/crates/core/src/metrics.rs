//! Corpus BLEU, n-gram repetition rate, alignment error rate, length-bucketed
//! BLEU and paired bootstrap resampling.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::Rng;

use crate::decoding::Link;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

pub type Tokens = Vec<String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BleuOptions {
    pub max_n: usize,
    /// Add-one smoothing of precisions of order two and up.
    pub smoothing: bool,
    pub lowercase: bool,
}

impl Default for BleuOptions {
    fn default() -> Self {
        BleuOptions { max_n: 4, smoothing: false, lowercase: true }
    }
}

/// Sufficient statistics of one candidate against its references.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentenceStats {
    /// Clipped matches per order `1..=max_n`.
    pub matches: Vec<usize>,
    /// Candidate n-grams per order.
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    /// Reference length closest to the candidate's (shorter on ties).
    pub ref_len: usize,
}

impl SentenceStats {
    fn zero(max_n: usize) -> Self {
        SentenceStats { matches: vec![0; max_n], totals: vec![0; max_n], hyp_len: 0, ref_len: 0 }
    }

    fn add(&mut self, other: &SentenceStats) {
        for n in 0..self.matches.len() {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BleuScore {
    /// In `[0, 1]`.
    pub score: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn normalize(tokens: &[String], lowercase: bool) -> Vec<String> {
    if lowercase {
        tokens.iter().map(|t| t.to_lowercase()).collect()
    } else {
        tokens.to_vec()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

pub fn sentence_stats(candidate: &[String], references: &[Tokens], opts: &BleuOptions) -> SentenceStats {
    let cand = normalize(candidate, opts.lowercase);
    let refs: Vec<Vec<String>> = references.iter().map(|r| normalize(r, opts.lowercase)).collect();
    let mut st = SentenceStats::zero(opts.max_n);
    for n in 1..=opts.max_n {
        let counts = ngram_counts(&cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        st.totals[n - 1] = counts.values().sum();
        st.matches[n - 1] = counts.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
    }
    st.hyp_len = cand.len();
    st.ref_len = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| ((r as i64 - cand.len() as i64).abs(), r))
        .unwrap_or(0);
    st
}

/// BLEU from summed statistics.
pub fn bleu_from_stats(total: &SentenceStats, opts: &BleuOptions) -> BleuScore {
    let precisions: Vec<f64> = (0..opts.max_n)
        .map(|i| {
            let (m, t) = (total.matches[i] as f64, total.totals[i] as f64);
            if opts.smoothing && i > 0 {
                (m + 1.0) / (t + 1.0)
            } else if t > 0.0 {
                m / t
            } else {
                0.0
            }
        })
        .collect();
    let (c, r) = (total.hyp_len as f64, total.ref_len as f64);
    let brevity_penalty = if c == 0.0 { 0.0 } else { (1.0 - r / c).min(0.0).exp() };
    let score = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        brevity_penalty * (precisions.iter().map(|p| p.ln()).sum::<f64>() / opts.max_n as f64).exp()
    };
    BleuScore { score, precisions, brevity_penalty, hyp_len: total.hyp_len, ref_len: total.ref_len }
}

pub fn corpus_stats(candidates: &[Tokens], references: &[Vec<Tokens>], opts: &BleuOptions) -> Result<Vec<SentenceStats>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCorpus("no candidate sentences".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    if opts.max_n == 0 {
        return Err(Error::invalid("BLEU order must be at least 1"));
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("sentence {} has no reference", i + 1)));
    }
    Ok(candidates.iter().zip(references).map(|(c, r)| sentence_stats(c, r, opts)).collect())
}

fn sum_stats<'a>(stats: impl IntoIterator<Item = &'a SentenceStats>, max_n: usize) -> SentenceStats {
    let mut total = SentenceStats::zero(max_n);
    for s in stats {
        total.add(s);
    }
    total
}

/// Corpus-level BLEU with clipped n-gram precisions and the brevity penalty.
pub fn bleu(candidates: &[Tokens], references: &[Vec<Tokens>], opts: &BleuOptions) -> Result<BleuScore> {
    let stats = corpus_stats(candidates, references, opts)?;
    Ok(bleu_from_stats(&sum_stats(&stats, opts.max_n), opts))
}

/// Mean fraction of repeated n-grams per translation. `groups[c]` holds
/// the translations of source sentence `c`; translations shorter than `n`
/// are left out of the average.
pub fn n_grr(groups: &[Vec<Tokens>], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    let mut terms: Vec<f64> = groups
        .iter()
        .flatten()
        .filter(|sent| sent.len() >= n)
        .map(|sent| {
            let grams: Vec<&[String]> = sent.windows(n).collect();
            let unique: BTreeSet<&[String]> = grams.iter().copied().collect();
            (grams.len() - unique.len()) as f64 / grams.len() as f64
        })
        .collect();
    if terms.is_empty() {
        return Err(Error::invalid(format!("every sentence is shorter than {n} tokens")));
    }
    // Summing in sorted order makes the result independent of sentence order.
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Gold links of one sentence pair; `possible` includes every sure link.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldAlignment {
    pub sure: BTreeSet<Link>,
    pub possible: BTreeSet<Link>,
}

impl GoldAlignment {
    pub fn new(sure: impl IntoIterator<Item = Link>, possible: impl IntoIterator<Item = Link>) -> Result<Self> {
        let sure: BTreeSet<Link> = sure.into_iter().collect();
        let possible: BTreeSet<Link> = possible.into_iter().collect();
        if let Some(l) = sure.iter().find(|l| !possible.contains(l)) {
            return Err(Error::invalid(format!("sure link {}-{} is missing from the possible set", l.0, l.1)));
        }
        Ok(GoldAlignment { sure, possible })
    }

    /// Every sure link is also possible.
    pub fn sure_only(sure: impl IntoIterator<Item = Link>) -> Self {
        let sure: BTreeSet<Link> = sure.into_iter().collect();
        GoldAlignment { possible: sure.clone(), sure }
    }
}

/// `1 - (|A∩S| + |A∩P|) / (|A| + |S|)`, counts summed over sentences.
pub fn aer(predicted: &[BTreeSet<Link>], gold: &[GoldAlignment]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::invalid(format!("{} predicted alignments for {} gold ones", predicted.len(), gold.len())));
    }
    let (mut hit, mut denom) = (0usize, 0usize);
    for (a, g) in predicted.iter().zip(gold) {
        if let Some(l) = g.sure.iter().find(|l| !g.possible.contains(l)) {
            return Err(Error::invalid(format!("sure link {}-{} is missing from the possible set", l.0, l.1)));
        }
        hit += a.intersection(&g.sure).count() + a.intersection(&g.possible).count();
        denom += a.len() + g.sure.len();
    }
    if denom == 0 {
        return Err(Error::invalid("AER is undefined with no predicted and no sure links"));
    }
    Ok(1.0 - hit as f64 / denom as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bucket {
    /// Source lengths `lo..=hi`.
    pub lo: usize,
    pub hi: usize,
    pub bleu: BleuScore,
    pub count: usize,
}

impl Bucket {
    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }
}

/// Corpus BLEU within source-length buckets `[1, w], (w, 2w], ...`; empty
/// buckets are omitted.
pub fn bucketed_bleu(
    candidates: &[Tokens],
    references: &[Vec<Tokens>],
    source_lengths: &[usize],
    width: usize,
    opts: &BleuOptions,
) -> Result<Vec<Bucket>> {
    if width == 0 {
        return Err(Error::invalid("bucket width must be at least 1"));
    }
    if source_lengths.len() != candidates.len() {
        return Err(Error::invalid(format!(
            "{} source lengths for {} candidates",
            source_lengths.len(),
            candidates.len()
        )));
    }
    let stats = corpus_stats(candidates, references, opts)?;
    let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, &len) in source_lengths.iter().enumerate() {
        members.entry(len.saturating_sub(1) / width).or_default().push(i);
    }
    Ok(members
        .into_iter()
        .map(|(k, idx)| Bucket {
            lo: k * width + 1,
            hi: (k + 1) * width,
            bleu: bleu_from_stats(&sum_stats(idx.iter().map(|&i| &stats[i]), opts.max_n), opts),
            count: idx.len(),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapResult {
    /// Fraction of resamples where system B does not beat system A.
    pub p_value: f64,
    pub bleu_a: f64,
    pub bleu_b: f64,
    pub resamples: usize,
}

/// Paired bootstrap over per-sentence statistics of two systems on the
/// same test set. Ties count against system B.
pub fn paired_bootstrap(
    stats_a: &[SentenceStats],
    stats_b: &[SentenceStats],
    resamples: usize,
    seed: u64,
    opts: &BleuOptions,
) -> Result<BootstrapResult> {
    if stats_a.len() != stats_b.len() {
        return Err(Error::invalid(format!("system A has {} sentences, system B {}", stats_a.len(), stats_b.len())));
    }
    if stats_a.is_empty() {
        return Err(Error::EmptyCorpus("no sentences to resample".into()));
    }
    if resamples < 100 {
        return Err(Error::invalid(format!("at least 100 resamples are needed, got {resamples}")));
    }
    let n = stats_a.len();
    let mut rng = stream(seed, Stream::Bootstrap);
    let mut not_better = 0usize;
    let mut idx = vec![0usize; n];
    for _ in 0..resamples {
        idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
        let a = bleu_from_stats(&sum_stats(idx.iter().map(|&i| &stats_a[i]), opts.max_n), opts).score;
        let b = bleu_from_stats(&sum_stats(idx.iter().map(|&i| &stats_b[i]), opts.max_n), opts).score;
        if b <= a {
            not_better += 1;
        }
    }
    Ok(BootstrapResult {
        p_value: not_better as f64 / resamples as f64,
        bleu_a: bleu_from_stats(&sum_stats(stats_a, opts.max_n), opts).score,
        bleu_b: bleu_from_stats(&sum_stats(stats_b, opts.max_n), opts).score,
        resamples,
    })
}

/// One `metric,bucket,value,count` row.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub bucket: String,
    pub value: f64,
    pub count: usize,
}

/// A metric's corpus value and optional per-bucket values. BLEU values
/// are stored ×100.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub count: usize,
    pub buckets: Vec<ReportRow>,
    pub settings: String,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "metric,bucket,value,count"
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = vec![ReportRow { bucket: "all".into(), value: self.value, count: self.count }];
        rows.extend(self.buckets.iter().cloned());
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::csv_header());
        for r in self.rows() {
            let _ = writeln!(out, "{},{},{},{}", self.metric, r.bucket, r.value, r.count);
        }
        out
    }

    /// Parses rows written by [`EvalReport::to_csv`]; several metrics may
    /// share one file.
    pub fn parse_csv(text: &str) -> Result<Vec<(String, ReportRow)>> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == Self::csv_header() => {}
            _ => return Err(Error::format("report CSV must start with metric,bucket,value,count")),
        }
        lines
            .map(|line| {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 4 {
                    return Err(Error::format(format!("bad report row {line:?}")));
                }
                let value = cols[2].parse().map_err(|_| Error::format(format!("bad value in {line:?}")))?;
                let count = cols[3].parse().map_err(|_| Error::format(format!("bad count in {line:?}")))?;
                Ok((cols[0].to_string(), ReportRow { bucket: cols[1].to_string(), value, count }))
            })
            .collect()
    }

    pub fn bleu(score: &BleuScore, count: usize, opts: &BleuOptions) -> Self {
        EvalReport {
            metric: "bleu".into(),
            value: 100.0 * score.score,
            count,
            buckets: Vec::new(),
            settings: settings(opts),
        }
    }

    pub fn bucketed(buckets: &[Bucket], overall: &BleuScore, count: usize, opts: &BleuOptions) -> Self {
        EvalReport {
            metric: "bucketed-bleu".into(),
            value: 100.0 * overall.score,
            count,
            buckets: buckets.iter().map(|b| ReportRow { bucket: b.label(), value: 100.0 * b.bleu.score, count: b.count }).collect(),
            settings: settings(opts),
        }
    }

    /// Human-readable summary.
    pub fn table(&self) -> String {
        let mut out = format!("{} ({})\n", self.metric, self.settings);
        for r in self.rows() {
            let _ = writeln!(out, "  {:<10} {:>10.2} {:>8}", r.bucket, r.value, r.count);
        }
        out
    }
}

fn settings(opts: &BleuOptions) -> String {
    format!(
        "n={} {} {}",
        opts.max_n,
        if opts.lowercase { "case-insensitive" } else { "case-sensitive" },
        if opts.smoothing { "add-one" } else { "unsmoothed" }
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Tokens {
        s.split_whitespace().map(String::from).collect()
    }

    fn refs(s: &[&str]) -> Vec<Vec<Tokens>> {
        s.iter().map(|r| vec![toks(r)]).collect()
    }

    fn cands(s: &[&str]) -> Vec<Tokens> {
        s.iter().map(|c| toks(c)).collect()
    }

    #[test]
    fn identity_is_perfect() {
        let c = ["a b c d e", "the cat sat on the mat"];
        assert_eq!(bleu(&cands(&c), &refs(&c), &BleuOptions::default()).unwrap().score, 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(bleu(&cands(&["x y z w"]), &refs(&["a b c d"]), &BleuOptions::default()).unwrap().score, 0.0);
    }

    #[test]
    fn hand_counted_clipping() {
        // Unigrams: the×3 clipped to 1, cat 1 → 2/4. Bigrams: "the the"×2
        // unmatched, "the cat" matched → 1/3. Trigrams: 0/2.
        let opts = BleuOptions { max_n: 4, ..BleuOptions::default() };
        let s = bleu(&cands(&["the the the cat"]), &refs(&["the cat sat"]), &opts).unwrap();
        assert_eq!(s.precisions[..3], [0.5, 1.0 / 3.0, 0.0]);
        assert_eq!(s.brevity_penalty, 1.0);
        assert_eq!(s.score, 0.0);
        let two = bleu(&cands(&["the the the cat"]), &refs(&["the cat sat"]), &BleuOptions { max_n: 2, ..opts }).unwrap();
        assert!((two.score - (0.5f64 / 3.0).sqrt()).abs() < 1e-15);
        // Short candidate: c = 2, r = 3.
        let short = bleu(&cands(&["the cat"]), &refs(&["the cat sat"]), &BleuOptions { max_n: 2, ..opts }).unwrap();
        assert!((short.brevity_penalty - (1.0f64 - 1.5).exp()).abs() < 1e-15);
        assert!((short.score - short.brevity_penalty).abs() < 1e-15);
    }

    #[test]
    fn case_and_smoothing_flags() {
        let c = cands(&["The Cat"]);
        let r = refs(&["the cat"]);
        assert_eq!(bleu(&c, &r, &BleuOptions { max_n: 2, ..BleuOptions::default() }).unwrap().score, 1.0);
        let sensitive = BleuOptions { max_n: 2, lowercase: false, ..BleuOptions::default() };
        assert_eq!(bleu(&c, &r, &sensitive).unwrap().score, 0.0);
        let smoothed = BleuOptions { smoothing: true, ..BleuOptions::default() };
        let (c, r) = (cands(&["a b"]), refs(&["a c"]));
        assert_eq!(bleu(&c, &r, &BleuOptions::default()).unwrap().score, 0.0);
        let s = bleu(&c, &r, &smoothed).unwrap();
        assert_eq!(s.precisions, vec![0.5, 0.5, 1.0, 1.0]);
        assert!((s.score - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn multiple_references_clip_by_maximum() {
        let r = vec![vec![toks("a a b"), toks("a c")]];
        let s = sentence_stats(&toks("a a a"), &r[0], &BleuOptions::default());
        assert_eq!(s.matches[0], 2);
        assert_eq!(s.ref_len, 3);
        assert!(bleu(&cands(&["a"]), &[vec![]], &BleuOptions::default()).is_err());
        assert!(bleu(&[], &[], &BleuOptions::default()).is_err());
    }

    #[test]
    fn ngrr_examples() {
        let g = |s: &[&str]| vec![s.iter().map(|x| toks(x)).collect::<Vec<_>>()];
        assert_eq!(n_grr(&g(&["a b c"]), 1).unwrap(), 0.0);
        assert_eq!(n_grr(&g(&["a a b"]), 1).unwrap(), 1.0 / 3.0);
        assert_eq!(n_grr(&g(&["a b a b"]), 2).unwrap(), 1.0 / 3.0);
        assert_eq!(n_grr(&g(&["a a b", "x"]), 2).unwrap(), 0.0);
        assert!(n_grr(&g(&["a"]), 2).is_err());
    }

    #[test]
    fn aer_examples() {
        let set = |v: &[Link]| v.iter().copied().collect::<BTreeSet<_>>();
        let all = GoldAlignment::sure_only([(0, 0), (1, 1)]);
        assert_eq!(aer(&[set(&[(0, 0), (1, 1)])], &[all.clone()]).unwrap(), 0.0);
        assert_eq!(aer(&[set(&[(0, 1)])], &[all]).unwrap(), 1.0);
        let g = GoldAlignment::new([(0, 0)], [(0, 0), (1, 1)]).unwrap();
        assert_eq!(aer(&[set(&[(0, 0), (1, 1)])], &[g]).unwrap(), 0.0);
        assert!(GoldAlignment::new([(0, 0)], [(1, 1)]).is_err());
    }

    #[test]
    fn aer_weakly_falls_when_possible_links_are_added() {
        let links: Vec<Link> = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).collect();
        let pick = |mask: u32| -> BTreeSet<Link> { (0..9).filter(|b| mask >> b & 1 == 1).map(|b| links[b]).collect() };
        for (s_mask, p_extra) in [(0b000_010_001u32, 0b100_000_000u32), (0b100_000_001, 0b000_110_000), (0b000_000_000, 0b001_000_100)] {
            let sure = pick(s_mask);
            let possible: BTreeSet<Link> = sure.union(&pick(p_extra)).copied().collect();
            let gold = GoldAlignment { sure: sure.clone(), possible: possible.clone() };
            for a_mask in 0u32..512 {
                let a = pick(a_mask);
                if a.is_empty() && sure.is_empty() {
                    continue;
                }
                let base = aer(&[a.clone()], &[gold.clone()]).unwrap();
                // Direct formula.
                let direct = 1.0
                    - (a.intersection(&sure).count() + a.intersection(&possible).count()) as f64
                        / (a.len() + sure.len()) as f64;
                assert_eq!(base, direct);
                for &l in possible.difference(&a) {
                    let mut bigger = a.clone();
                    bigger.insert(l);
                    assert!(aer(&[bigger], &[gold.clone()]).unwrap() <= base + 1e-15);
                }
            }
        }
    }

    #[test]
    fn buckets_match_subset_bleu() {
        let c = cands(&["a b c d", "a b x d e", "p q r s t u", "a b", "p q r s"]);
        let r = refs(&["a b c d", "a b c d e", "p q r s t u", "a c", "p q r t"]);
        let lens = [2, 3, 7, 1, 12];
        let opts = BleuOptions { max_n: 2, ..BleuOptions::default() };
        let buckets = bucketed_bleu(&c, &r, &lens, 5, &opts).unwrap();
        assert_eq!(buckets.iter().map(Bucket::label).collect::<Vec<_>>(), vec!["1-5", "6-10", "11-15"]);
        let groups: [&[usize]; 3] = [&[0, 1, 3], &[2], &[4]];
        for (b, g) in buckets.iter().zip(groups) {
            let sub_c: Vec<Tokens> = g.iter().map(|&i| c[i].clone()).collect();
            let sub_r: Vec<Vec<Tokens>> = g.iter().map(|&i| r[i].clone()).collect();
            assert_eq!(b.bleu, bleu(&sub_c, &sub_r, &opts).unwrap());
            assert_eq!(b.count, g.len());
        }
        let one = bucketed_bleu(&c, &r, &lens, 100, &opts).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].bleu, bleu(&c, &r, &opts).unwrap());
    }

    #[test]
    fn bootstrap_extremes() {
        let opts = BleuOptions::default();
        let r = refs(&["a b c d e", "f g h i j", "k l m n o"]);
        let good = cands(&["a b c d e", "f g h i j", "k l m n o"]);
        let bad = cands(&["z z z z z", "y y y y y", "x x x x x"]);
        let sg = corpus_stats(&good, &r, &opts).unwrap();
        let sb = corpus_stats(&bad, &r, &opts).unwrap();
        assert_eq!(paired_bootstrap(&sg, &sg, 200, 1, &opts).unwrap().p_value, 1.0);
        assert_eq!(paired_bootstrap(&sb, &sg, 200, 1, &opts).unwrap().p_value, 0.0);
        assert!(paired_bootstrap(&sb, &sg[..2], 200, 1, &opts).is_err());
        assert!(paired_bootstrap(&sb, &sg, 99, 1, &opts).is_err());
        assert_eq!(paired_bootstrap(&sb, &sg, 300, 4, &opts).unwrap(), paired_bootstrap(&sb, &sg, 300, 4, &opts).unwrap());
    }

    #[test]
    fn report_csv_round_trip() {
        let opts = BleuOptions::default();
        let c = cands(&["a b c d", "a b c d e f"]);
        let b = bucketed_bleu(&c, &refs(&["a b c d", "a b c d e f"]), &[3, 9], 5, &opts).unwrap();
        let overall = bleu(&c, &refs(&["a b c d", "a b c d e f"]), &opts).unwrap();
        let rep = EvalReport::bucketed(&b, &overall, 2, &opts);
        let rows = EvalReport::parse_csv(&rep.to_csv()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].1, ReportRow { bucket: "1-5".into(), value: 100.0, count: 1 });
        assert!(EvalReport::parse_csv("x,y\n").is_err());
    }

    proptest! {
        #[test]
        fn bleu_is_order_invariant_and_self_perfect(
            sents in proptest::collection::vec(proptest::collection::vec("[a-e]", 4..9), 1..6),
            noise in proptest::collection::vec(proptest::collection::vec("[a-f]", 1..9), 1..6),
        ) {
            let n = sents.len().min(noise.len());
            let r: Vec<Vec<Tokens>> = sents[..n].iter().map(|s| vec![s.clone()]).collect();
            let c = noise[..n].to_vec();
            let opts = BleuOptions::default();
            prop_assert_eq!(bleu(&sents[..n].to_vec(), &r, &opts).unwrap().score, 1.0);
            let fwd = bleu(&c, &r, &opts).unwrap();
            let mut rc = c.clone();
            rc.reverse();
            let mut rr = r.clone();
            rr.reverse();
            let rev = bleu(&rc, &rr, &opts).unwrap();
            prop_assert_eq!(fwd.score, rev.score);
            prop_assert!((0.0..=1.0).contains(&fwd.score));
            let groups: Vec<Vec<Tokens>> = c.iter().map(|s| vec![s.clone()]).collect();
            if let Ok(rate) = n_grr(&groups, 1) {
                prop_assert!((0.0..=1.0).contains(&rate));
                let mut g2 = groups.clone();
                g2.reverse();
                prop_assert_eq!(rate, n_grr(&g2, 1).unwrap());
            }
        }
    }
}
