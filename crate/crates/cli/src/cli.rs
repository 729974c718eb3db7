use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Variational recurrent neural machine translation: data generation,
/// training, decoding, alignment and evaluation.
///
/// Every subcommand accepts `--config FILE` with `key = value` lines, where
/// keys are the long flag names; flags given on the command line win.
/// Exit status: 0 success, 1 usage error, 2 data or format error,
/// 3 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "vrnmt", version, args_override_self = true)]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic parallel corpus (train/valid/test splits).
    GenData(GenDataArgs),
    /// Build a vocabulary file from one side of a corpus.
    BuildVocab(BuildVocabArgs),
    /// Train a model and keep the best-validation checkpoint.
    Train(Box<TrainArgs>),
    /// Translate a source file with beam search.
    Translate(TranslateArgs),
    /// Extract attention alignments by forced decoding of references.
    Align(AlignArgs),
    /// Score translations or alignments.
    Evaluate(EvaluateArgs),
    /// Paired bootstrap significance test between two systems.
    Significance(SignificanceArgs),
    /// Finite-difference check of the full per-sentence objective.
    GradCheck(GradCheckArgs),
    /// Combine training logs and evaluation CSVs into comparison tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// copy, reverse, lexmap or lexmap_swap.
    #[arg(long, default_value = "lexmap_swap")]
    pub task: String,
    #[arg(long, default_value_t = 5000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 500)]
    pub valid_pairs: usize,
    #[arg(long, default_value_t = 500)]
    pub test_pairs: usize,
    /// Distinct word types.
    #[arg(long, default_value_t = 50)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.3)]
    pub swap_prob: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Writes {train,valid,test}.{src,tgt} here.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    /// One tokenized sentence per line.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Vocabulary size including the four reserved tokens.
    #[arg(long, default_value_t = 30000)]
    pub max_size: usize,
    /// One token per line after the four reserved tokens.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct VocabPaths {
    /// Source vocabulary file.
    #[arg(long, value_name = "FILE")]
    pub src_vocab: PathBuf,
    /// Target vocabulary file.
    #[arg(long, value_name = "FILE")]
    pub tgt_vocab: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training source sentences.
    #[arg(long, value_name = "FILE")]
    pub src: PathBuf,
    /// Training target sentences.
    #[arg(long, value_name = "FILE")]
    pub tgt: PathBuf,
    /// Validation source sentences.
    #[arg(long, value_name = "FILE")]
    pub valid_src: PathBuf,
    /// Validation target sentences.
    #[arg(long, value_name = "FILE")]
    pub valid_tgt: PathBuf,
    #[command(flatten)]
    pub vocab: VocabPaths,
    /// baseline, vrnmt or vrnmt-td.
    #[arg(long, default_value = "vrnmt")]
    pub variant: String,
    /// Checkpoint whose matching tensors initialize the model.
    #[arg(long, value_name = "FILE")]
    pub init_from: Option<PathBuf>,
    /// Best-validation checkpoint path.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Checkpoint written after the final epoch.
    #[arg(long, value_name = "FILE")]
    pub last_checkpoint: Option<PathBuf>,
    /// Training log, one tab-separated line per epoch.
    #[arg(long, value_name = "FILE")]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub d_e: usize,
    #[arg(long, default_value_t = 64)]
    pub d_h: usize,
    #[arg(long, default_value_t = 16)]
    pub d_z: usize,
    #[arg(long, default_value_t = 64)]
    pub d_a: usize,
    /// Readout hidden size.
    #[arg(long, default_value_t = 64)]
    pub d_r: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.95)]
    pub rho: f64,
    /// RMSProp denominator constant.
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0.3)]
    pub dropout: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Latent samples per decoding step.
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 50)]
    pub max_len: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Linear KL warmup over this many updates (off when absent).
    #[arg(long)]
    pub kl_anneal: Option<usize>,
    /// Orthogonal initialization of recurrent matrices.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub orthogonal: bool,
}

#[derive(Args, Debug)]
pub struct DecodeOptions {
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    /// Output length limit (default 2 * source length + 10).
    #[arg(long)]
    pub max_out_len: Option<usize>,
    /// Rank finished hypotheses by score per token.
    #[arg(long)]
    pub length_norm: bool,
    /// Sample z from the prior with this seed instead of using its mean.
    #[arg(long, value_name = "SEED")]
    pub prior_noise: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub vocab: VocabPaths,
    /// Source sentences, one per line.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Translations, one per line.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
    #[command(flatten)]
    pub decode: DecodeOptions,
    /// Decode by repeated argmax instead of beam search.
    #[arg(long)]
    pub greedy: bool,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub vocab: VocabPaths,
    /// Source sentences.
    #[arg(long, value_name = "FILE")]
    pub src: PathBuf,
    /// Reference translations to force through the decoder.
    #[arg(long, value_name = "FILE")]
    pub tgt: PathBuf,
    /// `i-j` links per sentence pair, 0-based source and target indices.
    #[arg(long, value_name = "FILE")]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Bleu,
    Ngrr,
    Aer,
    BucketedBleu,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, value_enum, default_value = "bleu")]
    pub metric: Metric,
    /// Translations, or predicted alignments for aer.
    #[arg(long, value_name = "FILE")]
    pub hyp: PathBuf,
    /// Reference file; repeat for multiple references.
    #[arg(long = "ref", value_name = "FILE")]
    pub refs: Vec<PathBuf>,
    /// N-gram order (default 4 for BLEU, 1 for N-GRR).
    #[arg(long)]
    pub n: Option<usize>,
    /// Consecutive hypothesis lines translating the same source (N-GRR).
    #[arg(long, default_value_t = 1)]
    pub group_size: usize,
    /// Source file giving sentence lengths for bucketed BLEU.
    #[arg(long, value_name = "FILE")]
    pub source: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bucket_width: usize,
    #[arg(long)]
    pub case_sensitive: bool,
    /// Add-one smoothing for orders two and up.
    #[arg(long)]
    pub smooth: bool,
    /// Sure alignment links (`i-j`) for aer.
    #[arg(long, value_name = "FILE")]
    pub sure: Option<PathBuf>,
    /// Possible links; defaults to the sure links.
    #[arg(long, value_name = "FILE")]
    pub possible: Option<PathBuf>,
    /// Write the metric,bucket,value,count CSV here.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SignificanceArgs {
    /// Baseline system output.
    #[arg(long, value_name = "FILE")]
    pub hyp_a: PathBuf,
    /// Compared system output.
    #[arg(long, value_name = "FILE")]
    pub hyp_b: PathBuf,
    /// Reference file; repeat for multiple references.
    #[arg(long = "ref", value_name = "FILE")]
    pub refs: Vec<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// BLEU n-gram order.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long)]
    pub case_sensitive: bool,
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    /// Variant to check; all three when absent.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, default_value_t = 8)]
    pub d_e: usize,
    #[arg(long, default_value_t = 12)]
    pub d_h: usize,
    #[arg(long, default_value_t = 6)]
    pub d_z: usize,
    #[arg(long, default_value_t = 12)]
    pub d_a: usize,
    #[arg(long, default_value_t = 12)]
    pub d_r: usize,
    /// Source and target vocabulary size.
    #[arg(long, default_value_t = 20)]
    pub vocab: usize,
    /// Maximum sentence length.
    #[arg(long, default_value_t = 5)]
    pub len: usize,
    /// Parameters are drawn uniformly from [-scale, scale].
    #[arg(long, default_value_t = 0.5)]
    pub scale: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// SYSTEM=PATH training log; repeatable.
    #[arg(long = "log", value_name = "SYSTEM=PATH")]
    pub logs: Vec<String>,
    /// SYSTEM:TESTSET=PATH evaluation CSV; repeatable.
    #[arg(long = "eval", value_name = "SYSTEM:TESTSET=PATH")]
    pub evals: Vec<String>,
    /// Comparison table output (printed to stdout as well).
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
    /// system,testset,bucket,value,count CSV of length buckets.
    #[arg(long, value_name = "FILE")]
    pub buckets: Option<PathBuf>,
}
