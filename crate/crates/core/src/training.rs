//! Minibatching, RMSProp, gradient clipping and the epoch loop.

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::corpus::IdPair;
use crate::data::vocab::PAD;
use crate::error::{Error, Result};
use crate::layers::{Dropout, PaddedIds};
use crate::models::{batch_objective, ForwardOptions, LatentMode, Model, TargetBatch};
use crate::params::{Dims, ParamStore, Variant};
use crate::rng::{substream, Stream};
use crate::tensor::{Graph, Tensor};

/// Training hyperparameters. Defaults follow the reference large-scale
/// setup where it states a value.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub dims: Dims,
    pub learning_rate: f64,
    pub rho: f64,
    pub eps: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub dropout: f64,
    pub batch_size: usize,
    /// Monte-Carlo samples per decoding step.
    pub samples: usize,
    pub max_len: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Linear KL warmup length in updates; `None` keeps the weight at 1.
    pub kl_anneal: Option<usize>,
    /// Orthogonal initialization of recurrent matrices.
    pub orthogonal: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Vrnmt,
            dims: Dims::default(),
            learning_rate: 5e-4,
            rho: 0.95,
            eps: 1e-4,
            momentum: 0.0,
            clip_norm: 1.0,
            dropout: 0.3,
            batch_size: 32,
            samples: 1,
            max_len: 50,
            epochs: 10,
            seed: 1,
            kl_anneal: None,
            orthogonal: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho {} must lie in (0, 1)", self.rho));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps {} must be positive", self.eps));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip norm {} must be positive", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.batch_size == 0 || self.samples == 0 || self.max_len == 0 {
            return bad("batch size, samples and max length must be positive".into());
        }
        if self.kl_anneal == Some(0) {
            return bad("kl_anneal must be positive when set".into());
        }
        let d = self.dims;
        if [d.d_e, d.d_h, d.d_z, d.d_a, d.d_r].contains(&0) {
            return bad(format!("dimensions must be positive: {d:?}"));
        }
        Ok(())
    }

    /// KL weight for the `update`-th step (0-based).
    pub fn kl_weight(&self, update: usize) -> f64 {
        match self.kl_anneal {
            Some(n) => ((update + 1) as f64 / n as f64).min(1.0),
            None => 1.0,
        }
    }
}

/// A padded minibatch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub src: PaddedIds,
    pub tgt: TargetBatch,
    /// Positions of the member pairs in the filtered corpus.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn from_pairs(pairs: &[IdPair], indices: Vec<usize>) -> Self {
        let src: Vec<&[usize]> = indices.iter().map(|&i| pairs[i].0.as_slice()).collect();
        let tgt: Vec<&[usize]> = indices.iter().map(|&i| pairs[i].1.as_slice()).collect();
        Batch { src: PaddedIds::from_sequences(&src, PAD), tgt: TargetBatch::new(&tgt), indices }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Pairs within `max_len` on both sides, in corpus order.
pub fn filter_pairs(pairs: &[IdPair], max_len: usize) -> Result<Vec<IdPair>> {
    let kept: Vec<IdPair> =
        pairs.iter().filter(|(s, t)| !s.is_empty() && !t.is_empty() && s.len() <= max_len && t.len() <= max_len).cloned().collect();
    if kept.is_empty() {
        return Err(Error::EmptyCorpus(format!("no pair survives the length limit of {max_len}")));
    }
    Ok(kept)
}

/// Pairs sorted into a pool this many batches wide before being grouped by
/// target length.
const BUCKET_POOL: usize = 20;

/// One epoch of batches: filtered, shuffled by `(seed, epoch)`, grouped by
/// similar target length inside shuffled pools, and padded. Every surviving
/// pair appears in exactly one batch.
pub fn make_batches(pairs: &[IdPair], batch_size: usize, max_len: usize, seed: u64, epoch: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let kept = filter_pairs(pairs, max_len)?;
    let mut rng = substream(seed, Stream::Shuffle, epoch);
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.shuffle(&mut rng);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for pool in order.chunks(batch_size * BUCKET_POOL) {
        let mut pool = pool.to_vec();
        pool.sort_by_key(|&i| kept[i].1.len());
        groups.extend(pool.chunks(batch_size).map(<[usize]>::to_vec));
    }
    groups.shuffle(&mut rng);
    Ok(groups.into_iter().map(|idx| Batch::from_pairs(&kept, idx)).collect())
}

/// Batches in corpus order, for evaluation.
pub fn sequential_batches(pairs: &[IdPair], batch_size: usize) -> Vec<Batch> {
    (0..pairs.len())
        .collect::<Vec<_>>()
        .chunks(batch_size.max(1))
        .map(|idx| Batch::from_pairs(pairs, idx.to_vec()))
        .collect()
}

/// Global L2 norm over all tensors.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::sum_sq).sum::<f64>().sqrt()
}

/// Rescales every gradient by `max_norm / norm` when the global norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

/// Per-parameter RMSProp accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    /// Running mean of squared gradients.
    pub mean_square: ParamStore,
    /// Update velocity; only kept when momentum is non-zero.
    pub velocity: Option<ParamStore>,
}

impl RmsProp {
    pub fn new(params: &ParamStore, momentum: f64) -> Self {
        let zeros = || {
            ParamStore::from_named(params.iter().map(|(n, t)| (n.to_string(), Tensor::zeros(t.shape()))).collect())
                .expect("names are unique")
        };
        RmsProp { mean_square: zeros(), velocity: (momentum != 0.0).then(zeros) }
    }
}

/// `n ← ρ n + (1 − ρ) g²`, `Δ ← −lr g / √(n + ε)`, `p ← p + Δ`, with the
/// optional momentum `v ← μ v + Δ`, `p ← p + v`. `grads[i]` belongs to
/// `params` entry `i`. A non-finite gradient aborts before any change.
pub fn rmsprop_update(params: &mut ParamStore, grads: &[Tensor], state: &mut RmsProp, config: &TrainConfig) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), params.len())));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.tensor(i).shape() {
            return Err(Error::Shape(format!("gradient for {} has shape {:?}", params.names()[i], g.shape())));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {}", params.names()[i])));
        }
    }
    let (lr, rho, eps, mom) = (config.learning_rate, config.rho, config.eps, config.momentum);
    for (i, g) in grads.iter().enumerate() {
        let n = state.mean_square.tensor_mut(i);
        let mut delta = Vec::with_capacity(g.len());
        for (nv, &gv) in n.data_mut().iter_mut().zip(g.data()) {
            *nv = rho * *nv + (1.0 - rho) * gv * gv;
            delta.push(-lr * gv / (*nv + eps).sqrt());
        }
        if let Some(vel) = state.velocity.as_mut() {
            let v = vel.tensor_mut(i);
            for (vv, d) in v.data_mut().iter_mut().zip(delta.iter_mut()) {
                *vv = mom * *vv + *d;
                *d = *vv;
            }
        }
        let p = params.tensor_mut(i);
        for (pv, d) in p.data_mut().iter_mut().zip(&delta) {
            *pv += d;
        }
    }
    Ok(())
}

/// Loss pieces and gradients of one batch.
#[derive(Clone, Debug)]
pub struct BatchResult {
    /// `(nll + β kl) / tokens`, the quantity differentiated.
    pub loss: f64,
    pub nll: f64,
    pub kl: f64,
    pub tokens: usize,
    /// Aligned with the model's parameter store.
    pub grads: Vec<Tensor>,
}

/// Forward and backward pass of `(nll + kl_weight · kl) / tokens`.
pub fn batch_gradients(model: &Model, batch: &Batch, opts: &mut ForwardOptions, kl_weight: f64) -> Result<BatchResult> {
    let mut g = Graph::new();
    let (mv, vars) = model.bind(&mut g, true);
    let terms = batch_objective(&mut g, &mv, &batch.src, &batch.tgt, opts);
    let weighted = g.scale(terms.kl, kl_weight);
    let total = g.add(terms.nll, weighted);
    let loss = g.scale(total, 1.0 / terms.tokens as f64);
    let (nll, kl, value) = (g.value(terms.nll).item(), g.value(terms.kl).item(), g.value(loss).item());
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss {value} (nll {nll}, kl {kl})")));
    }
    let mut grads_by_var = g.backward(loss)?;
    let specs = model.config.inventory();
    let mut grads: Vec<Option<Tensor>> = vec![None; model.params.len()];
    for (spec, var) in specs.iter().zip(vars) {
        let i = model.params.index_of(&spec.name).expect("validated parameters");
        grads[i] = Some(grads_by_var.take(var).unwrap_or_else(|| Tensor::zeros(&spec.shape)));
    }
    let grads = grads.into_iter().map(|g| g.expect("every parameter is bound")).collect();
    Ok(BatchResult { loss: value, nll, kl, tokens: terms.tokens, grads })
}

/// Deterministic corpus-level scores, all per real target token.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Validation {
    /// Teacher-forced nll with `z` set as at decoding time (prior mean).
    pub nll: f64,
    /// KL at the posterior mean (no sampling noise); 0 for the baseline.
    pub kl: f64,
    pub tokens: usize,
}

pub fn validate(model: &Model, pairs: &[IdPair], batch_size: usize) -> Result<Validation> {
    let mut nll = 0.0;
    let mut kl = 0.0;
    let mut tokens = 0;
    for batch in sequential_batches(pairs, batch_size) {
        let mut g = Graph::new();
        let (mv, _) = model.bind(&mut g, false);
        let mut opts = ForwardOptions::deterministic(LatentMode::PriorMean);
        let t = batch_objective(&mut g, &mv, &batch.src, &batch.tgt, &mut opts);
        nll += g.value(t.nll).item();
        tokens += t.tokens;
        if model.variant().has_latent() {
            let mut g = Graph::new();
            let (mv, _) = model.bind(&mut g, false);
            let mut opts = ForwardOptions::deterministic(LatentMode::PosteriorMean);
            let t = batch_objective(&mut g, &mv, &batch.src, &batch.tgt, &mut opts);
            kl += g.value(t.kl).item();
        }
    }
    if tokens == 0 {
        return Err(Error::EmptyCorpus("validation set is empty".into()));
    }
    Ok(Validation { nll: nll / tokens as f64, kl: kl / tokens as f64, tokens })
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Token-averaged `nll + β kl` over the epoch's batches.
    pub train_neg_elbo: f64,
    pub train_nll: f64,
    pub train_kl: f64,
    pub valid_nll: f64,
    pub valid_kl: f64,
    pub seconds: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}\t{:.3}", self.epoch, self.train_neg_elbo, self.valid_nll, self.valid_kl, self.seconds)
    }
}

impl EpochLog {
    /// Parses a log line; the trailing seconds column is optional.
    pub fn parse(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(Error::format(format!("training log line has {} columns: {line:?}", cols.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::format(format!("bad number {s:?} in training log")));
        let epoch = cols[0].trim().parse().map_err(|_| Error::format(format!("bad epoch {:?}", cols[0])))?;
        Ok(EpochLog {
            epoch,
            train_neg_elbo: num(cols[1])?,
            train_nll: f64::NAN,
            train_kl: f64::NAN,
            valid_nll: num(cols[2])?,
            valid_kl: num(cols[3])?,
            seconds: cols.get(4).map(|s| num(s)).transpose()?.unwrap_or(0.0),
        })
    }
}

/// Mutable training state carried between epochs.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub optimizer: RmsProp,
    pub config: TrainConfig,
    pub updates: usize,
    pub epochs_done: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = RmsProp::new(&model.params, config.momentum);
        Ok(Trainer { model, optimizer, config, updates: 0, epochs_done: 0 })
    }

    /// One pass over the training pairs.
    pub fn train_epoch(&mut self, pairs: &[IdPair]) -> Result<(f64, f64, f64)> {
        let epoch = self.epochs_done as u64;
        let cfg = &self.config;
        let batches = make_batches(pairs, cfg.batch_size, cfg.max_len, cfg.seed, epoch)?;
        let (mut loss_sum, mut nll_sum, mut kl_sum, mut tokens) = (0.0, 0.0, 0.0, 0usize);
        for (b, batch) in batches.iter().enumerate() {
            let step = self.updates as u64;
            let mut opts = ForwardOptions {
                samples: cfg.samples,
                latent: LatentMode::Sample,
                noise: substream(cfg.seed, Stream::Noise, step),
                dropout: Dropout::new(cfg.dropout, substream(cfg.seed, Stream::Dropout, step)),
            };
            let beta = cfg.kl_weight(self.updates);
            let mut res = batch_gradients(&self.model, batch, &mut opts, beta).map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("epoch {} batch {b}: {msg}", epoch + 1)),
                other => other,
            })?;
            clip_gradients(&mut res.grads, cfg.clip_norm);
            rmsprop_update(&mut self.model.params, &res.grads, &mut self.optimizer, cfg)?;
            self.updates += 1;
            loss_sum += res.loss * res.tokens as f64;
            nll_sum += res.nll;
            kl_sum += res.kl;
            tokens += res.tokens;
        }
        self.epochs_done += 1;
        let t = tokens as f64;
        Ok((loss_sum / t, nll_sum / t, kl_sum / t))
    }

    /// Runs the configured epochs. `on_epoch` sees each log line and whether
    /// the model just reached the best validation nll so far.
    pub fn train(
        &mut self,
        pairs: &[IdPair],
        valid: &[IdPair],
        mut on_epoch: impl FnMut(&EpochLog, &Trainer, bool) -> Result<()>,
    ) -> Result<Vec<EpochLog>> {
        let mut logs = Vec::new();
        let mut best = f64::INFINITY;
        for _ in 0..self.config.epochs {
            let start = Instant::now();
            let (loss, nll, kl) = self.train_epoch(pairs)?;
            let v = validate(&self.model, valid, self.config.batch_size)?;
            let entry = EpochLog {
                epoch: self.epochs_done,
                train_neg_elbo: loss,
                train_nll: nll,
                train_kl: kl,
                valid_nll: v.nll,
                valid_kl: v.kl,
                seconds: start.elapsed().as_secs_f64(),
            };
            let improved = v.nll < best;
            if improved {
                best = v.nll;
            }
            on_epoch(&entry, self, improved)?;
            logs.push(entry);
        }
        Ok(logs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelConfig;
    use proptest::prelude::*;

    fn pairs(n: usize) -> Vec<IdPair> {
        (0..n).map(|i| (vec![4 + i % 5; 1 + i % 4], vec![5 + i % 3; 1 + i % 3])).collect()
    }

    fn tiny_config(variant: Variant) -> TrainConfig {
        TrainConfig {
            variant,
            dims: Dims { d_e: 4, d_h: 6, d_z: 3, d_a: 5, d_r: 6 },
            batch_size: 3,
            epochs: 2,
            ..TrainConfig::default()
        }
    }

    fn tiny_model(cfg: &TrainConfig) -> Model {
        Model::init(ModelConfig::new(cfg.variant, 10, 10, cfg.dims), cfg.seed, cfg.orthogonal)
    }

    #[test]
    fn batches_partition_the_corpus() {
        let p = pairs(5);
        let batches = make_batches(&p, 2, 50, 1, 0).unwrap();
        let mut sizes: Vec<usize> = batches.iter().map(Batch::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 2, 2]);
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        let again = make_batches(&p, 2, 50, 1, 0).unwrap();
        assert_eq!(
            batches.iter().map(|b| b.indices.clone()).collect::<Vec<_>>(),
            again.iter().map(|b| b.indices.clone()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn long_pairs_are_dropped() {
        let p = vec![(vec![4; 60], vec![5; 3]), (vec![4; 3], vec![5; 51])];
        assert!(matches!(make_batches(&p, 2, 50, 1, 0), Err(Error::EmptyCorpus(_))));
        let mut q = p.clone();
        q.push((vec![4; 2], vec![5; 2]));
        assert_eq!(make_batches(&q, 2, 50, 1, 0).unwrap().iter().map(Batch::len).sum::<usize>(), 1);
    }

    #[test]
    fn clip_examples() {
        let mut g = vec![Tensor::vector(vec![0.3, 0.4])];
        clip_gradients(&mut g, 1.0);
        assert_eq!(g[0].data(), &[0.3, 0.4]);
        let mut g = vec![Tensor::vector(vec![3.0, 4.0])];
        assert_eq!(clip_gradients(&mut g, 1.0), 5.0);
        assert!((g[0].data()[0] - 0.6).abs() < 1e-15 && (g[0].data()[1] - 0.8).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn clipped_norm_is_min_of_norm_and_limit(
            values in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 1..6), 1..5),
            max in 0.01f64..20.0,
        ) {
            let mut grads: Vec<Tensor> = values.into_iter().map(Tensor::vector).collect();
            let before = global_norm(&grads);
            clip_gradients(&mut grads, max);
            let after = global_norm(&grads);
            prop_assert!((after - before.min(max)).abs() <= 1e-12 * before.max(1.0));
            prop_assert!(after <= max + 1e-9);
        }
    }

    fn single(value: f64) -> ParamStore {
        ParamStore::from_named(vec![("w".into(), Tensor::vector(vec![value]))]).unwrap()
    }

    #[test]
    fn rmsprop_examples() {
        let cfg = TrainConfig::default();
        let mut p = single(0.5);
        let mut st = RmsProp::new(&p, 0.0);
        rmsprop_update(&mut p, &[Tensor::vector(vec![0.0])], &mut st, &cfg).unwrap();
        assert_eq!(p.tensor(0).data(), &[0.5]);

        let mut p = single(0.0);
        let mut st = RmsProp::new(&p, 0.0);
        rmsprop_update(&mut p, &[Tensor::vector(vec![1.0])], &mut st, &cfg).unwrap();
        let d1 = p.tensor(0).data()[0];
        let expected = -5e-4 / (0.05f64 + 1e-4).sqrt();
        assert!((d1 - expected).abs() < 1e-15);
        rmsprop_update(&mut p, &[Tensor::vector(vec![1.0])], &mut st, &cfg).unwrap();
        let d2 = p.tensor(0).data()[0] - d1;
        let expected2 = -5e-4 / (0.95 * 0.05 + 0.05 + 1e-4f64).sqrt();
        assert!((d2 - expected2).abs() < 1e-15);
        assert!(d2.abs() < d1.abs());
    }

    #[test]
    fn rmsprop_rejects_non_finite_without_changes() {
        let cfg = TrainConfig::default();
        let mut p = ParamStore::from_named(vec![
            ("a".into(), Tensor::vector(vec![1.0])),
            ("b".into(), Tensor::vector(vec![2.0])),
        ])
        .unwrap();
        let mut st = RmsProp::new(&p, 0.0);
        let err = rmsprop_update(&mut p, &[Tensor::vector(vec![1.0]), Tensor::vector(vec![f64::NAN])], &mut st, &cfg);
        assert!(matches!(err, Err(Error::NonFinite(ref m)) if m.contains('b')));
        assert_eq!(p.tensor(0).data(), &[1.0]);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let cfg = TrainConfig { momentum: 0.5, ..TrainConfig::default() };
        let mut p = single(0.0);
        let mut st = RmsProp::new(&p, cfg.momentum);
        for _ in 0..2 {
            rmsprop_update(&mut p, &[Tensor::vector(vec![1.0])], &mut st, &cfg).unwrap();
        }
        let d1 = -5e-4 / (0.05f64 + 1e-4).sqrt();
        let d2 = -5e-4 / (0.0975f64 + 1e-4).sqrt();
        assert!((p.tensor(0).data()[0] - (d1 + 0.5 * d1 + d2)).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let cfg = TrainConfig { learning_rate: 0.0, ..tiny_config(Variant::Vrnmt) };
        let model = tiny_model(&cfg);
        let mut t = Trainer::new(model.clone(), cfg).unwrap();
        t.train(&pairs(7), &pairs(3), |_, _, _| Ok(())).unwrap();
        assert_eq!(t.model, model);
    }

    #[test]
    fn fixed_seed_gives_identical_trajectories() {
        let cfg = tiny_config(Variant::Vrnmt);
        let run = || {
            let mut t = Trainer::new(tiny_model(&cfg), cfg.clone()).unwrap();
            let logs = t.train(&pairs(8), &pairs(4), |_, _, _| Ok(())).unwrap();
            (logs.iter().map(|l| (l.train_neg_elbo, l.valid_nll, l.valid_kl)).collect::<Vec<_>>(), t.model)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
    }

    #[test]
    fn zero_kl_weight_trains_on_nll_alone() {
        let cfg = TrainConfig { kl_anneal: Some(1_000_000_000), ..tiny_config(Variant::Vrnmt) };
        assert!(cfg.kl_weight(0) < 1e-8);
        let model = tiny_model(&cfg);
        let batch = Batch::from_pairs(&pairs(4), vec![0, 1, 2, 3]);
        let opts = || ForwardOptions::sampled(substream(1, Stream::Noise, 0));
        let zero = batch_gradients(&model, &batch, &mut opts(), 0.0).unwrap();
        assert_eq!(zero.loss, zero.nll / zero.tokens as f64);
        let full = batch_gradients(&model, &batch, &mut opts(), 1.0).unwrap();
        assert_eq!(zero.nll, full.nll);
        assert!(full.kl > 0.0 && full.loss > zero.loss);
    }

    #[test]
    fn repeated_example_nll_falls_monotonically() {
        let cfg = TrainConfig { epochs: 40, batch_size: 1, ..tiny_config(Variant::Vrnmt) };
        let data = vec![(vec![4, 5, 6], vec![7, 8])];
        let mut t = Trainer::new(tiny_model(&cfg), cfg).unwrap();
        let logs = t.train(&data, &data, |_, _, _| Ok(())).unwrap();
        for w in logs[10..].windows(2) {
            assert!(w[1].valid_nll < w[0].valid_nll, "{} -> {}", w[0].valid_nll, w[1].valid_nll);
        }
        assert!(logs.last().unwrap().valid_nll < logs[0].valid_nll);
    }

    #[test]
    fn log_line_round_trips() {
        let e = EpochLog { epoch: 3, train_neg_elbo: 1.25, train_nll: 1.0, train_kl: 0.25, valid_nll: 0.1, valid_kl: 0.0, seconds: 2.5 };
        let back = EpochLog::parse(&e.to_string()).unwrap();
        assert_eq!((back.epoch, back.train_neg_elbo, back.valid_nll, back.valid_kl), (3, 1.25, 0.1, 0.0));
        assert!(EpochLog::parse("1\t2").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { rho: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { dropout: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { eps: 0.0, ..TrainConfig::default() }.validate().is_err());
    }
}
