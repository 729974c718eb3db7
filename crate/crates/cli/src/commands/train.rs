use std::fs::File;
use std::io::Write;

use vrnmt::data::{Checkpoint, ParallelCorpus};
use vrnmt::models::Model;
use vrnmt::params::{Dims, ModelConfig, Variant};
use vrnmt::training::{TrainConfig, Trainer};

use super::load_vocabs;
use crate::cli::TrainArgs;
use crate::error::CliResult;

fn train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let variant: Variant = a.variant.parse()?;
    let config = TrainConfig {
        variant,
        dims: Dims { d_e: a.d_e, d_h: a.d_h, d_z: a.d_z, d_a: a.d_a, d_r: a.d_r },
        learning_rate: a.lr,
        rho: a.rho,
        eps: a.eps,
        momentum: a.momentum,
        clip_norm: a.clip_norm,
        dropout: a.dropout,
        batch_size: a.batch_size,
        samples: a.samples,
        max_len: a.max_len,
        epochs: a.epochs,
        seed: a.seed,
        kl_anneal: a.kl_anneal,
        orthogonal: a.orthogonal,
    };
    config.validate()?;
    Ok(config)
}

fn snapshot(trainer: &Trainer, valid_nll: Option<f64>) -> Checkpoint {
    let mut ck = Checkpoint::new(trainer.model.clone());
    ck.optimizer = Some(trainer.optimizer.mean_square.clone());
    ck.meta.insert("epoch".into(), trainer.epochs_done.to_string());
    ck.meta.insert("updates".into(), trainer.updates.to_string());
    if let Some(v) = valid_nll {
        ck.meta.insert("valid_nll".into(), v.to_string());
    }
    ck.meta.insert("seed".into(), trainer.config.seed.to_string());
    ck
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let config = train_config(a)?;
    let (src_vocab, tgt_vocab) = load_vocabs(&a.vocab)?;
    let train = ParallelCorpus::load(&a.src, &a.tgt, Some(config.max_len))?;
    let valid = ParallelCorpus::load(&a.valid_src, &a.valid_tgt, Some(config.max_len))?;
    if train.is_empty() || valid.is_empty() {
        return Err(vrnmt::Error::EmptyCorpus("no training or validation pairs within the length limit".into()).into());
    }
    let pairs = train.encode(&src_vocab, &tgt_vocab);
    let valid_pairs = valid.encode(&src_vocab, &tgt_vocab);

    let model_config = ModelConfig::new(config.variant, src_vocab.len(), tgt_vocab.len(), config.dims);
    let model = match &a.init_from {
        Some(path) => {
            let base = Checkpoint::load(path)?;
            let (model, fresh) = Model::warm_start(model_config, &base.model.params, config.seed, config.orthogonal)?;
            eprintln!("warm start from {}: {} freshly initialized tensors", path.display(), fresh.len());
            for name in &fresh {
                eprintln!("  new {name}");
            }
            model
        }
        None => Model::init(model_config, config.seed, config.orthogonal),
    };

    let mut log = a.log.as_ref().map(File::create).transpose().map_err(vrnmt::Error::from)?;
    let mut trainer = Trainer::new(model, config)?;
    println!("epoch\ttrain_neg_elbo\tvalid_nll\tvalid_kl\tseconds");
    trainer.train(&pairs, &valid_pairs, |entry, t, improved| {
        println!("{entry}{}", if improved { "\t*" } else { "" });
        if let Some(f) = log.as_mut() {
            writeln!(f, "{entry}")?;
            f.flush()?;
        }
        if improved {
            snapshot(t, Some(entry.valid_nll)).save(&a.checkpoint)?;
        }
        Ok(())
    })?;
    if let Some(path) = &a.last_checkpoint {
        snapshot(&trainer, None).save(path)?;
    }
    Ok(())
}
