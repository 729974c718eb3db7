use std::time::Instant;

use rand::Rng;
use vrnmt::data::vocab::RESERVED;
use vrnmt::models::{sentence_gradient_check, Model};
use vrnmt::params::{Dims, ModelConfig, Variant};
use vrnmt::rng::{stream, substream, Stream};

use crate::cli::GradCheckArgs;
use crate::error::{usage, CliError, CliResult};

fn random_sentence<R: Rng>(rng: &mut R, max_len: usize, vocab: usize) -> Vec<usize> {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| rng.random_range(RESERVED.len()..vocab)).collect()
}

pub fn grad_check(a: &GradCheckArgs) -> CliResult<()> {
    let variants = match &a.variant {
        Some(v) => vec![v.parse::<Variant>()?],
        None => Variant::ALL.to_vec(),
    };
    if a.vocab <= RESERVED.len() || a.len == 0 {
        return Err(usage(format!("--vocab must exceed {} and --len must be positive", RESERVED.len())));
    }
    if !(a.scale > 0.0 && a.step > 0.0) {
        return Err(usage("--scale and --step must be positive"));
    }
    let dims = Dims { d_e: a.d_e, d_h: a.d_h, d_z: a.d_z, d_a: a.d_a, d_r: a.d_r };
    let mut worst = 0.0f64;
    for (k, &variant) in variants.iter().enumerate() {
        let start = Instant::now();
        let mut model = Model::init(ModelConfig::new(variant, a.vocab, a.vocab, dims), a.seed, false);
        let mut rng = substream(a.seed, Stream::Init, k as u64 + 1);
        for i in 0..model.params.len() {
            for v in model.params.tensor_mut(i).data_mut() {
                *v = rng.random_range(-a.scale..=a.scale);
            }
        }
        let mut data = stream(a.seed, Stream::Data);
        let x = random_sentence(&mut data, a.len, a.vocab);
        let y = random_sentence(&mut data, a.len, a.vocab);
        let report = sentence_gradient_check(&model, &x, &y, a.seed, a.step)?;
        println!(
            "{variant}\tmax_rel_error {:e}\tcoordinates {}\tseconds {:.2}",
            report.max_rel_error,
            report.coordinates,
            start.elapsed().as_secs_f64()
        );
        worst = worst.max(report.max_rel_error);
    }
    println!("max relative error {worst:e} (threshold {:e})", a.threshold);
    if worst > a.threshold || !worst.is_finite() {
        return Err(CliError::GradCheck { error: worst, threshold: a.threshold });
    }
    Ok(())
}
