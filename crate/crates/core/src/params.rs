//! Model configuration, the per-variant tensor inventory and parameter storage.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Half-width of the uniform weight initializer.
pub const INIT_SCALE: f64 = 0.08;

/// Which of the three model variants a parameter set describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Attentional encoder-decoder without latent variables.
    Baseline,
    /// Per-timestep latent with learned prior and posterior.
    Vrnmt,
    /// Latent without temporal dependencies: the posterior sees only the
    /// current target word and the prior is a fixed standard normal.
    VrnmtTd,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Vrnmt, Variant::VrnmtTd];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Vrnmt => "vrnmt",
            Variant::VrnmtTd => "vrnmt-td",
        }
    }

    pub fn has_latent(self) -> bool {
        self != Variant::Baseline
    }

    pub fn has_prior_network(self) -> bool {
        self == Variant::Vrnmt
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "vrnmt" => Ok(Variant::Vrnmt),
            "vrnmt-td" | "vrnmt_td" => Ok(Variant::VrnmtTd),
            other => Err(Error::invalid(format!(
                "unknown variant '{other}' (expected baseline, vrnmt or vrnmt-td)"
            ))),
        }
    }
}

/// Layer sizes. The inferer hidden layer has size `d_z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub d_e: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub d_a: usize,
    pub d_r: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { d_e: 32, d_h: 64, d_z: 16, d_a: 64, d_r: 64 }
    }
}

impl Dims {
    /// Sizes used for large-corpus experiments: 620-dim embeddings,
    /// 1000-dim hidden layers and a 2000-dim latent space.
    pub fn full_scale() -> Self {
        Dims { d_e: 620, d_h: 1000, d_z: 2000, d_a: 1000, d_r: 1000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Embedding,
    Weight,
    Recurrent,
    Bias,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub dims: Dims,
}

impl ModelConfig {
    pub fn new(variant: Variant, src_vocab: usize, tgt_vocab: usize, dims: Dims) -> Self {
        ModelConfig { variant, src_vocab, tgt_vocab, dims }
    }

    /// The exact set of named tensors this configuration owns, in binding order.
    pub fn inventory(&self) -> Vec<ParamSpec> {
        use ParamKind::*;
        let Dims { d_e, d_h, d_z, d_a, d_r } = self.dims;
        let latent = self.variant.has_latent();
        let mut specs = Vec::new();
        let mut add = |name: &str, shape: &[usize], kind: ParamKind| {
            specs.push(ParamSpec { name: name.to_string(), shape: shape.to_vec(), kind });
        };

        add("src_emb", &[self.src_vocab, d_e], Embedding);
        add("tgt_emb", &[self.tgt_vocab, d_e], Embedding);
        for dir in ["enc_fwd", "enc_bwd"] {
            add(&format!("{dir}.w_x"), &[d_e, 3 * d_h], Weight);
            add(&format!("{dir}.u_gates"), &[d_h, 2 * d_h], Recurrent);
            add(&format!("{dir}.u_cand"), &[d_h, d_h], Recurrent);
            add(&format!("{dir}.b"), &[3 * d_h], Bias);
        }
        add("att.w_s", &[d_h, d_a], Weight);
        add("att.u_h", &[2 * d_h, d_a], Weight);
        add("att.v", &[d_a, 1], Weight);
        add("init.w", &[d_h, d_h], Weight);
        add("init.b", &[d_h], Bias);

        add("dec.w_y", &[d_e, 3 * d_h], Weight);
        add("dec.w_c", &[2 * d_h, 3 * d_h], Weight);
        if latent {
            add("dec.w_z", &[d_z, 3 * d_h], Weight);
        }
        add("dec.u_gates", &[d_h, 2 * d_h], Recurrent);
        add("dec.u_cand", &[d_h, d_h], Recurrent);
        add("dec.b", &[3 * d_h], Bias);

        let mut inferer = |prefix: &str, with_history: bool, with_current: bool| {
            if with_history {
                add(&format!("{prefix}.w_prev"), &[d_e, d_z], Weight);
                add(&format!("{prefix}.w_s"), &[d_h, d_z], Weight);
                add(&format!("{prefix}.w_c"), &[2 * d_h, d_z], Weight);
            }
            if with_current {
                add(&format!("{prefix}.w_y"), &[d_e, d_z], Weight);
            }
            add(&format!("{prefix}.b"), &[d_z], Bias);
            add(&format!("{prefix}.w_mu"), &[d_z, d_z], Weight);
            add(&format!("{prefix}.b_mu"), &[d_z], Bias);
            add(&format!("{prefix}.w_logvar"), &[d_z, d_z], Weight);
            add(&format!("{prefix}.b_logvar"), &[d_z], Bias);
        };
        match self.variant {
            Variant::Baseline => {}
            Variant::Vrnmt => {
                inferer("post", true, true);
                inferer("prior", true, false);
            }
            Variant::VrnmtTd => inferer("post", false, true),
        }

        add("readout.w_y", &[d_e, d_r], Weight);
        add("readout.w_s", &[d_h, d_r], Weight);
        add("readout.w_c", &[2 * d_h, d_r], Weight);
        if latent {
            add("readout.w_z", &[d_z, d_r], Weight);
        }
        add("readout.b", &[d_r], Bias);
        add("out.w", &[d_r, self.tgt_vocab], Weight);
        add("out.b", &[self.tgt_vocab], Bias);
        specs
    }
}

/// Named parameter tensors in inventory order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Arc<Tensor>>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn from_named(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut store = ParamStore { names: Vec::new(), tensors: Vec::new(), index: HashMap::new() };
        for (name, t) in entries {
            if store.index.insert(name.clone(), store.names.len()).is_some() {
                return Err(Error::invalid(format!("duplicate parameter name '{name}'")));
            }
            store.names.push(name);
            store.tensors.push(Arc::new(t));
        }
        Ok(store)
    }

    /// Fresh initialization: weights and embeddings uniform in
    /// `[-INIT_SCALE, INIT_SCALE]`, biases zero, recurrent matrices
    /// optionally orthogonal.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, orthogonal: bool, rng: &mut R) -> Self {
        let entries = config
            .inventory()
            .into_iter()
            .map(|spec| {
                let t = init_tensor(&spec, orthogonal, rng);
                (spec.name, t)
            })
            .collect();
        Self::from_named(entries).expect("inventory names are unique")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| self.tensors[i].as_ref())
    }

    pub fn shared(&self, i: usize) -> &Arc<Tensor> {
        &self.tensors[i]
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        Arc::make_mut(&mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter().map(|t| t.as_ref()))
    }

    /// Replaces a tensor by name, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::invalid(format!("no parameter named '{name}'")))?;
        if self.tensors[i].shape() != value.shape() {
            return Err(Error::Shape(format!(
                "{name}: expected {:?}, got {:?}",
                self.tensors[i].shape(),
                value.shape()
            )));
        }
        self.tensors[i] = Arc::new(value);
        Ok(())
    }

    /// Sets every tensor whose name starts with `prefix` to zero.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for i in 0..self.names.len() {
            if self.names[i].starts_with(prefix) {
                let t = Arc::make_mut(&mut self.tensors[i]);
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Checks names and shapes against a configuration's inventory.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let inventory = config.inventory();
        let mut problems = Vec::new();
        for spec in &inventory {
            match self.get(&spec.name) {
                None => problems.push(format!("missing tensor {}", spec.name)),
                Some(t) if t.shape() != spec.shape.as_slice() => problems.push(format!(
                    "{}: expected shape {:?}, found {:?}",
                    spec.name,
                    spec.shape,
                    t.shape()
                )),
                Some(_) => {}
            }
        }
        for name in &self.names {
            if !inventory.iter().any(|s| &s.name == name) {
                problems.push(format!("unexpected tensor {name}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Shape(problems.join("; ")))
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

fn init_tensor<R: Rng + ?Sized>(spec: &ParamSpec, orthogonal: bool, rng: &mut R) -> Tensor {
    let numel: usize = spec.shape.iter().product();
    let data = match spec.kind {
        ParamKind::Bias => vec![0.0; numel],
        ParamKind::Recurrent if orthogonal => {
            let (rows, cols) = (spec.shape[0], spec.shape[1]);
            let mut data = vec![0.0; numel];
            for block in 0..cols / rows {
                let q = orthogonal_matrix(rows, rng);
                for r in 0..rows {
                    for c in 0..rows {
                        data[r * cols + block * rows + c] = q[r * rows + c];
                    }
                }
            }
            data
        }
        _ => {
            let dist = Uniform::new_inclusive(-INIT_SCALE, INIT_SCALE).expect("valid range");
            (0..numel).map(|_| dist.sample(rng)).collect()
        }
    };
    Tensor::new(spec.shape.clone(), data).expect("inventory shapes are valid")
}

/// Random orthogonal `n x n` matrix by Gram-Schmidt on Gaussian columns.
fn orthogonal_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for q in &cols {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            cols.push(v);
        }
    }
    let mut m = vec![0.0; n * n];
    for (c, col) in cols.iter().enumerate() {
        for r in 0..n {
            m[r * n + c] = col[r];
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(variant: Variant) -> ModelConfig {
        ModelConfig::new(variant, 11, 13, Dims { d_e: 4, d_h: 5, d_z: 3, d_a: 6, d_r: 7 })
    }

    #[test]
    fn inventories_differ_only_in_latent_tensors() {
        let names = |v| -> Vec<String> { config(v).inventory().into_iter().map(|s| s.name).collect() };
        let base = names(Variant::Baseline);
        let full = names(Variant::Vrnmt);
        let td = names(Variant::VrnmtTd);
        assert!(base.iter().all(|n| full.contains(n) && td.contains(n)));
        assert!(!base.iter().any(|n| n.starts_with("post.") || n.starts_with("prior.")));
        assert!(!td.iter().any(|n| n.starts_with("prior.")));
        assert!(td.contains(&"post.w_y".to_string()));
        assert!(!td.contains(&"post.w_s".to_string()));
        assert!(full.contains(&"dec.w_z".to_string()) && full.contains(&"readout.w_z".to_string()));
    }

    #[test]
    fn init_respects_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = config(Variant::Vrnmt);
        let store = ParamStore::init(&cfg, true, &mut rng);
        store.validate(&cfg).unwrap();
        assert!(store.get("dec.b").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(store.get("att.w_s").unwrap().data().iter().all(|v| v.abs() <= INIT_SCALE));

        // Each d_h x d_h block of an orthogonal recurrent matrix has Q^T Q = I.
        let u = store.get("dec.u_cand").unwrap();
        let n = 5;
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|r| u.data()[r * n + i] * u.data()[r * n + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn validate_reports_missing_and_extra() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = ParamStore::init(&config(Variant::Baseline), false, &mut rng);
        let err = base.validate(&config(Variant::Vrnmt)).unwrap_err().to_string();
        assert!(err.contains("missing tensor dec.w_z"));
        let full = ParamStore::init(&config(Variant::Vrnmt), false, &mut rng);
        let err = full.validate(&config(Variant::Baseline)).unwrap_err().to_string();
        assert!(err.contains("unexpected tensor prior.b"));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("vnmt".parse::<Variant>().is_err());
    }
}
