//! The three model variants assembled into per-step and per-sentence passes.
//!
//! Step `j` (0-based over `BOS y_1 .. y_n EOS`) reads the previous token
//! `y_{j-1}` and state `s_j`, attends, infers `z_j`, predicts `y_j`, and
//! moves to `s_{j+1}` by feeding the emitted token `y_j`, the context and
//! `z_j` through the decoder GRU.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::layers::{
    attend, encode, gru_step, init_decoder_state, Annotations, Attention, AttentionVars, Dropout,
    GruVars, PaddedIds,
};
use crate::params::{ModelConfig, ParamStore, Variant};
use crate::rng::{stream, Stream};
use crate::tensor::{check_gradient, GradCheckReport, Graph, Tensor, Var};
use crate::variational::{
    kl_terms, posterior_params, posterior_params_current_only, prior_params, reparameterize,
    GaussianVars, InfererVars,
};
use crate::data::vocab::{BOS, EOS, PAD};

#[derive(Clone, Debug)]
pub struct ReadoutVars {
    pub w_y: Var,
    pub w_s: Var,
    pub w_c: Var,
    pub w_z: Option<Var>,
    pub bias: Var,
    pub w_out: Var,
    pub b_out: Var,
}

/// Every model tensor bound onto one graph.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub variant: Variant,
    pub src_emb: Var,
    pub tgt_emb: Var,
    pub enc_fwd: GruVars,
    pub enc_bwd: GruVars,
    pub att: AttentionVars,
    pub init_w: Var,
    pub init_b: Var,
    pub dec: GruVars,
    pub posterior: Option<InfererVars>,
    pub prior: Option<InfererVars>,
    pub readout: ReadoutVars,
}

impl ModelVars {
    /// Builds the view from variables listed in inventory order.
    pub fn from_vars(config: &ModelConfig, vars: &[Var]) -> Self {
        let inventory = config.inventory();
        assert_eq!(inventory.len(), vars.len(), "one variable per inventory entry");
        let find = |name: &str| -> Option<Var> {
            inventory.iter().position(|s| s.name == name).map(|i| vars[i])
        };
        let v = |name: &str| find(name).unwrap_or_else(|| panic!("missing tensor {name}"));
        let gru = |prefix: &str, inputs: &[&str]| GruVars {
            inputs: inputs.iter().map(|n| v(&format!("{prefix}.{n}"))).collect(),
            u_gates: v(&format!("{prefix}.u_gates")),
            u_cand: v(&format!("{prefix}.u_cand")),
            bias: v(&format!("{prefix}.b")),
        };
        let inferer = |prefix: &str, inputs: &[&str]| InfererVars {
            inputs: inputs.iter().map(|n| v(&format!("{prefix}.{n}"))).collect(),
            bias: v(&format!("{prefix}.b")),
            w_mu: v(&format!("{prefix}.w_mu")),
            b_mu: v(&format!("{prefix}.b_mu")),
            w_logvar: v(&format!("{prefix}.w_logvar")),
            b_logvar: v(&format!("{prefix}.b_logvar")),
        };
        let variant = config.variant;
        let dec_inputs: &[&str] = if variant.has_latent() { &["w_y", "w_c", "w_z"] } else { &["w_y", "w_c"] };
        let (posterior, prior) = match variant {
            Variant::Baseline => (None, None),
            Variant::Vrnmt => (
                Some(inferer("post", &["w_prev", "w_s", "w_c", "w_y"])),
                Some(inferer("prior", &["w_prev", "w_s", "w_c"])),
            ),
            Variant::VrnmtTd => (Some(inferer("post", &["w_y"])), None),
        };
        ModelVars {
            variant,
            src_emb: v("src_emb"),
            tgt_emb: v("tgt_emb"),
            enc_fwd: gru("enc_fwd", &["w_x"]),
            enc_bwd: gru("enc_bwd", &["w_x"]),
            att: AttentionVars { w_s: v("att.w_s"), u_h: v("att.u_h"), v: v("att.v") },
            init_w: v("init.w"),
            init_b: v("init.b"),
            dec: gru("dec", dec_inputs),
            posterior,
            prior,
            readout: ReadoutVars {
                w_y: v("readout.w_y"),
                w_s: v("readout.w_s"),
                w_c: v("readout.w_c"),
                w_z: find("readout.w_z"),
                bias: v("readout.b"),
                w_out: v("out.w"),
                b_out: v("out.b"),
            },
        }
    }

    /// Binds every parameter as a leaf; returns the view and the leaves in
    /// inventory order.
    pub fn bind(g: &mut Graph, config: &ModelConfig, params: &ParamStore, requires_grad: bool) -> (Self, Vec<Var>) {
        let vars: Vec<Var> = config
            .inventory()
            .iter()
            .map(|spec| {
                let i = params.index_of(&spec.name).unwrap_or_else(|| panic!("missing tensor {}", spec.name));
                g.shared(params.shared(i).clone(), requires_grad)
            })
            .collect();
        (Self::from_vars(config, &vars), vars)
    }
}

/// `log softmax(tanh([y_{j-1}; s_j; c_j; z_j] W_d + b_d) W_out + b_out)`.
/// The latent term is omitted when `z` is `None`.
pub fn output_distribution(
    g: &mut Graph,
    p: &ReadoutVars,
    y_prev: Var,
    s: Var,
    c: Var,
    z: Option<Var>,
    dropout: &mut Dropout,
) -> Var {
    let mut terms = vec![g.matmul(y_prev, p.w_y), g.matmul(s, p.w_s), g.matmul(c, p.w_c)];
    if let (Some(z), Some(w_z)) = (z, p.w_z) {
        terms.push(g.matmul(z, w_z));
    }
    let pre = g.add_all(&terms);
    let pre = g.add_bias(pre, p.bias);
    let hidden = g.tanh(pre);
    let hidden = dropout.apply(g, hidden);
    let logits = g.matmul(hidden, p.w_out);
    let logits = g.add_bias(logits, p.b_out);
    g.log_softmax(logits)
}

/// How `z_j` is produced on the teacher-forced path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentMode {
    /// Reparameterized posterior samples (the training objective).
    Sample,
    /// The posterior mean, `ε = 0`.
    PosteriorMean,
    /// The prior mean, as at decoding time; the KL term is still reported.
    PriorMean,
}

/// Options for teacher-forced passes.
pub struct ForwardOptions {
    /// Monte-Carlo samples `L` per step.
    pub samples: usize,
    pub latent: LatentMode,
    pub noise: ChaCha8Rng,
    pub dropout: Dropout,
}

impl ForwardOptions {
    /// Single-sample training pass with the given noise stream and no dropout.
    pub fn sampled(noise: ChaCha8Rng) -> Self {
        ForwardOptions { samples: 1, latent: LatentMode::Sample, noise, dropout: Dropout::off() }
    }

    /// Deterministic pass with the given latent rule.
    pub fn deterministic(latent: LatentMode) -> Self {
        ForwardOptions { samples: 1, latent, noise: stream(0, Stream::Noise), dropout: Dropout::off() }
    }
}

/// Target sentences framed as `BOS y_1 .. y_n EOS`.
#[derive(Clone, Debug)]
pub struct TargetBatch {
    /// `[B, T_y + 1]` framed ids: column `j` is the input at step `j`,
    /// column `j + 1` the gold output.
    pub framed: PaddedIds,
    /// `[B, T_y]` gold outputs `y_1 .. y_n EOS`.
    pub gold: PaddedIds,
}

impl TargetBatch {
    /// `targets` hold word ids only; BOS and EOS are added here.
    pub fn new<S: AsRef<[usize]>>(targets: &[S]) -> Self {
        let framed: Vec<Vec<usize>> = targets
            .iter()
            .map(|t| std::iter::once(BOS).chain(t.as_ref().iter().copied()).chain(std::iter::once(EOS)).collect())
            .collect();
        let gold: Vec<Vec<usize>> = framed.iter().map(|f| f[1..].to_vec()).collect();
        TargetBatch { framed: PaddedIds::from_sequences(&framed, PAD), gold: PaddedIds::from_sequences(&gold, PAD) }
    }

    pub fn steps(&self) -> usize {
        self.gold.len
    }
}

/// Everything one teacher-forced decoder step produces.
#[derive(Clone, Debug)]
pub struct TrainStep {
    /// One `[B, V]` log-probability matrix per latent sample.
    pub log_probs: Vec<Var>,
    pub attention: Attention,
    pub posterior: Option<GaussianVars>,
    /// `None` for the baseline and for the fixed standard-normal prior.
    pub prior: Option<GaussianVars>,
    /// One `[B, d_z]` sample per Monte-Carlo draw; empty for the baseline.
    pub latents: Vec<Var>,
    /// `[B, d_z]` KL terms, unmasked.
    pub kl: Option<Var>,
    pub next_state: Option<Var>,
}

fn gaussian_noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect())
}

/// One teacher-forced step: attend from `s_j`, infer posterior and prior,
/// draw `z_j`, predict, transition with the gold token, and score KL.
pub fn decode_step_train(
    g: &mut Graph,
    mv: &ModelVars,
    ann: &Annotations,
    y_prev: Var,
    y_gold: Var,
    state: Var,
    opts: &mut ForwardOptions,
    need_next: bool,
) -> TrainStep {
    let attention = attend(g, state, ann, &mv.att);
    let c = attention.context;
    let rows = g.shape(state)[0];

    let (posterior, prior) = match mv.variant {
        Variant::Baseline => (None, None),
        Variant::Vrnmt => {
            let q = posterior_params(g, y_prev, state, c, y_gold, mv.posterior.as_ref().expect("posterior"));
            let p = prior_params(g, y_prev, state, c, mv.prior.as_ref().expect("prior"));
            (Some(q), Some(p))
        }
        Variant::VrnmtTd => {
            let q = posterior_params_current_only(g, y_gold, mv.posterior.as_ref().expect("posterior"));
            (Some(q), None)
        }
    };

    let latents: Vec<Var> = match posterior {
        None => Vec::new(),
        Some(q) => {
            let d_z = g.shape(q.mu)[1];
            (0..opts.samples.max(1))
                .map(|_| match opts.latent {
                    LatentMode::Sample => {
                        let eps = gaussian_noise(&mut opts.noise, rows, d_z);
                        reparameterize(g, q, eps)
                    }
                    LatentMode::PosteriorMean => q.mu,
                    LatentMode::PriorMean => match prior {
                        Some(p) => p.mu,
                        None => g.constant(Tensor::zeros(&[rows, d_z])),
                    },
                })
                .collect()
        }
    };

    let log_probs: Vec<Var> = if latents.is_empty() {
        vec![output_distribution(g, &mv.readout, y_prev, state, c, None, &mut opts.dropout)]
    } else {
        latents
            .iter()
            .map(|&z| output_distribution(g, &mv.readout, y_prev, state, c, Some(z), &mut opts.dropout))
            .collect()
    };

    let next_state = need_next.then(|| {
        let mut xs = vec![y_gold, c];
        if let Some(&z) = latents.first() {
            xs.push(z);
        }
        gru_step(g, state, &xs, &mv.dec)
    });

    let kl = posterior.map(|q| kl_terms(g, q, prior));
    TrainStep { log_probs, attention, posterior, prior, latents, kl, next_state }
}

/// Summed teacher-forced terms for a batch.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveTerms {
    /// `-Σ_j (1/L) Σ_l log p(y_j | ...)` over real target positions.
    pub nll: Var,
    /// `Σ_j KL_j` over real target positions (constant zero for the baseline).
    pub kl: Var,
    /// Real target tokens, EOS included.
    pub tokens: usize,
}

fn row_mask(g: &mut Graph, mask: &[bool], cols: usize) -> Option<Var> {
    if mask.iter().all(|&m| m) {
        return None;
    }
    let data = mask.iter().flat_map(|&m| std::iter::repeat_n(if m { 1.0 } else { 0.0 }, cols)).collect();
    Some(g.constant(Tensor::matrix(mask.len(), cols, data)))
}

/// Teacher-forced pass over a padded batch. Padded target positions
/// contribute exactly zero to both terms.
pub fn batch_objective(
    g: &mut Graph,
    mv: &ModelVars,
    src: &PaddedIds,
    tgt: &TargetBatch,
    opts: &mut ForwardOptions,
) -> ObjectiveTerms {
    let ann = encode(g, src, mv.src_emb, &mv.enc_fwd, &mv.enc_bwd, &mv.att, &mut opts.dropout);
    let mut state = init_decoder_state(g, &ann, mv.init_w, mv.init_b);
    let vocab = g.shape(mv.tgt_emb)[0];
    let embedded: Vec<Var> = (0..tgt.framed.len)
        .map(|j| {
            let e = g.gather(mv.tgt_emb, &tgt.framed.column(j));
            opts.dropout.apply(g, e)
        })
        .collect();

    let steps = tgt.steps();
    let samples = opts.samples.max(1);
    let mut nll_terms = Vec::with_capacity(steps);
    let mut kl_parts = Vec::with_capacity(steps);
    for j in 0..steps {
        let mask = tgt.gold.column_mask(j);
        let gold = tgt.gold.column(j);
        let step = decode_step_train(g, mv, &ann, embedded[j], embedded[j + 1], state, opts, j + 1 < steps);

        let mut onehot = vec![0.0; mask.len() * vocab];
        for (b, (&m, &y)) in mask.iter().zip(&gold).enumerate() {
            if m {
                onehot[b * vocab + y] = 1.0;
            }
        }
        let onehot = g.constant(Tensor::matrix(mask.len(), vocab, onehot));
        let picked: Vec<Var> = step
            .log_probs
            .iter()
            .map(|&lp| {
                let m = g.mul(lp, onehot);
                g.sum(m)
            })
            .collect();
        let picked = g.add_all(&picked);
        nll_terms.push(g.scale(picked, -1.0 / samples as f64));

        if let Some(kl) = step.kl {
            let d_z = g.shape(kl)[1];
            let kl = match row_mask(g, &mask, d_z) {
                Some(m) => g.mul(kl, m),
                None => kl,
            };
            kl_parts.push(g.sum(kl));
        }
        if let Some(next) = step.next_state {
            state = next;
        }
    }
    let nll = g.add_all(&nll_terms);
    let kl = if kl_parts.is_empty() { g.constant(Tensor::scalar(0.0)) } else { g.add_all(&kl_parts) };
    ObjectiveTerms { nll, kl, tokens: tgt.gold.real_tokens() }
}

/// Per-sentence objective values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SentenceObjective {
    pub nll: f64,
    pub kl: f64,
    pub elbo: f64,
}

/// Source annotations and initial state for decoding one sentence.
#[derive(Clone, Debug)]
pub struct EncodedSource {
    /// `[T_x, 2 d_h]`
    pub rows: Tensor,
    /// `[T_x, d_a]`
    pub keys: Tensor,
    /// `[1, d_h]`
    pub backward_first: Tensor,
    /// `[1, d_h]`
    pub initial_state: Tensor,
}

impl EncodedSource {
    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// One inference-time step over `k` hypotheses.
#[derive(Clone, Debug)]
pub struct InferStep {
    /// `[k, V]`
    pub log_probs: Tensor,
    /// `[k, T_x]`
    pub attention: Tensor,
    /// `[k, 2 d_h]`
    pub context: Tensor,
    /// `[k, d_z]`, absent for the baseline.
    pub z: Option<Tensor>,
    /// Prior mean and log-variance rows for the learned prior.
    pub prior: Option<(Tensor, Tensor)>,
}

/// A model variant with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, params: ParamStore) -> Result<Self> {
        params.validate(&config)?;
        Ok(Model { config, params })
    }

    /// Freshly initialized model.
    pub fn init(config: ModelConfig, seed: u64, orthogonal: bool) -> Self {
        let mut rng = stream(seed, Stream::Init);
        let params = ParamStore::init(&config, orthogonal, &mut rng);
        Model { config, params }
    }

    /// Initializes `config` from a trained model's tensors where names and
    /// shapes match; the rest are drawn fresh. Returns the fresh names.
    pub fn warm_start(config: ModelConfig, from: &ParamStore, seed: u64, orthogonal: bool) -> Result<(Self, Vec<String>)> {
        let mut model = Model::init(config, seed, orthogonal);
        let mut fresh = Vec::new();
        for spec in model.config.inventory() {
            match from.get(&spec.name) {
                Some(t) if t.shape() == spec.shape.as_slice() => model.params.set(&spec.name, t.clone())?,
                Some(t) => {
                    return Err(Error::Shape(format!(
                        "{}: checkpoint has shape {:?}, configuration needs {:?}",
                        spec.name,
                        t.shape(),
                        spec.shape
                    )))
                }
                None => fresh.push(spec.name.clone()),
            }
        }
        Ok((model, fresh))
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn bind(&self, g: &mut Graph, requires_grad: bool) -> (ModelVars, Vec<Var>) {
        ModelVars::bind(g, &self.config, &self.params, requires_grad)
    }

    pub fn check_source(&self, ids: &[usize]) -> Result<()> {
        check_ids(ids, self.config.src_vocab, "source")
    }

    pub fn check_target(&self, ids: &[usize]) -> Result<()> {
        check_ids(ids, self.config.tgt_vocab, "target")
    }

    /// `(nll, kl, elbo)` of one pair, `elbo = -nll - kl`.
    pub fn sentence_objective(&self, x: &[usize], y: &[usize], opts: &mut ForwardOptions) -> Result<SentenceObjective> {
        self.check_source(x)?;
        self.check_target(y)?;
        let mut g = Graph::new();
        let (mv, _) = self.bind(&mut g, false);
        let terms = batch_objective(
            &mut g,
            &mv,
            &PaddedIds::from_sequences(&[x], PAD),
            &TargetBatch::new(&[y]),
            opts,
        );
        let nll = g.value(terms.nll).item();
        let kl = g.value(terms.kl).item();
        Ok(SentenceObjective { nll, kl, elbo: -nll - kl })
    }

    pub fn encode_source(&self, src: &[usize]) -> Result<EncodedSource> {
        self.check_source(src)?;
        let mut g = Graph::new();
        let (mv, _) = self.bind(&mut g, false);
        let ann = encode(
            &mut g,
            &PaddedIds::from_sequences(&[src], PAD),
            mv.src_emb,
            &mv.enc_fwd,
            &mv.enc_bwd,
            &mv.att,
            &mut Dropout::off(),
        );
        let s0 = init_decoder_state(&mut g, &ann, mv.init_w, mv.init_b);
        Ok(EncodedSource {
            rows: g.value(ann.rows).clone(),
            keys: g.value(ann.keys).clone(),
            backward_first: g.value(ann.backward_first).clone(),
            initial_state: g.value(s0).clone(),
        })
    }

    fn replicated_annotations(&self, g: &mut Graph, enc: &EncodedSource, k: usize) -> Annotations {
        let len = enc.len();
        let idx: Vec<usize> = (0..k).flat_map(|_| 0..len).collect();
        let firsts = vec![0; k];
        Annotations::from_values(
            g,
            enc.rows.gather_rows(&idx),
            enc.keys.gather_rows(&idx),
            vec![true; k * len],
            enc.backward_first.gather_rows(&firsts),
            k,
        )
    }

    /// Scores the next token for `k` hypotheses sharing one source.
    ///
    /// `z_j` is the prior mean (zero for the fixed standard-normal prior);
    /// with `prior_noise` it is a draw from the prior instead.
    pub fn infer_step(
        &self,
        enc: &EncodedSource,
        prev: &[usize],
        states: &Tensor,
        prior_noise: Option<&mut ChaCha8Rng>,
    ) -> Result<InferStep> {
        self.check_target(prev)?;
        let k = prev.len();
        if states.shape() != [k, self.config.dims.d_h] {
            return Err(Error::Shape(format!("expected [{k}, {}] states, got {:?}", self.config.dims.d_h, states.shape())));
        }
        let mut g = Graph::new();
        let (mv, _) = self.bind(&mut g, false);
        let ann = self.replicated_annotations(&mut g, enc, k);
        let s = g.constant(states.clone());
        let y_prev = g.gather(mv.tgt_emb, prev);
        let attention = attend(&mut g, s, &ann, &mv.att);
        let c = attention.context;
        let d_z = self.config.dims.d_z;

        let (z, prior) = match self.variant() {
            Variant::Baseline => (None, None),
            Variant::Vrnmt => {
                let p = prior_params(&mut g, y_prev, s, c, mv.prior.as_ref().expect("prior"));
                let z = match prior_noise {
                    Some(rng) => reparameterize(&mut g, p, gaussian_noise(rng, k, d_z)),
                    None => p.mu,
                };
                (Some(z), Some((g.value(p.mu).clone(), g.value(p.log_var).clone())))
            }
            Variant::VrnmtTd => {
                let z = match prior_noise {
                    Some(rng) => gaussian_noise(rng, k, d_z),
                    None => Tensor::zeros(&[k, d_z]),
                };
                (Some(g.constant(z)), None)
            }
        };
        let lp = output_distribution(&mut g, &mv.readout, y_prev, s, c, z, &mut Dropout::off());
        Ok(InferStep {
            log_probs: g.value(lp).clone(),
            attention: g.value(attention.weights).clone(),
            context: g.value(c).clone(),
            z: z.map(|z| g.value(z).clone()),
            prior,
        })
    }

    /// `s_{j+1}` for each hypothesis after emitting `tokens`.
    pub fn advance(&self, step: &InferStep, states: &Tensor, tokens: &[usize]) -> Result<Tensor> {
        self.check_target(tokens)?;
        let mut g = Graph::new();
        let (mv, _) = self.bind(&mut g, false);
        let s = g.constant(states.clone());
        let y = g.gather(mv.tgt_emb, tokens);
        let c = g.constant(step.context.clone());
        let mut xs = vec![y, c];
        if let Some(z) = &step.z {
            xs.push(g.constant(z.clone()));
        }
        let next = gru_step(&mut g, s, &xs, &mv.dec);
        Ok(g.value(next).clone())
    }
}

/// Compares the tape gradient of the per-sentence negative ELBO
/// (`nll + kl`, one sample per step with noise fixed by `noise_seed`) against
/// central differences over every parameter coordinate.
pub fn sentence_gradient_check(
    model: &Model,
    x: &[usize],
    y: &[usize],
    noise_seed: u64,
    step: f64,
) -> Result<GradCheckReport> {
    model.check_source(x)?;
    model.check_target(y)?;
    let config = model.config.clone();
    let inputs: Vec<Tensor> = config
        .inventory()
        .iter()
        .map(|spec| model.params.get(&spec.name).cloned().expect("validated parameters"))
        .collect();
    let src = PaddedIds::from_sequences(&[x], PAD);
    let tgt = TargetBatch::new(&[y]);
    check_gradient(
        |g, vars| {
            let mv = ModelVars::from_vars(&config, vars);
            let mut opts = ForwardOptions::sampled(stream(noise_seed, Stream::Noise));
            let terms = batch_objective(g, &mv, &src, &tgt, &mut opts);
            g.add(terms.nll, terms.kl)
        },
        &inputs,
        step,
    )
}

fn check_ids(ids: &[usize], size: usize, side: &str) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::invalid(format!("empty {side} sentence")));
    }
    match ids.iter().find(|&&id| id >= size) {
        Some(&id) => Err(Error::TokenOutOfRange { id, size }),
        None => Ok(()),
    }
}
