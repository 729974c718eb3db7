//! Recurrent and attention building blocks over the tape.
//!
//! All layers work on row batches: a `[B, d]` variable carries one row per
//! sentence (or per beam hypothesis). Weight matrices are stored `[in, out]`
//! so a layer computes `x · W`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Graph, Tensor, Var};

/// Token ids padded into a `[batch, len]` row-major block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedIds {
    pub batch: usize,
    pub len: usize,
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl PaddedIds {
    pub fn from_sequences<S: AsRef<[usize]>>(seqs: &[S], pad: usize) -> Self {
        let batch = seqs.len();
        let len = seqs.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
        let mut ids = vec![pad; batch * len];
        let mut mask = vec![false; batch * len];
        for (b, s) in seqs.iter().enumerate() {
            for (t, &id) in s.as_ref().iter().enumerate() {
                ids[b * len + t] = id;
                mask[b * len + t] = true;
            }
        }
        PaddedIds { batch, len, ids, mask }
    }

    pub fn column(&self, t: usize) -> Vec<usize> {
        (0..self.batch).map(|b| self.ids[b * self.len + t]).collect()
    }

    pub fn column_mask(&self, t: usize) -> Vec<bool> {
        (0..self.batch).map(|b| self.mask[b * self.len + t]).collect()
    }

    pub fn lengths(&self) -> Vec<usize> {
        (0..self.batch)
            .map(|b| self.mask[b * self.len..(b + 1) * self.len].iter().filter(|&&m| m).count())
            .collect()
    }

    pub fn real_tokens(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Inverted dropout with its own random stream; rate 0 disables it.
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        Dropout { rate, rng }
    }

    pub fn off() -> Self {
        Dropout { rate: 0.0, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Var {
        g.dropout(x, self.rate, &mut self.rng)
    }
}

/// Gate-fused GRU weights. `inputs[k]` maps the k-th input to the three
/// stacked pre-activations `[reset | update | candidate]`.
#[derive(Clone, Debug)]
pub struct GruVars {
    pub inputs: Vec<Var>,
    /// `[d_h, 2 d_h]`, recurrent weights for the reset and update gates.
    pub u_gates: Var,
    /// `[d_h, d_h]`, recurrent weights for the candidate state.
    pub u_cand: Var,
    /// `[3 d_h]`.
    pub bias: Var,
}

/// One GRU transition:
/// `r = σ(x W_r + s U_r + b_r)`, `u = σ(x W_u + s U_u + b_u)`,
/// `s̃ = tanh(x W + (r ⊙ s) U + b)`, `s' = (1 - u) ⊙ s + u ⊙ s̃`,
/// where `x W` sums over every `(xs[k], p.inputs[k])` pair.
pub fn gru_step(g: &mut Graph, s_prev: Var, xs: &[Var], p: &GruVars) -> Var {
    assert_eq!(xs.len(), p.inputs.len(), "gru_step: one weight per input");
    let d_h = g.shape(s_prev)[1];
    let projected: Vec<Var> = xs.iter().zip(&p.inputs).map(|(&x, &w)| g.matmul(x, w)).collect();
    let x_all = g.add_all(&projected);
    let x_all = g.add_bias(x_all, p.bias);

    let s_gates = g.matmul(s_prev, p.u_gates);
    let x_gates = g.slice(x_all, 0, 2 * d_h);
    let gates = g.add(x_gates, s_gates);
    let gates = g.sigmoid(gates);
    let reset = g.slice(gates, 0, d_h);
    let update = g.slice(gates, d_h, 2 * d_h);

    let rs = g.mul(reset, s_prev);
    let rs_u = g.matmul(rs, p.u_cand);
    let x_cand = g.slice(x_all, 2 * d_h, 3 * d_h);
    let cand = g.add(x_cand, rs_u);
    let cand = g.tanh(cand);

    let neg_u = g.scale(update, -1.0);
    let keep = g.add_scalar(neg_u, 1.0);
    let kept = g.mul(keep, s_prev);
    let fresh = g.mul(update, cand);
    g.add(kept, fresh)
}

/// Decoder transition with the latent sample injected into both gates and
/// the candidate state. `p.inputs` must be `[W_y, W_c, V]`.
pub fn variational_gru_step(g: &mut Graph, y_emb: Var, s: Var, c: Var, z: Var, p: &GruVars) -> Var {
    assert_eq!(p.inputs.len(), 3, "variational_gru_step expects word, context and latent weights");
    gru_step(g, s, &[y_emb, c, z], p)
}

/// Keeps `old` where `mask` is false and takes `new` elsewhere, exactly.
fn blend_rows(g: &mut Graph, old: Var, new: Var, mask: &[bool]) -> Var {
    if mask.iter().all(|&m| m) {
        return new;
    }
    let d = g.shape(old)[1];
    let on: Vec<f64> = mask.iter().flat_map(|&m| std::iter::repeat_n(f64::from(m as u8), d)).collect();
    let off: Vec<f64> = on.iter().map(|v| 1.0 - v).collect();
    let rows = mask.len();
    let on = g.constant(Tensor::matrix(rows, d, on));
    let off = g.constant(Tensor::matrix(rows, d, off));
    let a = g.mul(new, on);
    let b = g.mul(old, off);
    g.add(a, b)
}

#[derive(Clone, Debug)]
pub struct AttentionVars {
    /// `[d_h, d_a]`
    pub w_s: Var,
    /// `[2 d_h, d_a]`
    pub u_h: Var,
    /// `[d_a, 1]`
    pub v: Var,
}

/// Source annotations for a batch of `batch` sentences padded to `len`.
#[derive(Clone, Debug)]
pub struct Annotations {
    pub batch: usize,
    pub len: usize,
    /// `[batch * len, 2 d_h]`, row `b * len + i` is `h_i` of sentence `b`.
    pub rows: Var,
    /// Same values viewed as `[batch, len, 2 d_h]`.
    pub stacked: Var,
    /// `[batch * len, d_a]`, the source half of the attention score.
    pub keys: Var,
    pub mask: Vec<bool>,
    /// `[batch, d_h]`, backward-direction state at the first position.
    pub backward_first: Var,
}

impl Annotations {
    /// Builds annotations from precomputed values; used when decoding reuses
    /// an encoded source across graphs.
    pub fn from_values(
        g: &mut Graph,
        rows: Tensor,
        keys: Tensor,
        mask: Vec<bool>,
        backward_first: Tensor,
        batch: usize,
    ) -> Self {
        let len = mask.len() / batch;
        let width = rows.cols();
        let rows = g.constant(rows);
        let stacked = g.reshape(rows, &[batch, len, width]);
        Annotations {
            batch,
            len,
            rows,
            stacked,
            keys: g.constant(keys),
            mask,
            backward_first: g.constant(backward_first),
        }
    }
}

/// Bidirectional GRU encoder. Forward and backward states are concatenated
/// per position; padded positions keep the incoming state so each sentence's
/// backward pass starts at its own last real token.
pub fn encode(
    g: &mut Graph,
    src: &PaddedIds,
    emb: Var,
    fwd: &GruVars,
    bwd: &GruVars,
    att: &AttentionVars,
    dropout: &mut Dropout,
) -> Annotations {
    let (batch, len) = (src.batch, src.len);
    let d_h = g.shape(fwd.u_cand)[0];
    let xs: Vec<Var> = (0..len)
        .map(|t| {
            let x = g.gather(emb, &src.column(t));
            dropout.apply(g, x)
        })
        .collect();

    let zero = g.constant(Tensor::zeros(&[batch, d_h]));
    let mut forward = Vec::with_capacity(len);
    let mut h = zero;
    for (t, &x) in xs.iter().enumerate() {
        let next = gru_step(g, h, &[x], fwd);
        h = blend_rows(g, h, next, &src.column_mask(t));
        forward.push(h);
    }
    let mut backward = vec![zero; len];
    let mut h = zero;
    for t in (0..len).rev() {
        let next = gru_step(g, h, &[xs[t]], bwd);
        h = blend_rows(g, h, next, &src.column_mask(t));
        backward[t] = h;
    }

    let per_position: Vec<Var> = forward.iter().zip(&backward).map(|(&f, &b)| g.concat(&[f, b])).collect();
    let wide = g.concat(&per_position);
    let rows = g.reshape(wide, &[batch * len, 2 * d_h]);
    let stacked = g.reshape(wide, &[batch, len, 2 * d_h]);
    let keys = g.matmul(rows, att.u_h);
    Annotations { batch, len, rows, stacked, keys, mask: src.mask.clone(), backward_first: backward[0] }
}

/// Context vector and attention weights for one decoding step.
#[derive(Clone, Copy, Debug)]
pub struct Attention {
    /// `[B, 2 d_h]`
    pub context: Var,
    /// `[B, len]`, exactly zero at padded positions.
    pub weights: Var,
}

/// Additive attention: `e_i = vᵀ tanh(s W_a + h_i U_a)` over unmasked
/// positions, `α = softmax(e)`, `c = Σ α_i h_i`.
pub fn attend(g: &mut Graph, s: Var, ann: &Annotations, p: &AttentionVars) -> Attention {
    let (batch, len) = (ann.batch, ann.len);
    assert_eq!(g.shape(s)[0], batch, "attend: state rows differ from annotation batch");
    let query = g.matmul(s, p.w_s);
    let spread: Vec<usize> = (0..batch).flat_map(|b| std::iter::repeat_n(b, len)).collect();
    let query = g.gather(query, &spread);
    let pre = g.add(query, ann.keys);
    let act = g.tanh(pre);
    let scores = g.matmul(act, p.v);
    let scores = g.reshape(scores, &[batch, len]);
    let weights = g.masked_softmax(scores, &ann.mask);
    let w3 = g.reshape(weights, &[batch, 1, len]);
    let ctx = g.batch_matmul(w3, ann.stacked);
    let width = g.shape(ann.stacked)[2];
    let context = g.reshape(ctx, &[batch, width]);
    Attention { context, weights }
}

/// `s_0 = tanh(h_back W_init + b_init)` from the backward state at the first
/// source position.
pub fn init_decoder_state(g: &mut Graph, ann: &Annotations, w: Var, b: Var) -> Var {
    let pre = g.matmul(ann.backward_first, w);
    let pre = g.add_bias(pre, b);
    g.tanh(pre)
}
