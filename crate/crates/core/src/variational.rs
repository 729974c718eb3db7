//! Per-timestep latent inference: posterior and prior networks, the
//! reparameterized sample and the diagonal-Gaussian KL divergence.

use crate::tensor::{Graph, Tensor, Var};

/// Bounds applied to every computed log-variance.
pub const LOG_VAR_MIN: f64 = -8.0;
pub const LOG_VAR_MAX: f64 = 8.0;

/// Weights of one inference network (posterior or prior).
///
/// `inputs[k]` projects the k-th conditioning vector into the hidden layer;
/// the hidden layer is `tanh(Σ x_k W_k + b)`.
#[derive(Clone, Debug)]
pub struct InfererVars {
    pub inputs: Vec<Var>,
    pub bias: Var,
    pub w_mu: Var,
    pub b_mu: Var,
    pub w_logvar: Var,
    pub b_logvar: Var,
}

/// Diagonal Gaussian on the tape, one row per batch entry.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mu: Var,
    pub log_var: Var,
}

/// Diagonal Gaussian parameters as plain vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianParams {
    pub fn standard(d_z: usize) -> Self {
        GaussianParams { mu: vec![0.0; d_z], log_var: vec![0.0; d_z] }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// A latent draw together with the noise that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
    /// Empty for deterministic (mean) draws.
    pub epsilon: Vec<f64>,
}

impl LatentSample {
    /// Recovers the noise from a recorded draw: `(z - μ) ⊙ exp(-log σ² / 2)`.
    pub fn recover_epsilon(&self, g: &GaussianParams) -> Vec<f64> {
        self.z
            .iter()
            .zip(&g.mu)
            .zip(&g.log_var)
            .map(|((z, m), lv)| (z - m) * (-lv / 2.0).exp())
            .collect()
    }
}

fn gaussian_head(g: &mut Graph, xs: &[Var], p: &InfererVars) -> GaussianVars {
    assert_eq!(xs.len(), p.inputs.len(), "inferer: one weight per conditioning input");
    let projected: Vec<Var> = xs.iter().zip(&p.inputs).map(|(&x, &w)| g.matmul(x, w)).collect();
    let pre = g.add_all(&projected);
    let pre = g.add_bias(pre, p.bias);
    let hidden = g.tanh(pre);
    let mu = g.matmul(hidden, p.w_mu);
    let mu = g.add_bias(mu, p.b_mu);
    let lv = g.matmul(hidden, p.w_logvar);
    let lv = g.add_bias(lv, p.b_logvar);
    let log_var = g.clamp(lv, LOG_VAR_MIN, LOG_VAR_MAX);
    GaussianVars { mu, log_var }
}

/// Posterior `q(z_j | x, y_{≤j})` from `[y_{j-1}; s_j; c_j; y_j]`.
pub fn posterior_params(g: &mut Graph, y_prev: Var, s: Var, c: Var, y: Var, p: &InfererVars) -> GaussianVars {
    gaussian_head(g, &[y_prev, s, c, y], p)
}

/// Posterior without temporal dependencies: conditions on `y_j` alone.
pub fn posterior_params_current_only(g: &mut Graph, y: Var, p: &InfererVars) -> GaussianVars {
    gaussian_head(g, &[y], p)
}

/// Prior `p(z_j | x, y_{<j})` from `[y_{j-1}; s_j; c_j]`.
pub fn prior_params(g: &mut Graph, y_prev: Var, s: Var, c: Var, p: &InfererVars) -> GaussianVars {
    gaussian_head(g, &[y_prev, s, c], p)
}

/// `z = μ + exp(log σ² / 2) ⊙ ε`. The noise enters as a constant, so
/// gradients reach `μ` and `log σ²` only.
pub fn reparameterize(g: &mut Graph, q: GaussianVars, epsilon: Tensor) -> Var {
    assert_eq!(g.shape(q.mu), epsilon.shape(), "reparameterize: noise shape");
    let half = g.scale(q.log_var, 0.5);
    let sigma = g.exp(half);
    let eps = g.constant(epsilon);
    let spread = g.mul(sigma, eps);
    g.add(q.mu, spread)
}

/// Coordinate-wise KL terms `[B, d_z]` of `KL(q ‖ p)`:
/// `½ [(σ_q² + (μ_q − μ_p)²) / σ_p² − 1 + log σ_p² − log σ_q²]`.
/// `p = None` stands for the standard normal.
pub fn kl_terms(g: &mut Graph, q: GaussianVars, p: Option<GaussianVars>) -> Var {
    let (diff_lv, dm2_scaled) = match p {
        Some(p) => {
            let d = g.sub(q.log_var, p.log_var);
            let dm = g.sub(q.mu, p.mu);
            let dm2 = g.mul(dm, dm);
            let neg = g.scale(p.log_var, -1.0);
            let inv_var = g.exp(neg);
            (d, g.mul(dm2, inv_var))
        }
        None => (q.log_var, g.mul(q.mu, q.mu)),
    };
    let ratio = g.exp(diff_lv);
    let total = g.add(ratio, dm2_scaled);
    let total = g.add_scalar(total, -1.0);
    let total = g.sub(total, diff_lv);
    g.scale(total, 0.5)
}

/// Summed `KL(q ‖ p)` over all coordinates and rows.
pub fn kl_diag_gaussians(g: &mut Graph, q: GaussianVars, p: Option<GaussianVars>) -> Var {
    let terms = kl_terms(g, q, p);
    g.sum(terms)
}

/// Closed-form `KL(q ‖ p)` for plain parameter vectors.
pub fn kl_divergence(q: &GaussianParams, p: &GaussianParams) -> f64 {
    assert_eq!(q.dim(), p.dim(), "kl_divergence: dimensions differ");
    let mut g = Graph::new();
    let row = |g: &mut Graph, v: &[f64]| g.constant(Tensor::matrix(1, v.len(), v.to_vec()));
    let qv = GaussianVars { mu: row(&mut g, &q.mu), log_var: row(&mut g, &q.log_var) };
    let pv = GaussianVars { mu: row(&mut g, &p.mu), log_var: row(&mut g, &p.log_var) };
    let kl = kl_diag_gaussians(&mut g, qv, Some(pv));
    g.value(kl).item()
}

/// Plain-vector reparameterized draw; an empty `epsilon` gives the mean.
pub fn sample(gauss: &GaussianParams, epsilon: &[f64]) -> LatentSample {
    if epsilon.is_empty() {
        return LatentSample { z: gauss.mu.clone(), epsilon: Vec::new() };
    }
    assert_eq!(epsilon.len(), gauss.dim(), "sample: noise dimension");
    let mut g = Graph::new();
    let q = GaussianVars {
        mu: g.constant(Tensor::matrix(1, gauss.dim(), gauss.mu.clone())),
        log_var: g.constant(Tensor::matrix(1, gauss.dim(), gauss.log_var.clone())),
    };
    let z = reparameterize(&mut g, q, Tensor::matrix(1, epsilon.len(), epsilon.to_vec()));
    LatentSample { z: g.value(z).data().to_vec(), epsilon: epsilon.to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::check_gradient;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    fn vecmat(x: &[f64], w: &Tensor) -> Vec<f64> {
        let cols = w.cols();
        (0..cols).map(|j| x.iter().enumerate().map(|(i, xi)| xi * w.data()[i * cols + j]).sum()).collect()
    }

    struct Weights {
        ws: Vec<Tensor>,
        b: Tensor,
        w_mu: Tensor,
        b_mu: Tensor,
        w_lv: Tensor,
        b_lv: Tensor,
    }

    fn random_weights(rng: &mut ChaCha8Rng, in_dims: &[usize], d_z: usize, zero: bool) -> Weights {
        let mut t = |shape: &[usize]| if zero { Tensor::zeros(shape) } else { rand_tensor(rng, shape, 0.6) };
        Weights {
            ws: in_dims.iter().map(|&d| t(&[d, d_z])).collect(),
            b: t(&[d_z]),
            w_mu: t(&[d_z, d_z]),
            b_mu: t(&[d_z]),
            w_lv: t(&[d_z, d_z]),
            b_lv: t(&[d_z]),
        }
    }

    fn bind(g: &mut Graph, w: &Weights) -> InfererVars {
        InfererVars {
            inputs: w.ws.iter().map(|t| g.constant(t.clone())).collect(),
            bias: g.constant(w.b.clone()),
            w_mu: g.constant(w.w_mu.clone()),
            b_mu: g.constant(w.b_mu.clone()),
            w_logvar: g.constant(w.w_lv.clone()),
            b_logvar: g.constant(w.b_lv.clone()),
        }
    }

    /// Straight-line `h = tanh(W[x..] + b)`, `μ = W_μ h + b_μ`,
    /// `log σ² = clamp(W_σ h + b_σ)`.
    fn oracle(xs: &[&[f64]], w: &Weights) -> (Vec<f64>, Vec<f64>) {
        let mut pre = w.b.data().to_vec();
        for (x, wm) in xs.iter().zip(&w.ws) {
            pre.iter_mut().zip(vecmat(x, wm)).for_each(|(p, v)| *p += v);
        }
        let h: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let mu = vecmat(&h, &w.w_mu).iter().zip(w.b_mu.data()).map(|(a, b)| a + b).collect();
        let lv = vecmat(&h, &w.w_lv).iter().zip(w.b_lv.data()).map(|(a, b)| (a + b).clamp(-8.0, 8.0)).collect();
        (mu, lv)
    }

    fn inputs(rng: &mut ChaCha8Rng) -> Vec<Tensor> {
        vec![
            rand_tensor(rng, &[1, 3], 1.0),
            rand_tensor(rng, &[1, 4], 1.0),
            rand_tensor(rng, &[1, 8], 1.0),
            rand_tensor(rng, &[1, 3], 1.0),
        ]
    }

    #[test]
    fn posterior_and_prior_match_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = inputs(&mut rng);
        let post = random_weights(&mut rng, &[3, 4, 8, 3], 3, false);
        let prior = random_weights(&mut rng, &[3, 4, 8], 3, false);
        let mut g = Graph::new();
        let v: Vec<Var> = x.iter().map(|t| g.constant(t.clone())).collect();
        let pv = bind(&mut g, &post);
        let q = posterior_params(&mut g, v[0], v[1], v[2], v[3], &pv);
        let (mu, lv) = oracle(&[x[0].data(), x[1].data(), x[2].data(), x[3].data()], &post);
        for (a, b) in g.value(q.mu).data().iter().zip(&mu).chain(g.value(q.log_var).data().iter().zip(&lv)) {
            assert!((a - b).abs() < 1e-12);
        }
        let prv = bind(&mut g, &prior);
        let p = prior_params(&mut g, v[0], v[1], v[2], &prv);
        let (mu, lv) = oracle(&[x[0].data(), x[1].data(), x[2].data()], &prior);
        for (a, b) in g.value(p.mu).data().iter().zip(&mu).chain(g.value(p.log_var).data().iter().zip(&lv)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = inputs(&mut rng);
        let mut g = Graph::new();
        let v: Vec<Var> = x.iter().map(|t| g.constant(t.clone())).collect();
        let post = bind(&mut g, &random_weights(&mut rng, &[3, 4, 8, 3], 3, true));
        let q = posterior_params(&mut g, v[0], v[1], v[2], v[3], &post);
        let prior = bind(&mut g, &random_weights(&mut rng, &[3, 4, 8], 3, true));
        let p = prior_params(&mut g, v[0], v[1], v[2], &prior);
        let td = bind(&mut g, &random_weights(&mut rng, &[3], 3, true));
        let t = posterior_params_current_only(&mut g, v[3], &td);
        for gv in [q, p, t] {
            assert!(g.value(gv.mu).data().iter().all(|&m| m == 0.0));
            assert!(g.value(gv.log_var).data().iter().all(|&m| m == 0.0));
        }
    }

    #[test]
    fn log_variance_is_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut w = random_weights(&mut rng, &[3], 3, false);
        w.b_lv = Tensor::vector(vec![100.0, -100.0, 0.0]);
        let mut g = Graph::new();
        let x = g.constant(rand_tensor(&mut rng, &[1, 3], 1.0));
        let p = bind(&mut g, &w);
        let q = posterior_params_current_only(&mut g, x, &p);
        let lv = g.value(q.log_var).data();
        assert_eq!(lv[0], LOG_VAR_MAX);
        assert_eq!(lv[1], LOG_VAR_MIN);
    }

    #[test]
    fn reparameterize_examples() {
        let g = GaussianParams { mu: vec![0.5, -1.0, 2.0], log_var: vec![0.0; 3] };
        assert_eq!(sample(&g, &[]).z, g.mu);
        assert_eq!(sample(&g, &[0.0; 3]).z, g.mu);
        assert_eq!(sample(&g, &[1.0; 3]).z, vec![1.5, 0.0, 3.0]);
    }

    #[test]
    fn reparameterize_mean_matches_monte_carlo() {
        let gauss = GaussianParams { mu: vec![0.3, -1.2], log_var: vec![0.7, -1.5] };
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let n = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let eps: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
            let s = sample(&gauss, &eps);
            sums[0] += s.z[0];
            sums[1] += s.z[1];
        }
        for k in 0..2 {
            let sigma = (gauss.log_var[k] / 2.0).exp();
            let tol = 3.0 * sigma / (n as f64).sqrt();
            assert!((sums[k] / n as f64 - gauss.mu[k]).abs() < tol);
        }
    }

    #[test]
    fn reparameterize_gradient_reaches_mean_and_log_variance() {
        let mut g = Graph::new();
        let mu = g.input(Tensor::matrix(1, 2, vec![0.1, 0.2]), true);
        let lv = g.input(Tensor::matrix(1, 2, vec![0.0, 1.0]), true);
        let z = reparameterize(&mut g, GaussianVars { mu, log_var: lv }, Tensor::matrix(1, 2, vec![1.0, -2.0]));
        let loss = g.sum(z);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(mu).unwrap().data(), &[1.0, 1.0]);
        let want = [0.5, 0.5 * 0.5f64.exp() * -2.0];
        for (a, b) in grads.get(lv).unwrap().data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn kl_examples() {
        let q = GaussianParams { mu: vec![0.4, -0.7], log_var: vec![0.3, -1.1] };
        assert_eq!(kl_divergence(&q, &q), 0.0);
        let n01 = GaussianParams::standard(1);
        let q = GaussianParams { mu: vec![1.0], log_var: vec![0.0] };
        assert!((kl_divergence(&q, &n01) - 0.5).abs() < 1e-15);
        let q = GaussianParams { mu: vec![0.0], log_var: vec![2.0] };
        let want = 0.5 * (2f64.exp() - 1.0 - 2.0);
        assert!((kl_divergence(&q, &n01) - want).abs() < 1e-14);
        assert!((want - 2.1945).abs() < 1e-4);
    }

    #[test]
    fn kl_against_standard_normal_matches_general_form() {
        let mut g = Graph::new();
        let mu = g.constant(Tensor::matrix(1, 2, vec![0.3, -0.9]));
        let lv = g.constant(Tensor::matrix(1, 2, vec![0.5, -1.5]));
        let zeros = g.constant(Tensor::zeros(&[1, 2]));
        let q = GaussianVars { mu, log_var: lv };
        let a = kl_diag_gaussians(&mut g, q, None);
        let b = kl_diag_gaussians(&mut g, q, Some(GaussianVars { mu: zeros, log_var: zeros }));
        assert!((g.value(a).item() - g.value(b).item()).abs() < 1e-15);
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let inputs: Vec<Tensor> = (0..4).map(|_| rand_tensor(&mut rng, &[2, 3], 1.5)).collect();
        let report = check_gradient(
            |g, v| {
                kl_diag_gaussians(
                    g,
                    GaussianVars { mu: v[0], log_var: v[1] },
                    Some(GaussianVars { mu: v[2], log_var: v[3] }),
                )
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative_and_zero_only_on_coincidence(
            qm in proptest::collection::vec(-3.0f64..3.0, 3),
            ql in proptest::collection::vec(-8.0f64..8.0, 3),
            pm in proptest::collection::vec(-3.0f64..3.0, 3),
            pl in proptest::collection::vec(-8.0f64..8.0, 3),
        ) {
            let q = GaussianParams { mu: qm, log_var: ql };
            let p = GaussianParams { mu: pm, log_var: pl };
            let kl = kl_divergence(&q, &p);
            prop_assert!(kl >= 0.0);
            if q != p {
                prop_assert!(kl > 0.0);
            }
            prop_assert_eq!(kl_divergence(&q, &q), 0.0);
        }

        #[test]
        fn recorded_noise_is_recoverable(
            mu in proptest::collection::vec(-3.0f64..3.0, 4),
            lv in proptest::collection::vec(-8.0f64..8.0, 4),
            eps in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let g = GaussianParams { mu, log_var: lv };
            let s = sample(&g, &eps);
            for (a, b) in s.recover_epsilon(&g).iter().zip(&eps) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}
