use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, flat coordinate)` where the worst error occurred.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone(), false)).collect();
    let out = f(&mut g, &vars);
    let value = g.value(out);
    if value.len() != 1 {
        return Err(Error::Graph(format!("function must be scalar, got {:?}", value.shape())));
    }
    let v = value.item();
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("function value {v}")));
    }
    Ok(v)
}

/// Checks the tape gradient of the scalar function `f` at `inputs` against
/// central finite differences with the given `step`, over every coordinate
/// of every input.
pub fn check_gradient<F>(f: F, inputs: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    if !(step > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {step}")));
    }
    if inputs.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("gradient-check inputs".into()));
    }

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone(), true)).collect();
    let out = f(&mut g, &vars);
    if !g.value(out).is_finite() {
        return Err(Error::NonFinite("function value".into()));
    }
    let grads = g.backward(out)?;
    for &v in &vars {
        if let Some(t) = grads.get(v) {
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("analytic gradient of input {}", v.index())));
            }
        }
    }

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), coordinates: 0 };
    let mut probe = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        for k in 0..inputs[i].len() {
            let analytic = grads.get(v).map_or(0.0, |t| t.data()[k]);
            let orig = inputs[i].data()[k];
            probe[i].data_mut()[k] = orig + step;
            let plus = evaluate(&f, &probe)?;
            probe[i].data_mut()[k] = orig - step;
            let minus = evaluate(&f, &probe)?;
            probe[i].data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic, numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, k);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}
