//! Central finite-difference verification of hand-derived gradients.
//!
//! Errors are reported per tensor as `‖a − n‖ / (‖a‖ + ‖n‖)` where `a` is
//! the analytic gradient and `n` the numeric one, so tensors whose
//! gradient is legitimately near zero do not blow up the ratio.

use std::fmt;

use crate::error::{Error, Result};
use crate::functions::{cross_entropy, softmax, softmax_xent_backward};
use crate::layers::{Layer, Mode, NetGradients, Sequential};
use crate::rng::Rng;
use crate::tensor::{rand_uniform, Tensor};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let scale = norm(analytic) + norm(numeric);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `loss` with respect to `len` scalars of `state`,
/// where `nudge(state, i, delta)` adds `delta` to scalar `i`.
fn central_differences<S>(
    state: &mut S,
    len: usize,
    nudge: impl Fn(&mut S, usize, f64),
    mut loss: impl FnMut(&mut S) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        nudge(state, i, DEFAULT_STEP);
        let plus = loss(state)?;
        nudge(state, i, -2.0 * DEFAULT_STEP);
        let minus = loss(state)?;
        nudge(state, i, DEFAULT_STEP);
        out.push((plus - minus) / (2.0 * DEFAULT_STEP));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LayerCheck {
    pub param_errors: Vec<f64>,
    pub input_error: f64,
}

impl LayerCheck {
    pub fn max_error(&self) -> f64 {
        self.param_errors
            .iter()
            .copied()
            .fold(self.input_error, f64::max)
    }
}

/// Checks one layer against the scalar loss `L = ⟨layer(x), r⟩` for a
/// random direction `r`, which makes the upstream gradient exactly `r`.
/// The forward runs in training mode; freeze dropout masks beforehand.
pub fn check_layer(mut layer: Layer<f64>, x: &Tensor<f64>, rng: &mut Rng) -> Result<LayerCheck> {
    let y = layer.forward(x, Mode::Train)?;
    let r: Tensor<f64> = rand_uniform(rng, y.shape().to_vec(), -1.0, 1.0)?;
    let analytic = layer.backward(&r)?;

    let mut param_errors = Vec::new();
    for (pi, grad) in analytic.d_params.iter().enumerate() {
        let mut probe = layer.clone();
        let numeric = central_differences(
            &mut probe,
            grad.len(),
            |l, i, d| l.params_mut()[pi].data_mut()[i] += d,
            |l| l.clone().forward(x, Mode::Train)?.dot(&r),
        )?;
        param_errors.push(relative_error(grad.data(), &numeric));
    }

    let mut state = (layer.clone(), x.clone());
    let numeric = central_differences(
        &mut state,
        x.len(),
        |s, i, d| s.1.data_mut()[i] += d,
        |(l, xp)| l.forward(xp, Mode::Train)?.dot(&r),
    )?;
    Ok(LayerCheck {
        param_errors,
        input_error: relative_error(analytic.d_input.data(), &numeric),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub layer_index: usize,
    pub layer_name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
    /// Error of the gradient with respect to the network input.
    pub input_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures().is_empty() && self.input_error < self.tolerance
    }

    pub fn failures(&self) -> Vec<&GradCheckEntry> {
        self.entries
            .iter()
            .filter(|e| e.max_rel_error.is_nan() || e.max_rel_error >= self.tolerance)
            .collect()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let verdict = if e.max_rel_error < self.tolerance { "ok" } else { "FAIL" };
            writeln!(
                f,
                "layer {:>2} {:<10} max rel error {:.3e}  {verdict}",
                e.layer_index, e.layer_name, e.max_rel_error
            )?;
        }
        write!(f, "input gradient       max rel error {:.3e}", self.input_error)
    }
}

fn network_loss(net: &mut Sequential<f64>, x: &Tensor<f64>, onehot: &Tensor<f64>) -> Result<f64> {
    let probs = softmax(&net.forward(x, Mode::Train)?)?;
    Ok(cross_entropy(&probs, onehot)?.mean_loss)
}

/// Compares the chained backward pass of `net` under softmax cross-entropy
/// against central differences of the whole-network loss.
///
/// `tamper` may modify the analytic gradients before comparison (negative
/// controls).
pub fn gradient_check_with(
    net: &mut Sequential<f64>,
    x: &Tensor<f64>,
    onehot: &Tensor<f64>,
    tolerance: f64,
    tamper: impl FnOnce(&mut NetGradients<f64>),
) -> Result<GradCheckReport> {
    net.set_dropout_frozen(true);
    let logits = net.forward(x, Mode::Train)?;
    let probs = softmax(&logits)?;
    let mut analytic = net.backward(&softmax_xent_backward(&probs, onehot)?)?;
    tamper(&mut analytic);

    let owners: Vec<(usize, &'static str)> = net
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(i, l)| std::iter::repeat_n((i, l.name()), l.params().len()))
        .collect();
    if owners.len() != analytic.params.len() {
        return Err(Error::State("gradient count does not match parameter count".into()));
    }

    let mut entries: Vec<GradCheckEntry> = Vec::new();
    for (pi, grad) in analytic.params.iter().enumerate() {
        let mut probe = net.clone();
        let values = central_differences(
            &mut probe,
            grad.len(),
            |n, i, d| n.params_mut()[pi].data_mut()[i] += d,
            |n| network_loss(n, x, onehot),
        )?;
        let err = relative_error(grad.data(), &values);
        let (layer_index, name) = owners[pi];
        match entries.last_mut() {
            Some(e) if e.layer_index == layer_index => e.max_rel_error = e.max_rel_error.max(err),
            _ => entries.push(GradCheckEntry {
                layer_index,
                layer_name: name.to_string(),
                max_rel_error: err,
            }),
        }
    }

    let mut state = (net.clone(), x.clone());
    let values = central_differences(
        &mut state,
        x.len(),
        |s, i, d| s.1.data_mut()[i] += d,
        |(n, xp)| network_loss(n, xp, onehot),
    )?;
    net.set_dropout_frozen(false);
    Ok(GradCheckReport {
        tolerance,
        entries,
        input_error: relative_error(analytic.d_input.data(), &values),
    })
}

pub fn gradient_check(
    net: &mut Sequential<f64>,
    x: &Tensor<f64>,
    onehot: &Tensor<f64>,
    tolerance: f64,
) -> Result<GradCheckReport> {
    gradient_check_with(net, x, onehot, tolerance, |_| {})
}
