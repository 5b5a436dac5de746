//! Activations and losses with their exact derivatives.
//!
//! The training loss everywhere is categorical cross-entropy on softmax
//! outputs against one-hot targets.

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

/// Probabilities are clamped to `[LOG_EPS, 1]` before taking the log.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub mean_loss: f64,
    pub per_sample: Option<Vec<f64>>,
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `d_out` where `x > 0`; the subgradient at the kink is 0.
pub fn relu_grad<T: Scalar>(x: &Tensor<T>, d_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != d_out.shape() {
        return Err(Error::Shape(format!(
            "relu_grad input {:?} vs upstream {:?}",
            x.shape(),
            d_out.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(d_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape().to_vec(), data)
}

fn rows_cols<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [b, c] => Ok((b, c)),
        ref s => Err(Error::Shape(format!("{what} must be B×C, got {s:?}"))),
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = rows_cols(logits, "logits")?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Tensor::from_vec(logits.shape().to_vec(), out)
}

/// Checks every row holds exactly one `1` and zeros elsewhere; returns the
/// hot index per row.
pub fn validate_onehot<T: Scalar>(onehot: &Tensor<T>) -> Result<Vec<usize>> {
    let (_, c) = rows_cols(onehot, "one-hot targets")?;
    onehot
        .data()
        .chunks(c)
        .enumerate()
        .map(|(i, row)| {
            let mut hot = None;
            for (j, &v) in row.iter().enumerate() {
                if v == T::one() {
                    if hot.is_some() {
                        return Err(Error::Validation(format!("one-hot row {i} has several ones")));
                    }
                    hot = Some(j);
                } else if v != T::zero() {
                    return Err(Error::Validation(format!(
                        "one-hot row {i} holds non-binary value {v}"
                    )));
                }
            }
            hot.ok_or_else(|| Error::Validation(format!("one-hot row {i} has no one")))
        })
        .collect()
}

fn check_pair<T: Scalar>(probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<Vec<usize>> {
    rows_cols(probs, "probabilities")?;
    if probs.shape() != onehot.shape() {
        return Err(Error::Shape(format!(
            "probabilities {:?} vs targets {:?}",
            probs.shape(),
            onehot.shape()
        )));
    }
    validate_onehot(onehot)
}

/// Mean of `-ln(clamp(p_true, 1e-12, 1))` over the batch.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<LossValue> {
    let hot = check_pair(probs, onehot)?;
    let c = probs.dim(1);
    let per_sample: Vec<f64> = hot
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let p = probs.data()[i * c + j].to_f64().unwrap_or(0.0);
            -p.clamp(LOG_EPS, 1.0).ln()
        })
        .collect();
    let mean_loss = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(LossValue {
        mean_loss,
        per_sample: Some(per_sample),
    })
}

/// Gradient of mean cross-entropy with respect to the logits that produced
/// `probs`: `(probs - onehot) / B`.
pub fn softmax_xent_backward<T: Scalar>(probs: &Tensor<T>, onehot: &Tensor<T>) -> Result<Tensor<T>> {
    check_pair(probs, onehot)?;
    let inv_b: T = cast(1.0 / probs.dim(0) as f64);
    Ok(probs.sub(onehot)?.scale(inv_b))
}
