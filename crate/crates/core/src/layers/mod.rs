//! Layers with hand-derived backward passes, and the sequential stack that
//! chains them.
//!
//! Each layer caches what its backward pass needs during `forward`; calling
//! `backward` without a prior `forward` is a state error.

mod conv;
mod dense;
mod dropout;
mod pool;

pub use conv::{naive_conv2d, Conv2D};
pub use dense::Dense;
pub use dropout::Dropout;
pub use pool::MaxPool2D;

use crate::error::{Error, Result};
use crate::functions::{relu, relu_grad, softmax};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub struct LayerGradients<T> {
    /// One gradient per parameter tensor, in `params()` order.
    pub d_params: Vec<Tensor<T>>,
    pub d_input: Tensor<T>,
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Self { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.cache = Some(x.clone());
        relu(x)
    }

    pub fn backward(&mut self, d_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("relu backward called before forward".into()))?;
        relu_grad(x, d_out)
    }

    /// Smallest `|x|` seen by the last forward.
    pub fn kink_margin(&self) -> Option<T> {
        self.cache
            .as_ref()
            .map(|x| x.data().iter().fold(T::infinity(), |m, v| m.min(v.abs())))
    }
}

/// Collapses everything after the batch axis.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Self { input_shape: None }
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let per_item: usize = x.shape()[1..].iter().product();
        self.input_shape = Some(x.shape().to_vec());
        x.reshape([x.dim(0), per_item])
    }

    pub fn backward<T: Scalar>(&mut self, d_out: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::State("flatten backward called before forward".into()))?;
        d_out.reshape(shape.clone())
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Conv2D(Conv2D<T>),
    MaxPool2D(MaxPool2D<T>),
    Relu(Relu<T>),
    Dropout(Dropout<T>),
    Flatten(Flatten),
}

impl<T: Scalar> Layer<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2D(_) => "conv2d",
            Layer::MaxPool2D(_) => "maxpool2d",
            Layer::Relu(_) => "relu",
            Layer::Dropout(_) => "dropout",
            Layer::Flatten(_) => "flatten",
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv2D(l) => l.forward(x),
            Layer::MaxPool2D(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::Flatten(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, d_out: &Tensor<T>) -> Result<LayerGradients<T>> {
        let plain = |d_input| LayerGradients {
            d_params: Vec::new(),
            d_input,
        };
        match self {
            Layer::Dense(l) => l.backward(d_out),
            Layer::Conv2D(l) => l.backward(d_out),
            Layer::MaxPool2D(l) => l.backward(d_out).map(plain),
            Layer::Relu(l) => l.backward(d_out).map(plain),
            Layer::Dropout(l) => l.backward(d_out).map(plain),
            Layer::Flatten(l) => l.backward(d_out).map(plain),
        }
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Dense(l) => l.params(),
            Layer::Conv2D(l) => l.params(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Dense(l) => l.params_mut(),
            Layer::Conv2D(l) => l.params_mut(),
            _ => Vec::new(),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense(l) => match input {
                [n] if *n == l.inputs() => Ok(vec![l.outputs()]),
                s => Err(Error::Shape(format!(
                    "dense layer expects [{}], got {s:?}",
                    l.inputs()
                ))),
            },
            Layer::Conv2D(l) => l.output_shape(input),
            Layer::MaxPool2D(l) => l.output_shape(input),
            Layer::Relu(_) | Layer::Dropout(_) => Ok(input.to_vec()),
            Layer::Flatten(_) => Ok(vec![input.iter().product()]),
        }
    }
}

/// Gradients of a whole stack, flattened in [`Sequential::params`] order.
#[derive(Debug, Clone)]
pub struct NetGradients<T> {
    pub params: Vec<Tensor<T>>,
    pub d_input: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Sequential<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Propagates a per-sample input shape through every layer, failing on
    /// the first incompatibility (e.g. odd extents before a 2×2 pool).
    pub fn audit(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(&shape).map_err(|e| {
                Error::Shape(format!("layer {i} ({}): {e}", layer.name()))
            })?;
        }
        Ok(shape)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut layers = self.layers.iter_mut();
        let Some(first) = layers.next() else {
            return Ok(x.clone());
        };
        let mut h = first.forward(x, mode)?;
        for layer in layers {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, d_out: &Tensor<T>) -> Result<NetGradients<T>> {
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut g = d_out.clone();
        for layer in self.layers.iter_mut().rev() {
            let grads = layer.backward(&g)?;
            per_layer.push(grads.d_params);
            g = grads.d_input;
        }
        per_layer.reverse();
        Ok(NetGradients {
            params: per_layer.into_iter().flatten().collect(),
            d_input: g,
        })
    }

    /// Class probabilities in inference mode.
    pub fn predict_proba(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.forward(x, Mode::Eval)?)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn snapshot(&self) -> Vec<Tensor<T>> {
        self.params().into_iter().cloned().collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor<T>]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != snapshot.len() {
            return Err(Error::Shape(format!(
                "snapshot holds {} tensors, model has {}",
                snapshot.len(),
                params.len()
            )));
        }
        for (p, s) in params.iter_mut().zip(snapshot) {
            if p.shape() != s.shape() {
                return Err(Error::Shape(format!(
                    "snapshot tensor {:?} vs parameter {:?}",
                    s.shape(),
                    p.shape()
                )));
            }
            **p = s.clone();
        }
        Ok(())
    }

    pub fn set_dropout_frozen(&mut self, frozen: bool) {
        for layer in &mut self.layers {
            if let Layer::Dropout(d) = layer {
                d.set_frozen(frozen);
            }
        }
    }

    /// Smallest distance of the last forward pass from a ReLU kink or a
    /// max-pool tie; `None` if the stack has neither.
    pub fn kink_margin(&self) -> Option<f64> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Relu(r) => r.kink_margin(),
                Layer::MaxPool2D(p) => p.tie_margin(),
                _ => None,
            })
            .map(|m| m.to_f64().unwrap_or(0.0))
            .reduce(f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn audit_reports_odd_pool_input() {
        let mut rng = Rng::new(0);
        let net = Sequential::<f64>::new(vec![
            Layer::Conv2D(Conv2D::he(&mut rng, 3, 4, 4).unwrap()),
            Layer::MaxPool2D(MaxPool2D::new(2, 2).unwrap()),
        ]);
        assert_eq!(net.audit(&[3, 9, 9]).unwrap(), vec![4, 3, 3]);
        let err = net.audit(&[3, 8, 8]).unwrap_err().to_string();
        assert!(err.contains("maxpool2d"), "{err}");
    }

    #[test]
    fn snapshot_restore_round_trip() {
        let mut rng = Rng::new(1);
        let mut net = Sequential::<f64>::new(vec![Layer::Dense(Dense::he(&mut rng, 3, 2).unwrap())]);
        let snap = net.snapshot();
        for p in net.params_mut() {
            p.data_mut().fill(0.0);
        }
        net.restore(&snap).unwrap();
        assert_eq!(net.snapshot(), snap);
        assert!(net.restore(&snap[..1]).is_err());
    }
}
