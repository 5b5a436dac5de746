use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{he_init, Tensor};

use super::LayerGradients;

/// Fully connected layer computing `y = x·Wᵀ + b`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    weight: Tensor<T>,
    bias: Tensor<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    /// `weight` is `[out × in]`, `bias` is `[out]`.
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        match (weight.shape(), bias.shape()) {
            (&[out, _], &[b]) if b == out => Ok(Self {
                weight,
                bias,
                cache: None,
            }),
            (w, b) => Err(Error::Shape(format!(
                "dense weight {w:?} incompatible with bias {b:?}"
            ))),
        }
    }

    /// He-normal weights, zero bias.
    pub fn he(rng: &mut Rng, inputs: usize, outputs: usize) -> Result<Self> {
        Self::new(
            he_init(rng, inputs, [outputs, inputs])?,
            Tensor::zeros([outputs])?,
        )
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Result<Self> {
        Self::new(Tensor::zeros([outputs, inputs])?, Tensor::zeros([outputs])?)
    }

    pub fn inputs(&self) -> usize {
        self.weight.dim(1)
    }

    pub fn outputs(&self) -> usize {
        self.weight.dim(0)
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 2 || x.dim(1) != self.inputs() {
            return Err(Error::Shape(format!(
                "dense layer expects B×{}, got {:?}",
                self.inputs(),
                x.shape()
            )));
        }
        let y = x.matmul_bt(&self.weight)?.add(&self.bias)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, d_out: &Tensor<T>) -> Result<LayerGradients<T>> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        if d_out.shape() != [x.dim(0), self.outputs()] {
            return Err(Error::Shape(format!(
                "dense upstream gradient {:?}, expected [{}, {}]",
                d_out.shape(),
                x.dim(0),
                self.outputs()
            )));
        }
        let d_weight = d_out.matmul_at(x)?;
        let mut d_bias = vec![T::zero(); self.outputs()];
        for row in d_out.data().chunks(self.outputs()) {
            for (acc, &g) in d_bias.iter_mut().zip(row) {
                *acc += g;
            }
        }
        let d_input = d_out.matmul(&self.weight)?;
        Ok(LayerGradients {
            d_params: vec![d_weight, Tensor::from_vec([self.outputs()], d_bias)?],
            d_input,
        })
    }
}
