//! Parameter update rules.

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
        }
    }
}

/// Adam hyperparameters. Betas and epsilon are the customary defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

fn check_aligned<T: Scalar>(params: &[&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "parameter {i} has shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Result<Self> {
        if config.learning_rate.is_nan() || config.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate {} must be non-negative",
                config.learning_rate
            )));
        }
        Ok(Self { config })
    }

    pub fn config(&self) -> SgdConfig {
        self.config
    }

    /// `p ← p − lr·g` for every parameter, in order.
    pub fn step<T: Scalar>(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        check_aligned(params, grads)?;
        let lr: T = cast(self.config.learning_rate);
        for (p, g) in params.iter_mut().zip(grads) {
            for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                *pv -= lr * gv;
            }
        }
        Ok(())
    }
}

/// Bias-corrected Adam. Moment buffers are allocated on the first step.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
    timestep: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        let betas_ok = (0.0..1.0).contains(&config.beta1) && (0.0..1.0).contains(&config.beta2);
        let lr_bad = config.learning_rate.is_nan() || config.learning_rate < 0.0;
        if !betas_ok || lr_bad || config.epsilon.is_nan() || config.epsilon <= 0.0 {
            return Err(Error::Config(format!("invalid Adam configuration {config:?}")));
        }
        Ok(Self {
            config,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            timestep: 0,
        })
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.first_moment, &self.second_moment)
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        check_aligned(params, grads)?;
        if self.first_moment.is_empty() {
            self.first_moment = grads.iter().map(Tensor::zeros_like).collect();
            self.second_moment = grads.iter().map(Tensor::zeros_like).collect();
        } else if self.first_moment.len() != grads.len()
            || self.first_moment.iter().zip(grads).any(|(m, g)| m.shape() != g.shape())
        {
            return Err(Error::Shape("gradients do not match Adam moment buffers".into()));
        }
        self.timestep += 1;
        let c = self.config;
        let t = self.timestep as i32;
        let (b1, b2): (T, T) = (cast(c.beta1), cast(c.beta2));
        let correction1: T = cast(1.0 - c.beta1.powi(t));
        let correction2: T = cast(1.0 - c.beta2.powi(t));
        let (lr, eps): (T, T) = (cast(c.learning_rate), cast(c.epsilon));
        let one = T::one();
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let moments = m.data_mut().iter_mut().zip(v.data_mut().iter_mut());
            for ((pv, &gv), (mv, vv)) in p.data_mut().iter_mut().zip(g.data()).zip(moments) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / correction1;
                let v_hat = *vv / correction2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer<T> {
    Sgd(Sgd),
    Adam(Adam<T>),
}

impl<T: Scalar> Optimizer<T> {
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads),
            Optimizer::Adam(o) => o.step(params, grads),
        }
    }
}
