use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

use super::Mode;

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` while
/// training, and inference is the identity.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    rate: f64,
    rng: Rng,
    /// Scaled keep-mask (`0` or `1/(1-rate)`) of the last training forward.
    mask: Option<Vec<T>>,
    /// Reuse the cached mask instead of drawing a new one.
    frozen: bool,
    last_mode: Mode,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self {
            rate,
            rng: Rng::new(seed),
            mask: None,
            frozen: false,
            last_mode: Mode::Eval,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn seed(&self) -> u64 {
        self.rng.seed()
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.last_mode = mode;
        if mode == Mode::Eval {
            return Ok(x.clone());
        }
        let reuse = self.frozen && self.mask.as_ref().is_some_and(|m| m.len() == x.len());
        if !reuse {
            let keep: T = cast(1.0 / (1.0 - self.rate));
            let mask = (0..x.len())
                .map(|_| {
                    if self.rng.bernoulli(self.rate) {
                        T::zero()
                    } else {
                        keep
                    }
                })
                .collect();
            self.mask = Some(mask);
        }
        let mask = self.mask.as_ref().expect("mask drawn above");
        let data = x.data().iter().zip(mask).map(|(&v, &m)| v * m).collect();
        Tensor::from_vec(x.shape().to_vec(), data)
    }

    pub fn backward(&mut self, d_out: &Tensor<T>) -> Result<Tensor<T>> {
        if self.last_mode == Mode::Eval {
            return Ok(d_out.clone());
        }
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::State("dropout backward called before forward".into()))?;
        if mask.len() != d_out.len() {
            return Err(Error::Shape(format!(
                "dropout upstream gradient {:?} does not match cached mask",
                d_out.shape()
            )));
        }
        let data = d_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
        Tensor::from_vec(d_out.shape().to_vec(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_layer;
    use crate::layers::Layer;
    use crate::tensor::rand_uniform;

    type T64 = Tensor<f64>;

    #[test]
    fn inference_is_identity() {
        let mut d = Dropout::<f64>::new(0.3, 1).unwrap();
        let x: T64 = rand_uniform(&mut Rng::new(1), [4, 5], -1.0, 1.0).unwrap();
        assert_eq!(d.forward(&x, Mode::Eval).unwrap(), x);
        let mut d0 = Dropout::<f64>::new(0.0, 1).unwrap();
        assert_eq!(d0.forward(&x, Mode::Train).unwrap(), x);
    }

    #[test]
    fn invalid_rate() {
        assert!(matches!(Dropout::<f64>::new(1.0, 0), Err(Error::Config(_))));
        assert!(matches!(Dropout::<f64>::new(-0.1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn survivor_statistics() {
        let mut d = Dropout::<f64>::new(0.3, 2024).unwrap();
        let x = T64::full([1_000_000], 1.0).unwrap();
        let y = d.forward(&x, Mode::Train).unwrap();
        let survivors = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e6;
        assert!((survivors - 0.7).abs() < 0.005, "{survivors}");
        let mean = y.sum() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn seeded_training_forward_is_reproducible() {
        let x: T64 = rand_uniform(&mut Rng::new(3), [64], -1.0, 1.0).unwrap();
        let a = Dropout::<f64>::new(0.3, 77).unwrap().forward(&x, Mode::Train).unwrap();
        let b = Dropout::<f64>::new(0.3, 77).unwrap().forward(&x, Mode::Train).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backward_uses_same_mask() {
        let mut d = Dropout::<f64>::new(0.5, 5).unwrap();
        let x = T64::full([100], 1.0).unwrap();
        let y = d.forward(&x, Mode::Train).unwrap();
        let g = d.backward(&x).unwrap();
        assert_eq!(y, g);
    }

    #[test]
    fn frozen_mask_gradient_check() {
        for seed in 0..5 {
            let mut rng = Rng::new(seed);
            let x = rand_uniform(&mut rng, [3, 10], -1.0, 1.0).unwrap();
            let mut d = Dropout::<f64>::new(0.3, seed).unwrap();
            d.set_frozen(true);
            let err = check_layer(Layer::Dropout(d), &x, &mut rng).unwrap().max_error();
            assert!(err < 1e-8, "{err}");
        }
    }
}
