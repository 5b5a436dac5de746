use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
struct PoolCache<T> {
    input_shape: [usize; 4],
    /// Flat input index of the winning element for every output cell.
    argmax: Vec<usize>,
    /// Smallest gap between a window maximum and the runner-up.
    min_gap: T,
}

/// Max pooling. The recorded winner of a window is its first maximal
/// element in row-major scan order.
#[derive(Debug, Clone)]
pub struct MaxPool2D<T> {
    pool: usize,
    stride: usize,
    cache: Option<PoolCache<T>>,
}

impl<T: Scalar> MaxPool2D<T> {
    pub fn new(pool: usize, stride: usize) -> Result<Self> {
        if pool == 0 || stride == 0 {
            return Err(Error::Config("pool window and stride must be positive".into()));
        }
        Ok(Self {
            pool,
            stride,
            cache: None,
        })
    }

    pub fn pool(&self) -> usize {
        self.pool
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    fn out_dim(&self, n: usize) -> Result<usize> {
        if n < self.pool || !(n - self.pool).is_multiple_of(self.stride) {
            return Err(Error::Shape(format!(
                "spatial extent {n} does not tile into {}-wide windows with stride {}",
                self.pool, self.stride
            )));
        }
        Ok((n - self.pool) / self.stride + 1)
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *input {
            [c, h, w] => Ok(vec![c, self.out_dim(h)?, self.out_dim(w)?]),
            ref s => Err(Error::Shape(format!("pool expects C×H×W, got {s:?}"))),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [b, c, h, w] = match *x.shape() {
            [b, c, h, w] => [b, c, h, w],
            ref s => return Err(Error::Shape(format!("pool expects B×C×H×W, got {s:?}"))),
        };
        let (ho, wo) = (self.out_dim(h)?, self.out_dim(w)?);
        let xd = x.data();
        let mut out = Vec::with_capacity(b * c * ho * wo);
        let mut argmax = Vec::with_capacity(b * c * ho * wo);
        let mut min_gap = T::infinity();
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * self.stride * w + ox * self.stride;
                    let mut runner_up = T::neg_infinity();
                    for ky in 0..self.pool {
                        for kx in 0..self.pool {
                            let idx = base + (oy * self.stride + ky) * w + ox * self.stride + kx;
                            if idx == best {
                                continue;
                            }
                            if xd[idx] > xd[best] {
                                runner_up = xd[best];
                                best = idx;
                            } else if xd[idx] > runner_up {
                                runner_up = xd[idx];
                            }
                        }
                    }
                    if self.pool * self.pool > 1 {
                        min_gap = min_gap.min(xd[best] - runner_up);
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        self.cache = Some(PoolCache {
            input_shape: [b, c, h, w],
            argmax,
            min_gap,
        });
        Tensor::from_vec([b, c, ho, wo], out)
    }

    pub fn backward(&mut self, d_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("max-pool backward called before forward".into()))?;
        if d_out.len() != cache.argmax.len() {
            return Err(Error::Shape(format!(
                "max-pool upstream gradient {:?} does not match cached output",
                d_out.shape()
            )));
        }
        let mut d_input = vec![T::zero(); cache.input_shape.iter().product()];
        for (&idx, &g) in cache.argmax.iter().zip(d_out.data()) {
            d_input[idx] += g;
        }
        Tensor::from_vec(cache.input_shape.to_vec(), d_input)
    }

    /// Distance of the last input from a tie between window maxima.
    pub fn tie_margin(&self) -> Option<T> {
        self.cache.as_ref().map(|c| c.min_gap)
    }
}
