use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{col2im_into, conv_out_dim, gemm_nn, gemm_nt, gemm_tn, he_init, im2col_into, Tensor};

use super::LayerGradients;

#[derive(Debug, Clone)]
struct ConvCache<T> {
    input_shape: [usize; 4],
    /// One `(C·K·K) × (H'·W')` patch matrix per image, concatenated.
    cols: Vec<T>,
}

/// Valid-padding 2-D cross-correlation lowered to im2col + matmul.
#[derive(Debug, Clone)]
pub struct Conv2D<T> {
    filters: Tensor<T>,
    bias: Tensor<T>,
    stride: usize,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> Conv2D<T> {
    /// `filters` is `[F × C × K × K]`, `bias` is `[F]`.
    pub fn new(filters: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self> {
        match (filters.shape(), bias.shape()) {
            (&[f, _, k, k2], &[b]) if k == k2 && b == f && stride > 0 => Ok(Self {
                filters,
                bias,
                stride,
                cache: None,
            }),
            (fs, bs) => Err(Error::Shape(format!(
                "conv filters {fs:?} / bias {bs:?} / stride {stride} are inconsistent"
            ))),
        }
    }

    pub fn he(rng: &mut Rng, in_channels: usize, filters: usize, kernel: usize) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        Self::new(
            he_init(rng, fan_in, [filters, in_channels, kernel, kernel])?,
            Tensor::zeros([filters])?,
            1,
        )
    }

    pub fn filters(&self) -> usize {
        self.filters.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.filters.dim(1)
    }

    pub fn kernel(&self) -> usize {
        self.filters.dim(2)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        vec![&self.filters, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.filters, &mut self.bias]
    }

    /// Output `[F, H', W']` for a `[C, H, W]` input.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *input {
            [c, h, w] if c == self.in_channels() => Ok(vec![
                self.filters(),
                conv_out_dim(h, self.kernel(), self.stride)?,
                conv_out_dim(w, self.kernel(), self.stride)?,
            ]),
            ref s => Err(Error::Shape(format!(
                "conv expects {}×H×W input, got {s:?}",
                self.in_channels()
            ))),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [b, c, h, w] = match *x.shape() {
            [b, c, h, w] => [b, c, h, w],
            ref s => return Err(Error::Shape(format!("conv expects B×C×H×W, got {s:?}"))),
        };
        let out = self.output_shape(&[c, h, w])?;
        let (f, k, stride) = (self.filters(), self.kernel(), self.stride);
        let (rows, ncols) = (c * k * k, out[1] * out[2]);
        let in_len = c * h * w;
        let per_image: Vec<(Vec<T>, Vec<T>)> = (0..b)
            .into_par_iter()
            .map(|i| {
                let mut cols = vec![T::zero(); rows * ncols];
                im2col_into(&x.data()[i * in_len..(i + 1) * in_len], (c, h, w), k, stride, &mut cols);
                let mut y = vec![T::zero(); f * ncols];
                for (fi, row) in y.chunks_mut(ncols).enumerate() {
                    row.fill(self.bias.data()[fi]);
                }
                gemm_nn(self.filters.data(), &cols, &mut y, f, rows, ncols);
                (cols, y)
            })
            .collect();
        let mut cols_all = Vec::with_capacity(b * rows * ncols);
        let mut y_all = Vec::with_capacity(b * f * ncols);
        for (cols, y) in per_image {
            cols_all.extend_from_slice(&cols);
            y_all.extend_from_slice(&y);
        }
        self.cache = Some(ConvCache {
            input_shape: [b, c, h, w],
            cols: cols_all,
        });
        Tensor::from_vec([b, f, out[1], out[2]], y_all)
    }

    pub fn backward(&mut self, d_out: &Tensor<T>) -> Result<LayerGradients<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("conv backward called before forward".into()))?;
        let [b, c, h, w] = cache.input_shape;
        let out = self.output_shape(&[c, h, w])?;
        let (f, k, stride) = (self.filters(), self.kernel(), self.stride);
        if d_out.shape() != [b, f, out[1], out[2]] {
            return Err(Error::Shape(format!(
                "conv upstream gradient {:?}, expected {:?}",
                d_out.shape(),
                [b, f, out[1], out[2]]
            )));
        }
        let (rows, ncols) = (c * k * k, out[1] * out[2]);
        let in_len = c * h * w;
        let per_image: Vec<(Vec<T>, Vec<T>)> = (0..b)
            .into_par_iter()
            .map(|i| {
                let g = &d_out.data()[i * f * ncols..(i + 1) * f * ncols];
                let cols = &cache.cols[i * rows * ncols..(i + 1) * rows * ncols];
                let mut d_filters = vec![T::zero(); f * rows];
                gemm_nt(g, cols, &mut d_filters, f, ncols, rows);
                let mut d_cols = vec![T::zero(); rows * ncols];
                gemm_tn(self.filters.data(), g, &mut d_cols, f, rows, ncols);
                let mut d_x = vec![T::zero(); in_len];
                col2im_into(&d_cols, (c, h, w), k, stride, &mut d_x);
                (d_filters, d_x)
            })
            .collect();
        let mut d_filters = vec![T::zero(); f * rows];
        let mut d_input = Vec::with_capacity(b * in_len);
        for (df, dx) in &per_image {
            for (acc, &v) in d_filters.iter_mut().zip(df) {
                *acc += v;
            }
            d_input.extend_from_slice(dx);
        }
        let mut d_bias = vec![T::zero(); f];
        for img in d_out.data().chunks(f * ncols) {
            for (fi, row) in img.chunks(ncols).enumerate() {
                for &v in row {
                    d_bias[fi] += v;
                }
            }
        }
        Ok(LayerGradients {
            d_params: vec![
                Tensor::from_vec(self.filters.shape().to_vec(), d_filters)?,
                Tensor::from_vec([f], d_bias)?,
            ],
            d_input: Tensor::from_vec([b, c, h, w], d_input)?,
        })
    }
}

/// Direct nested-loop convolution used as an independent reference.
pub fn naive_conv2d<T: Scalar>(x: &Tensor<T>, filters: &Tensor<T>, bias: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let (&[b, c, h, w], &[f, fc, k, _]) = (x.shape(), filters.shape()) else {
        return Err(Error::Shape("naive conv expects rank-4 operands".into()));
    };
    if fc != c {
        return Err(Error::Shape("channel mismatch".into()));
    }
    let ho = conv_out_dim(h, k, stride)?;
    let wo = conv_out_dim(w, k, stride)?;
    let (xd, fd) = (x.data(), filters.data());
    let mut out = vec![T::zero(); b * f * ho * wo];
    for n in 0..b {
        for fi in 0..f {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias.data()[fi];
                    for ch in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let xv = xd[((n * c + ch) * h + oy * stride + ky) * w + ox * stride + kx];
                                let wv = fd[((fi * c + ch) * k + ky) * k + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                    out[((n * f + fi) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    Tensor::from_vec([b, f, ho, wo], out)
}
