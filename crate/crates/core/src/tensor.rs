//! Dense row-major n-dimensional arrays and the primitives every model is
//! built from.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{cast, Scalar};

/// Work (multiply-adds) below which matmul stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Right-hand side of [`Tensor::elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a, T> {
    Tensor(&'a Tensor<T>),
    Scalar(T),
}

impl<'a, T> From<&'a Tensor<T>> for Operand<'a, T> {
    fn from(t: &'a Tensor<T>) -> Self {
        Operand::Tensor(t)
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("empty shape".into()));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero-sized dimension in {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = shape.into();
        let n = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![value; n],
        })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn zeros_like(other: &Tensor<T>) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    pub fn eye(n: usize) -> Result<Self> {
        let mut t = Self::zeros([n, n])?;
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        Ok(t)
    }

    /// Rank-2 tensor from nested rows of `f64` literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| cast(v))).collect();
        Self::from_vec([rows.len(), cols], data)
    }

    pub fn from_slice_f64(shape: impl Into<Vec<usize>>, values: &[f64]) -> Result<Self> {
        Self::from_vec(shape, values.iter().map(|&v| cast(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, new_shape: impl Into<Vec<usize>>) -> Result<Self> {
        self.clone().into_reshape(new_shape)
    }

    pub fn into_reshape(self, new_shape: impl Into<Vec<usize>>) -> Result<Self> {
        let new_shape = new_shape.into();
        let n = check_shape(&new_shape)?;
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) into {new_shape:?} ({n} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Self {
            shape: new_shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Tensor<T>) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "dot of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "compare {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[T] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Index of the first maximum in each row of a rank-2 tensor.
    pub fn argmax_rows(&self) -> Vec<usize> {
        let cols = self.shape[self.rank() - 1];
        self.data
            .chunks(cols)
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Slice along the leading axis: items `start..end`.
    pub fn slice_outer(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape[0] {
            return Err(Error::Shape(format!(
                "outer slice {start}..{end} of {:?}",
                self.shape
            )));
        }
        let stride: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Ok(Self {
            shape,
            data: self.data[start * stride..end * stride].to_vec(),
        })
    }

    /// Stacks equally-shaped tensors along a new leading axis.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape("stack of zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(Error::Shape(format!(
                    "stack of {:?} with {:?}",
                    first.shape, t.shape
                )));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// Elementwise combination with a same-shaped tensor, a scalar, or a
    /// rank-1 tensor broadcast along the last axis.
    pub fn elementwise<'a>(&self, rhs: impl Into<Operand<'a, T>>, op: BinaryOp) -> Result<Self>
    where
        T: 'a,
    {
        let apply = |a: T, b: T| -> Result<T> {
            Ok(match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b == T::zero() {
                        return Err(Error::Numeric("division by zero".into()));
                    }
                    a / b
                }
            })
        };
        let data = match rhs.into() {
            Operand::Scalar(s) => self
                .data
                .iter()
                .map(|&a| apply(a, s))
                .collect::<Result<Vec<_>>>()?,
            Operand::Tensor(b) if b.shape == self.shape => self
                .data
                .iter()
                .zip(&b.data)
                .map(|(&a, &b)| apply(a, b))
                .collect::<Result<Vec<_>>>()?,
            Operand::Tensor(b) => {
                let last = *self.shape.last().unwrap_or(&0);
                let row_vector = match b.shape.as_slice() {
                    [n] => *n == last,
                    [1, n] => *n == last && self.rank() >= 2,
                    _ => false,
                };
                if !row_vector {
                    return Err(Error::Shape(format!(
                        "cannot broadcast {:?} onto {:?}",
                        b.shape, self.shape
                    )));
                }
                self.data
                    .chunks(last)
                    .flat_map(|row| row.iter().zip(&b.data).map(|(&a, &b)| apply(a, b)))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add<'a>(&self, rhs: impl Into<Operand<'a, T>>) -> Result<Self>
    where
        T: 'a,
    {
        self.elementwise(rhs, BinaryOp::Add)
    }

    pub fn sub<'a>(&self, rhs: impl Into<Operand<'a, T>>) -> Result<Self>
    where
        T: 'a,
    {
        self.elementwise(rhs, BinaryOp::Sub)
    }

    pub fn mul<'a>(&self, rhs: impl Into<Operand<'a, T>>) -> Result<Self>
    where
        T: 'a,
    {
        self.elementwise(rhs, BinaryOp::Mul)
    }

    pub fn div<'a>(&self, rhs: impl Into<Operand<'a, T>>) -> Result<Self>
    where
        T: 'a,
    {
        self.elementwise(rhs, BinaryOp::Div)
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "add {:?} into {:?}",
                other.shape, self.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    fn require_matrix(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::Shape(format!("{what} must be rank-2, got {s:?}"))),
        }
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.require_matrix("transpose operand")?;
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data,
        })
    }

    /// `self · other` for rank-2 operands.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Self> {
        let (m, k) = self.require_matrix("matmul lhs")?;
        let (k2, n) = other.require_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_nn(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self · otherᵀ`.
    pub fn matmul_bt(&self, other: &Tensor<T>) -> Result<Self> {
        let (m, k) = self.require_matrix("matmul lhs")?;
        let (n, k2) = other.require_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions differ: {:?} x {:?}ᵀ",
                self.shape, other.shape
            )));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_nt(&self.data, &other.data, &mut out, m, k, n);
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `selfᵀ · other`.
    pub fn matmul_at(&self, other: &Tensor<T>) -> Result<Self> {
        let (k, m) = self.require_matrix("matmul lhs")?;
        let (k2, n) = other.require_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions differ: {:?}ᵀ x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_tn(&self.data, &other.data, &mut out, k, m, n);
        Ok(Self {
            shape: vec![m, n],
            data: out,
        })
    }
}

/// Rows handled together by the axpy-style kernels.
const ROW_BLOCK: usize = 4;
/// Output columns per tile, sized so a block of rows stays in L1.
const COL_TILE: usize = 512;

/// Runs `f(first_row, rows)` over consecutive blocks of up to `ROW_BLOCK`
/// output rows, in parallel when the product is large enough.
fn for_each_block<T: Scalar>(out: &mut [T], n: usize, work: usize, f: impl Fn(usize, &mut [T]) + Sync) {
    if out.is_empty() {
        return;
    }
    let chunk = ROW_BLOCK * n;
    if work >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(chunk).enumerate().for_each(|(b, rows)| f(b * ROW_BLOCK, rows));
    } else {
        out.chunks_mut(chunk).enumerate().for_each(|(b, rows)| f(b * ROW_BLOCK, rows));
    }
}

/// `rows[r][j] += Σ_t coef(i0 + r, t) · b[t][j]`, accumulating in increasing
/// `t` for every element regardless of blocking or threading.
#[inline(always)]
fn axpy_block<T: Scalar>(rows: &mut [T], i0: usize, b: &[T], k: usize, n: usize, coef: impl Fn(usize, usize) -> T) {
    let r = rows.len() / n;
    for j0 in (0..n).step_by(COL_TILE) {
        let j1 = (j0 + COL_TILE).min(n);
        if r == ROW_BLOCK {
            let len = j1 - j0;
            let (r0, rest) = rows.split_at_mut(n);
            let (r1, rest) = rest.split_at_mut(n);
            let (r2, r3) = rest.split_at_mut(n);
            let (r0, r1, r2, r3) = (&mut r0[j0..j1], &mut r1[j0..j1], &mut r2[j0..j1], &mut r3[j0..j1]);
            let brow = |t: usize| &b[t * n + j0..t * n + j0 + len];
            let mut t = 0;
            // Four inner steps per sweep; each element still sees its
            // products added one at a time in increasing t.
            while t + 4 <= k {
                let (b0, b1, b2, b3) = (brow(t), brow(t + 1), brow(t + 2), brow(t + 3));
                let c: [[T; 4]; 4] = std::array::from_fn(|dr| std::array::from_fn(|dt| coef(i0 + dr, t + dt)));
                for j in 0..len {
                    let x = [b0[j], b1[j], b2[j], b3[j]];
                    for (row, cr) in [&mut *r0, &mut *r1, &mut *r2, &mut *r3].into_iter().zip(&c) {
                        let mut v = row[j];
                        v += cr[0] * x[0];
                        v += cr[1] * x[1];
                        v += cr[2] * x[2];
                        v += cr[3] * x[3];
                        row[j] = v;
                    }
                }
                t += 4;
            }
            for t in t..k {
                let (c0, c1, c2, c3) = (coef(i0, t), coef(i0 + 1, t), coef(i0 + 2, t), coef(i0 + 3, t));
                let bt = brow(t);
                let lanes = r0.iter_mut().zip(r1.iter_mut()).zip(r2.iter_mut()).zip(r3.iter_mut());
                for ((((o0, o1), o2), o3), &bv) in lanes.zip(bt) {
                    *o0 += c0 * bv;
                    *o1 += c1 * bv;
                    *o2 += c2 * bv;
                    *o3 += c3 * bv;
                }
            }
        } else {
            for (dr, row) in rows.chunks_mut(n).enumerate() {
                let row = &mut row[j0..j1];
                for t in 0..k {
                    let c = coef(i0 + dr, t);
                    for (o, &bv) in row.iter_mut().zip(&b[t * n + j0..t * n + j1]) {
                        *o += c * bv;
                    }
                }
            }
        }
    }
}

// Blocking and threading only decide which thread computes which output
// element; each element's arithmetic is fixed, so serial and parallel runs
// agree bit for bit.

/// out[m×n] += a[m×k] · b[k×n]
pub(crate) fn gemm_nn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for_each_block(out, n, m * k * n, |i0, rows| axpy_block(rows, i0, b, k, n, |i, t| a[i * k + t]));
}

/// out[m×n] += a[m×k] · b[n×k]ᵀ, via a transposed copy of `b`.
pub(crate) fn gemm_nt<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    let mut bt = vec![T::zero(); k * n];
    for (j, b_row) in b.chunks_exact(k.max(1)).take(n).enumerate() {
        for (t, &v) in b_row.iter().enumerate() {
            bt[t * n + j] = v;
        }
    }
    gemm_nn(a, &bt, out, m, k, n);
}

/// out[m×n] += a[k×m]ᵀ · b[k×n]
pub(crate) fn gemm_tn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], k: usize, m: usize, n: usize) {
    for_each_block(out, n, m * k * n, |i0, rows| axpy_block(rows, i0, b, k, n, |i, t| a[t * m + i]));
}

/// Output extent of a valid window sweep.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Shape("kernel and stride must be positive".into()));
    }
    if kernel > input {
        return Err(Error::Shape(format!(
            "kernel {kernel} larger than input extent {input}"
        )));
    }
    Ok((input - kernel) / stride + 1)
}

/// Slice-level im2col writing into `cols` of length `(c·k·k)·(ho·wo)`.
pub(crate) fn im2col_into<T: Scalar>(
    src: &[T],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    cols: &mut [T],
) {
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let ncols = ho * wo;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let r = (ch * k + ky) * k + kx;
                let dst = &mut cols[r * ncols..(r + 1) * ncols];
                for oy in 0..ho {
                    let src_row = &src[(ch * h + oy * stride + ky) * w..];
                    for ox in 0..wo {
                        dst[oy * wo + ox] = src_row[ox * stride + kx];
                    }
                }
            }
        }
    }
}

/// Slice-level col2im, summing into `dst` of length `c·h·w`.
pub(crate) fn col2im_into<T: Scalar>(
    cols: &[T],
    (c, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    dst: &mut [T],
) {
    let ho = (h - k) / stride + 1;
    let wo = (w - k) / stride + 1;
    let ncols = ho * wo;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let r = (ch * k + ky) * k + kx;
                let src = &cols[r * ncols..(r + 1) * ncols];
                for oy in 0..ho {
                    let base = (ch * h + oy * stride + ky) * w + kx;
                    for ox in 0..wo {
                        dst[base + ox * stride] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

fn chw(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::Shape(format!("expected C×H×W, got {s:?}"))),
    }
}

/// Lowers a `C×H×W` image into a `(C·K·K) × (H_out·W_out)` patch matrix.
///
/// Column `j` is the receptive field of output position `j` (row-major over
/// the output grid); rows run channel-major, then row-major within a patch.
pub fn im2col<T: Scalar>(input: &Tensor<T>, kernel: usize, stride: usize) -> Result<Tensor<T>> {
    let (c, h, w) = chw(input.shape())?;
    let ho = conv_out_dim(h, kernel, stride)?;
    let wo = conv_out_dim(w, kernel, stride)?;
    let rows = c * kernel * kernel;
    let mut cols = vec![T::zero(); rows * ho * wo];
    im2col_into(input.data(), (c, h, w), kernel, stride, &mut cols);
    Tensor::from_vec([rows, ho * wo], cols)
}

/// Adjoint of [`im2col`]: overlapping patch entries are summed back.
pub fn col2im<T: Scalar>(
    cols: &Tensor<T>,
    input_shape: &[usize],
    kernel: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = chw(input_shape)?;
    let ho = conv_out_dim(h, kernel, stride)?;
    let wo = conv_out_dim(w, kernel, stride)?;
    let expected = [c * kernel * kernel, ho * wo];
    if cols.shape() != expected {
        return Err(Error::Shape(format!(
            "col2im expects {expected:?} for input {input_shape:?}, got {:?}",
            cols.shape()
        )));
    }
    let mut out = vec![T::zero(); c * h * w];
    col2im_into(cols.data(), (c, h, w), kernel, stride, &mut out);
    Tensor::from_vec([c, h, w], out)
}

pub fn rand_uniform<T: Scalar>(
    rng: &mut Rng,
    shape: impl Into<Vec<usize>>,
    lo: f64,
    hi: f64,
) -> Result<Tensor<T>> {
    let shape = shape.into();
    let n = check_shape(&shape)?;
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(Error::Config(format!("uniform range [{lo}, {hi}) is empty")));
    }
    let data = (0..n)
        .map(|_| {
            let v = cast::<T>(rng.uniform_range(lo, hi));
            // f32 rounding can land exactly on `hi`
            if v.to_f64().unwrap_or(hi) >= hi {
                cast(lo)
            } else {
                v
            }
        })
        .collect();
    Tensor::from_vec(shape, data)
}

/// He-normal draws: `Normal(0, sqrt(2 / fan_in))`.
pub fn he_init<T: Scalar>(
    rng: &mut Rng,
    fan_in: usize,
    shape: impl Into<Vec<usize>>,
) -> Result<Tensor<T>> {
    let shape = shape.into();
    let n = check_shape(&shape)?;
    if fan_in == 0 {
        return Err(Error::Config("fan_in must be at least 1".into()));
    }
    let std = (2.0 / fan_in as f64).sqrt();
    let data = (0..n).map(|_| cast(rng.normal() * std)).collect();
    Tensor::from_vec(shape, data)
}
