use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

fn chw<T: Scalar>(image: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(Error::Shape(format!("expected a C×H×W image, got {s:?}"))),
    }
}

/// Maps byte intensities to `[0, 1]` by dividing by 255.
pub fn normalize<T: Scalar>(raw: &[i32]) -> Result<Vec<T>> {
    raw.iter()
        .map(|&v| {
            if (0..=255).contains(&v) {
                Ok(cast(v as f64 / 255.0))
            } else {
                Err(Error::Validation(format!("pixel value {v} outside 0..=255")))
            }
        })
        .collect()
}

/// Interleaved `H×W×C` bytes to a normalized channel-first tensor.
pub fn hwc_bytes_to_chw<T: Scalar>(bytes: &[u8], h: usize, w: usize, c: usize) -> Result<Tensor<T>> {
    if bytes.len() != h * w * c {
        return Err(Error::Shape(format!(
            "{} bytes for a {h}×{w}×{c} image",
            bytes.len()
        )));
    }
    let mut data = vec![T::zero(); bytes.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data[(ch * h + y) * w + x] = cast(bytes[(y * w + x) * c + ch] as f64 / 255.0);
            }
        }
    }
    Tensor::from_vec([c, h, w], data)
}

/// `a + f·(b − a)` clamped to the span of `a` and `b`.
#[inline]
pub(crate) fn lerp<T: Scalar>(a: T, b: T, f: T) -> T {
    let v = a + f * (b - a);
    v.max(a.min(b)).min(a.max(b))
}

/// Bilinear sample at fractional `(sy, sx)`, which must lie inside the plane.
#[inline]
pub(crate) fn sample_bilinear<T: Scalar>(plane: &[T], h: usize, w: usize, sy: T, sx: T) -> T {
    let y0 = sy.floor().to_usize().unwrap_or(0).min(h - 1);
    let x0 = sx.floor().to_usize().unwrap_or(0).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = sy - cast(y0 as f64);
    let fx = sx - cast(x0 as f64);
    let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], fx);
    let bottom = lerp(plane[y1 * w + x0], plane[y1 * w + x1], fx);
    lerp(top, bottom, fy)
}

/// Corner-aligned source coordinate for output index `i`: output corners
/// map exactly onto input corners.
#[inline]
pub(crate) fn aligned_coord(i: usize, input: usize, output: usize) -> f64 {
    if output == 1 {
        (input - 1) as f64 / 2.0
    } else {
        i as f64 * (input - 1) as f64 / (output - 1) as f64
    }
}

/// Bilinear resize of every channel to `target_h × target_w`.
///
/// Uses the corner-aligned convention: output pixel `i` samples source
/// coordinate `i·(in−1)/(out−1)`. Outputs never leave the source range.
pub fn resize_bilinear<T: Scalar>(image: &Tensor<T>, target_h: usize, target_w: usize) -> Result<Tensor<T>> {
    let (c, h, w) = chw(image)?;
    if target_h == 0 || target_w == 0 {
        return Err(Error::Shape("resize target must be positive".into()));
    }
    if (h, w) == (target_h, target_w) {
        return Ok(image.clone());
    }
    let ys: Vec<T> = (0..target_h).map(|i| cast(aligned_coord(i, h, target_h))).collect();
    let xs: Vec<T> = (0..target_w).map(|i| cast(aligned_coord(i, w, target_w))).collect();
    let mut out = Vec::with_capacity(c * target_h * target_w);
    for ch in 0..c {
        let plane = &image.data()[ch * h * w..(ch + 1) * h * w];
        for &sy in &ys {
            for &sx in &xs {
                out.push(sample_bilinear(plane, h, w, sy, sx));
            }
        }
    }
    Tensor::from_vec([c, target_h, target_w], out)
}

pub fn hflip<T: Scalar>(image: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, _, w) = chw(image)?;
    let mut data = image.data().to_vec();
    for row in data.chunks_mut(w) {
        row.reverse();
    }
    Tensor::from_vec(image.shape().to_vec(), data)
}

pub fn vflip<T: Scalar>(image: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = chw(image)?;
    let src = image.data();
    let mut data = Vec::with_capacity(src.len());
    for ch in 0..c {
        for y in (0..h).rev() {
            let start = (ch * h + y) * w;
            data.extend_from_slice(&src[start..start + w]);
        }
    }
    Tensor::from_vec(image.shape().to_vec(), data)
}

pub fn one_hot<T: Scalar>(label: usize, num_classes: usize) -> Result<Tensor<T>> {
    if label >= num_classes {
        return Err(Error::Validation(format!(
            "label {label} outside {num_classes} classes"
        )));
    }
    let mut t = Tensor::zeros([num_classes])?;
    t.data_mut()[label] = T::one();
    Ok(t)
}

/// `[N × num_classes]` one-hot matrix.
pub fn one_hot_matrix<T: Scalar>(labels: &[usize], num_classes: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(labels.len() * num_classes);
    for &l in labels {
        data.extend_from_slice(one_hot::<T>(l, num_classes)?.data());
    }
    Tensor::from_vec([labels.len(), num_classes], data)
}
