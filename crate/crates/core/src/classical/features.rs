use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

/// Cells per side of the downsampled intensity grid.
pub const GRID: usize = 8;
pub const HIST_BINS: usize = 16;
const CHANNELS: usize = 3;

pub const GRID_LEN: usize = CHANNELS * GRID * GRID;
pub const HIST_LEN: usize = CHANNELS * HIST_BINS;
pub const EDGE_LEN: usize = CHANNELS * 2;
pub const FEATURE_LEN: usize = GRID_LEN + HIST_LEN + EDGE_LEN;

/// Engineered description of one RGB image, laid out as
///
/// * `[0, 192)`: per-channel 8×8 grid of mean intensities (channel-major,
///   then row-major cells),
/// * `[192, 240)`: per-channel 16-bin intensity histogram, each summing to 1,
/// * `[240, 246)`: per channel, mean absolute horizontal then vertical
///   first difference.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T>(Vec<T>);

impl<T: Scalar> FeatureVector<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn grid(&self) -> &[T] {
        &self.0[..GRID_LEN]
    }

    pub fn histograms(&self) -> &[T] {
        &self.0[GRID_LEN..GRID_LEN + HIST_LEN]
    }

    pub fn edges(&self) -> &[T] {
        &self.0[GRID_LEN + HIST_LEN..]
    }
}

pub fn extract_features<T: Scalar>(image: &Tensor<T>) -> Result<FeatureVector<T>> {
    let (h, w) = match *image.shape() {
        [CHANNELS, h, w] => (h, w),
        ref s => return Err(Error::Shape(format!("features expect 3×H×W, got {s:?}"))),
    };
    if h < GRID || w < GRID {
        return Err(Error::Shape(format!(
            "features need at least {GRID}×{GRID} pixels, got {h}×{w}"
        )));
    }
    let data = image.data();
    let mut grid = Vec::with_capacity(GRID_LEN);
    let mut hist = Vec::with_capacity(HIST_LEN);
    let mut edges: Vec<T> = Vec::with_capacity(EDGE_LEN);
    for ch in 0..CHANNELS {
        let plane = &data[ch * h * w..(ch + 1) * h * w];
        for gy in 0..GRID {
            let (y0, y1) = (gy * h / GRID, (gy + 1) * h / GRID);
            for gx in 0..GRID {
                let (x0, x1) = (gx * w / GRID, (gx + 1) * w / GRID);
                let mut acc = 0.0f64;
                for y in y0..y1 {
                    for x in x0..x1 {
                        acc += plane[y * w + x].to_f64().unwrap_or(0.0);
                    }
                }
                grid.push(cast(acc / ((y1 - y0) * (x1 - x0)) as f64));
            }
        }

        let mut counts = [0usize; HIST_BINS];
        for v in plane {
            let v = v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
            counts[((v * HIST_BINS as f64) as usize).min(HIST_BINS - 1)] += 1;
        }
        let total = plane.len() as f64;
        hist.extend(counts.iter().map(|&c| cast::<T>(c as f64 / total)));

        let px = |y: usize, x: usize| plane[y * w + x].to_f64().unwrap_or(0.0);
        let mut horizontal = 0.0;
        for y in 0..h {
            for x in 0..w - 1 {
                horizontal += (px(y, x + 1) - px(y, x)).abs();
            }
        }
        let mut vertical = 0.0;
        for y in 0..h - 1 {
            for x in 0..w {
                vertical += (px(y + 1, x) - px(y, x)).abs();
            }
        }
        edges.push(cast(horizontal / (h * (w - 1)) as f64));
        edges.push(cast(vertical / ((h - 1) * w) as f64));
    }
    grid.extend(hist);
    grid.extend(edges);
    Ok(FeatureVector(grid))
}

/// Features of every image stacked into an `[N × 246]` matrix.
pub fn extract_features_batch<T: Scalar>(images: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(images.len() * FEATURE_LEN);
    for img in images {
        data.extend(extract_features(img)?.into_vec());
    }
    Tensor::from_vec([images.len(), FEATURE_LEN], data)
}
