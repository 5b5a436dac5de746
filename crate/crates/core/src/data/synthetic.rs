//! Seeded synthetic datasets used by the overfit and benchmark checks, and a
//! writer that lays any dataset out as a class-per-directory PNG tree.

use std::fs;
use std::path::Path;

use super::{Dataset, RoadGrade};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

const SOLID_COLORS: [[f64; 3]; 4] = [
    [0.85, 0.20, 0.20],
    [0.20, 0.75, 0.25],
    [0.20, 0.30, 0.85],
    [0.90, 0.85, 0.20],
];

/// `per_class` images per grade, each a fixed class color with ±0.05
/// per-pixel jitter.
pub fn solid_colors<T: Scalar>(per_class: usize, size: usize, seed: u64) -> Result<Dataset<T>> {
    let mut rng = Rng::new(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (class, color) in SOLID_COLORS.iter().enumerate() {
        for _ in 0..per_class {
            let mut data = Vec::with_capacity(3 * size * size);
            for &base in color {
                for _ in 0..size * size {
                    let v = base + rng.uniform_range(-0.05, 0.05);
                    data.push(cast::<T>(v.clamp(0.0, 1.0)));
                }
            }
            images.push(Tensor::from_vec([3, size, size], data)?);
            labels.push(class);
        }
    }
    Dataset::new(images, labels, RoadGrade::names())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    Stripes,
    Checker,
    Noise,
    Flat,
}

impl Texture {
    pub const ALL: [Texture; 4] = [Texture::Stripes, Texture::Checker, Texture::Noise, Texture::Flat];
}

fn random_color(rng: &mut Rng, lo: f64, hi: f64) -> [f64; 3] {
    [rng.uniform_range(lo, hi), rng.uniform_range(lo, hi), rng.uniform_range(lo, hi)]
}

/// Pattern intensity in `[0, 1]` at pixel `(y, x)`.
fn pattern(texture: Texture, rng: &mut Rng, size: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(size * size);
    match texture {
        Texture::Stripes => {
            let period = 4 + rng.below(5);
            let phase = rng.below(period);
            let vertical = rng.bernoulli(0.5);
            for y in 0..size {
                for x in 0..size {
                    let t = if vertical { x } else { y };
                    out.push(if (t + phase) % period < period / 2 { 1.0 } else { 0.0 });
                }
            }
        }
        Texture::Checker => {
            let cell = 2 + rng.below(4);
            let (py, px) = (rng.below(cell * 2), rng.below(cell * 2));
            for y in 0..size {
                for x in 0..size {
                    out.push((((y + py) / cell + (x + px) / cell) % 2) as f64);
                }
            }
        }
        Texture::Noise => {
            for _ in 0..size * size {
                out.push(rng.uniform());
            }
        }
        Texture::Flat => {
            for _ in 0..size * size {
                out.push(0.5 + rng.uniform_range(-0.03, 0.03));
            }
        }
    }
    out
}

/// One textured image: the pattern blends a random dark color with a
/// random light one, in random order.
pub fn texture_image<T: Scalar>(texture: Texture, size: usize, rng: &mut Rng) -> Result<Tensor<T>> {
    let mut a = random_color(rng, 0.0, 0.4);
    let mut b = random_color(rng, 0.6, 1.0);
    if rng.bernoulli(0.5) {
        std::mem::swap(&mut a, &mut b);
    }
    let p = pattern(texture, rng, size);
    let mut data = Vec::with_capacity(3 * size * size);
    for ch in 0..3 {
        data.extend(p.iter().map(|&t| cast::<T>(a[ch] + t * (b[ch] - a[ch]))));
    }
    Tensor::from_vec([3, size, size], data)
}

/// `count` images cycling through stripes, checker, noise and flat, so each
/// class gets `count / 4` (the first classes absorb any remainder). Colors,
/// periods, orientations and phases are drawn per image.
pub fn textures<T: Scalar>(count: usize, size: usize, seed: u64) -> Result<Dataset<T>> {
    let rng = Rng::new(seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % 4;
        let mut item_rng = rng.derive(&[i as u64]);
        images.push(texture_image(Texture::ALL[class], size, &mut item_rng)?);
        labels.push(class);
    }
    Dataset::new(images, labels, RoadGrade::names())
}

/// Writes `root/<class name>/NNNN.png` for every image (8-bit, rounded).
pub fn write_png_tree<T: Scalar>(dataset: &Dataset<T>, root: &Path) -> Result<()> {
    for (i, (img, &label)) in dataset.images().iter().zip(dataset.labels()).enumerate() {
        let dir = root.join(&dataset.class_names()[label]);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (h, w) = (img.dim(1), img.dim(2));
        let plane = h * w;
        let mut bytes = vec![0u8; 3 * plane];
        for p in 0..plane {
            for c in 0..3 {
                let v = img.data()[c * plane + p].to_f64().unwrap_or(0.0);
                bytes[p * 3 + c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        }
        let buf = image::RgbImage::from_raw(w as u32, h as u32, bytes)
            .ok_or_else(|| Error::Shape("image buffer size mismatch".into()))?;
        let path = dir.join(format!("{i:04}.png"));
        buf.save(&path)
            .map_err(|e| Error::Dataset(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
