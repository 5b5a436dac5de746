use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor;

use super::image_ops::{hflip, sample_bilinear, vflip};

/// Random label-preserving transforms applied to training images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    /// Shear angle bound in radians.
    pub shear_max: f64,
    pub zoom_range: (f64, f64),
    /// Shift bound as a fraction of width/height.
    pub shift_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            shear_max: 0.2,
            zoom_range: (0.8, 1.2),
            shift_max: 0.1,
        }
    }
}

impl AugmentConfig {
    /// No-op configuration.
    pub fn identity() -> Self {
        Self {
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            shear_max: 0.0,
            zoom_range: (1.0, 1.0),
            shift_max: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let (lo, hi) = self.zoom_range;
        if !prob(self.hflip_prob) || !prob(self.vflip_prob) {
            return Err(Error::Config("flip probabilities must lie in [0, 1]".into()));
        }
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!("zoom range ({lo}, {hi}) must be positive and ordered")));
        }
        if !(self.shear_max >= 0.0 && self.shift_max >= 0.0) {
            return Err(Error::Config("shear and shift bounds must be non-negative".into()));
        }
        Ok(())
    }
}

/// Parameters drawn for one augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub hflip: bool,
    pub vflip: bool,
    pub shear: f64,
    pub zoom: f64,
    pub shift_x: f64,
    pub shift_y: f64,
}

impl AugmentDraw {
    /// Draws every parameter, always in the same order, so the stream
    /// position after a draw does not depend on the outcomes.
    pub fn sample(cfg: &AugmentConfig, rng: &mut Rng) -> Self {
        let hflip = rng.bernoulli(cfg.hflip_prob);
        let vflip = rng.bernoulli(cfg.vflip_prob);
        let shear = rng.uniform_range(-cfg.shear_max, cfg.shear_max);
        let zoom = rng.uniform_range(cfg.zoom_range.0, cfg.zoom_range.1);
        let shift_x = rng.uniform_range(-cfg.shift_max, cfg.shift_max);
        let shift_y = rng.uniform_range(-cfg.shift_max, cfg.shift_max);
        Self {
            hflip,
            vflip,
            shear,
            zoom,
            shift_x,
            shift_y,
        }
    }

    fn is_identity_affine(&self) -> bool {
        self.shear == 0.0 && self.zoom == 1.0 && self.shift_x == 0.0 && self.shift_y == 0.0
    }
}

/// Random flip, then shear/zoom/shift about the image centre.
///
/// The affine part maps a source point `p` to `Z·S·(p − c) + c + δ`, with
/// `S` a horizontal shear by `tan θ` and `Z` an isotropic zoom; outputs
/// are pulled back through the inverse map, sampled bilinearly, and points
/// that fall outside the source take the nearest edge pixel.
pub fn augment<T: Scalar>(image: &Tensor<T>, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Tensor<T>> {
    apply_draw(image, &AugmentDraw::sample(cfg, rng))
}

pub fn apply_draw<T: Scalar>(image: &Tensor<T>, draw: &AugmentDraw) -> Result<Tensor<T>> {
    let (c, h, w) = match *image.shape() {
        [c, h, w] => (c, h, w),
        ref s => return Err(Error::Shape(format!("augment expects C×H×W, got {s:?}"))),
    };
    let mut out = image.clone();
    if draw.hflip {
        out = hflip(&out)?;
    }
    if draw.vflip {
        out = vflip(&out)?;
    }
    if draw.is_identity_affine() {
        return Ok(out);
    }
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let (dx, dy) = (draw.shift_x * w as f64, draw.shift_y * h as f64);
    let t = draw.shear.tan();
    let z = draw.zoom;
    let mut coords = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let u = x as f64 - cx - dx;
            let v = y as f64 - cy - dy;
            let sx = ((u - t * v) / z + cx).clamp(0.0, (w - 1) as f64);
            let sy = (v / z + cy).clamp(0.0, (h - 1) as f64);
            coords.push((cast::<T>(sy), cast::<T>(sx)));
        }
    }
    let src = out.data();
    let mut data = Vec::with_capacity(src.len());
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        data.extend(coords.iter().map(|&(sy, sx)| sample_bilinear(plane, h, w, sy, sx)));
    }
    Tensor::from_vec([c, h, w], data)
}
